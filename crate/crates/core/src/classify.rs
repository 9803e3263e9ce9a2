//! Nearest-neighbour (NNC) and collaborative-representation (CRC)
//! classifiers.
//!
//! NNC works on the features as given. CRC L2-normalizes every gallery vector,
//! codes the query over the whole gallery with a ridge penalty and picks the
//! class with the smallest regularized residual `||y - X_c a_c|| / ||a_c||`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default ridge penalty for CRC.
pub const DEFAULT_LAMBDA: f64 = 1e-3;

/// Training vectors (one per column) and their labels.
#[derive(Debug, Clone)]
pub struct Gallery {
    vectors: DMatrix<f64>,
    labels: Vec<usize>,
    /// Sorted distinct labels.
    classes: Vec<usize>,
    /// Column indices of each entry of `classes`.
    members: Vec<Vec<usize>>,
}

impl Gallery {
    /// Builds a gallery from a sample-per-row matrix.
    pub fn from_rows(rows: &DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        Self::from_columns(rows.transpose(), labels)
    }

    pub fn from_columns(vectors: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if vectors.ncols() == 0 {
            return Err(Error::Params("gallery is empty".into()));
        }
        if vectors.ncols() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.ncols(),
                actual: labels.len(),
            });
        }
        let mut classes = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        let members = classes
            .iter()
            .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
            .collect();
        Ok(Gallery {
            vectors,
            labels,
            classes,
            members,
        })
    }

    pub fn dims(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    fn check(&self, query: &DVector<f64>) -> Result<()> {
        if query.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: query.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    /// NNC: Euclidean distance to the nearest vector. CRC: winning residual.
    pub score: f64,
    /// CRC only: `(class, regularized residual)` for every class.
    pub class_scores: Option<Vec<(usize, f64)>>,
}

/// Label of the Euclidean-nearest gallery vector; ties go to the lowest
/// sample index.
pub fn nnc_classify(gallery: &Gallery, query: &DVector<f64>) -> Result<Prediction> {
    gallery.check(query)?;
    let mut best = (0, f64::INFINITY);
    for (i, col) in gallery.vectors.column_iter().enumerate() {
        let d2: f64 = col.iter().zip(query.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    Ok(Prediction {
        label: gallery.labels[best.0],
        score: best.1.sqrt(),
        class_scores: None,
    })
}

/// CRC with the ridge projector `(X^T X + lambda I)^-1 X^T` precomputed.
#[derive(Debug, Clone)]
pub struct CrcClassifier {
    gallery: Gallery,
    normalized: DMatrix<f64>,
    projector: DMatrix<f64>,
    lambda: f64,
}

impl CrcClassifier {
    pub fn new(gallery: Gallery, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Params(format!("CRC lambda must be > 0, got {lambda}")));
        }
        let mut normalized = gallery.vectors.clone();
        for mut col in normalized.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        let n = normalized.ncols();
        let mut gram = normalized.tr_mul(&normalized);
        for i in 0..n {
            gram[(i, i)] += lambda;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("CRC normal matrix not positive definite".into()))?;
        let projector = chol.solve(&normalized.transpose());
        Ok(CrcClassifier {
            gallery,
            normalized,
            projector,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gallery(&self) -> &Gallery {
        &self.gallery
    }

    /// Gallery vectors after L2 normalization, one per column.
    pub fn dictionary(&self) -> &DMatrix<f64> {
        &self.normalized
    }

    /// Ridge coding coefficients of `query` over the normalized gallery.
    pub fn code(&self, query: &DVector<f64>) -> Result<DVector<f64>> {
        self.gallery.check(query)?;
        Ok(&self.projector * query)
    }

    pub fn classify(&self, query: &DVector<f64>) -> Result<Prediction> {
        let alpha = self.code(query)?;
        let mut scores = Vec::with_capacity(self.gallery.classes.len());
        for (&class, members) in self.gallery.classes.iter().zip(&self.gallery.members) {
            let mut recon = DVector::<f64>::zeros(query.len());
            let mut coef_norm2 = 0.0;
            for &i in members {
                recon.axpy(alpha[i], &self.normalized.column(i), 1.0);
                coef_norm2 += alpha[i] * alpha[i];
            }
            let residual = (query - recon).norm();
            let score = if coef_norm2 > 0.0 {
                residual / coef_norm2.sqrt()
            } else {
                f64::INFINITY
            };
            scores.push((class, score));
        }
        let (label, score) = scores
            .iter()
            .copied()
            .fold((scores[0].0, f64::INFINITY), |best, (c, s)| {
                if s < best.1 {
                    (c, s)
                } else {
                    best
                }
            });
        Ok(Prediction {
            label,
            score,
            class_scores: Some(scores),
        })
    }
}

/// One-shot CRC; prefer [`CrcClassifier`] when classifying many queries.
pub fn crc_classify(gallery: &Gallery, query: &DVector<f64>, lambda: f64) -> Result<Prediction> {
    CrcClassifier::new(gallery.clone(), lambda)?.classify(query)
}

/// Fraction of predictions equal to the ground truth.
pub fn evaluate(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Params("no predictions to evaluate".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}
