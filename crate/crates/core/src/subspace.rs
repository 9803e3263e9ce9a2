//! PCA and LDA dimensionality reduction.
//!
//! Sample matrices hold one sample per row. PCA switches to the `n x n` Gram
//! matrix when there are more dimensions than samples. LDA first projects onto
//! `n - C` principal axes so the within-class scatter is non-singular, then
//! solves the generalized eigenproblem `S_b w = lambda S_w w` through a
//! Cholesky whitening of the (slightly regularized) within-class scatter.
//!
//! Every component's largest-magnitude entry is made positive.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const FORMAT_TAG: &str = "# sph-subspace v1";

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// One orthonormal component per row (`d x dims`).
    pub components: DMatrix<f64>,
    /// Sample variance along each component, descending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub pca: PcaModel,
    /// Discriminant directions in PCA space, one per row (`d x p`).
    pub projection: DMatrix<f64>,
}

/// Eigen-decomposition of a symmetric matrix, sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Orthonormalizes `rows` in place (modified Gram-Schmidt). Rows that vanish
/// are replaced by the first standard basis vector independent of the others.
fn orthonormalize_rows(rows: &mut [Vec<f64>]) {
    let dims = rows.first().map_or(0, Vec::len);
    let mut basis_candidate = 0;
    for i in 0..rows.len() {
        loop {
            let (done, rest) = rows.split_at_mut(i);
            let row = &mut rest[0];
            for prev in done.iter() {
                let dot: f64 = prev.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                row.iter_mut().zip(prev).for_each(|(r, p)| *r -= dot * p);
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-10 {
                row.iter_mut().for_each(|x| *x /= norm);
                break;
            }
            assert!(basis_candidate < dims, "cannot complete orthonormal basis");
            row.iter_mut().for_each(|x| *x = 0.0);
            row[basis_candidate] = 1.0;
            basis_candidate += 1;
        }
    }
}

fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub fn fit_pca(x: &DMatrix<f64>, d: usize) -> Result<PcaModel> {
    let (n, dims) = x.shape();
    if n < 2 {
        return Err(Error::Params(format!("PCA needs at least 2 samples, got {n}")));
    }
    let max_d = (n - 1).min(dims);
    if d == 0 || d > max_d {
        return Err(Error::Params(format!(
            "PCA target dimension {d} outside 1..={max_d}"
        )));
    }
    let mean = column_mean(x);
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (n - 1) as f64;

    let (eigenvalues, mut rows): (Vec<f64>, Vec<Vec<f64>>) = if dims <= n {
        let cov = centered.tr_mul(&centered) / denom;
        let (values, vectors) = sorted_eigen(cov);
        (
            values[..d].to_vec(),
            (0..d).map(|j| vectors.column(j).iter().copied().collect()).collect(),
        )
    } else {
        // Gram trick: X X^T u = s u  =>  X^T u / sqrt(s) is a unit eigenvector
        // of X^T X with the same eigenvalue.
        let gram = &centered * centered.transpose();
        let (values, vectors) = sorted_eigen(gram);
        let tol = 1e-12 * values[0].abs().max(f64::MIN_POSITIVE);
        let rows = (0..d)
            .map(|j| {
                if values[j] > tol {
                    let v = centered.tr_mul(&vectors.column(j)) / values[j].sqrt();
                    v.iter().copied().collect()
                } else {
                    vec![0.0; dims]
                }
            })
            .collect();
        (values[..d].iter().map(|s| s / denom).collect(), rows)
    };

    let eigenvalues: Vec<f64> = eigenvalues.into_iter().map(|v| v.max(0.0)).collect();
    if eigenvalues.iter().all(|&v| v == 0.0) {
        log::warn!("PCA input has zero variance; components are an arbitrary basis");
    }
    orthonormalize_rows(&mut rows);
    rows.iter_mut().for_each(|r| fix_sign(r));
    let components = DMatrix::from_fn(d, dims, |r, c| rows[r][c]);
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

impl PcaModel {
    pub fn input_dims(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dims(&self) -> usize {
        self.components.nrows()
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dims(self.input_dims(), x.len())?;
        Ok(&self.components * (x - &self.mean))
    }

    /// Projects every row of `x`.
    pub fn project_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dims(self.input_dims(), x.ncols())?;
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.components.transpose())
    }
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Largest LDA output dimension available for `n` samples in `classes`
/// classes with `dims` input features.
pub fn lda_max_dims(n: usize, classes: usize, dims: usize) -> usize {
    (classes.saturating_sub(1)).min(lda_pca_dims(n, classes, dims))
}

fn lda_pca_dims(n: usize, classes: usize, dims: usize) -> usize {
    let p = if n > classes { n - classes } else { n.saturating_sub(1) };
    p.min(dims)
}

/// Fits a Fisher discriminant projection with `d <= C - 1` outputs.
///
/// When every class has a single sample the within-class scatter is empty;
/// it is then replaced by a small multiple of the identity, which reduces LDA
/// to PCA on the class means.
pub fn fit_lda(x: &DMatrix<f64>, labels: &[usize], d: usize) -> Result<LdaModel> {
    let (n, dims) = x.shape();
    check_dims(n, labels.len())?;
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let c = classes.len();
    if c < 2 {
        return Err(Error::Params("LDA needs at least two classes".into()));
    }
    if d == 0 || d > c - 1 {
        return Err(Error::Params(format!(
            "LDA target dimension {d} outside 1..={}",
            c - 1
        )));
    }
    let p = lda_pca_dims(n, c, dims);
    if d > p {
        return Err(Error::Params(format!(
            "LDA target dimension {d} exceeds the {p} dimensions left after PCA"
        )));
    }
    let pca = fit_pca(x, p)?;
    let y = pca.project_rows(x)?;

    let overall = column_mean(&y);
    let mut sw = DMatrix::<f64>::zeros(p, p);
    let mut sb = DMatrix::<f64>::zeros(p, p);
    for &class in &classes {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let mut mu = DVector::<f64>::zeros(p);
        for &i in &idx {
            mu += y.row(i).transpose();
        }
        mu /= idx.len() as f64;
        for &i in &idx {
            let diff = y.row(i).transpose() - &mu;
            sw += &diff * diff.transpose();
        }
        let diff = &mu - &overall;
        sb += (&diff * diff.transpose()) * idx.len() as f64;
    }

    let trace_w = sw.trace();
    let gamma = if trace_w > 0.0 {
        1e-6 * trace_w / p as f64
    } else {
        log::warn!("within-class scatter is empty (one sample per class); regularizing");
        let trace_b = sb.trace();
        if trace_b > 0.0 {
            1e-6 * trace_b / p as f64
        } else {
            1.0
        }
    };
    for i in 0..p {
        sw[(i, i)] += gamma;
    }

    let chol = sw
        .cholesky()
        .ok_or_else(|| Error::Numerical("within-class scatter not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut whitened = &l_inv * sb * l_inv.transpose();
    // symmetrize against rounding
    whitened = (&whitened + whitened.transpose()) * 0.5;
    let (_, vectors) = sorted_eigen(whitened);
    let directions = l_inv.transpose() * vectors.columns(0, d);

    let mut projection = DMatrix::<f64>::zeros(d, p);
    for j in 0..d {
        let mut w: Vec<f64> = directions.column(j).iter().copied().collect();
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.iter_mut().for_each(|v| *v /= norm);
        fix_sign(&mut w);
        projection.row_mut(j).copy_from_slice(&w);
    }
    Ok(LdaModel { pca, projection })
}

impl LdaModel {
    pub fn input_dims(&self) -> usize {
        self.pca.input_dims()
    }

    pub fn output_dims(&self) -> usize {
        self.projection.nrows()
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.projection * self.pca.project(x)?)
    }

    pub fn project_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.pca.project_rows(x)? * self.projection.transpose())
    }
}

/// A fitted reduction step, or the identity.
#[derive(Debug, Clone, PartialEq)]
pub enum Reducer {
    Identity { dims: usize },
    Pca(PcaModel),
    Lda(LdaModel),
}

impl Reducer {
    pub fn input_dims(&self) -> usize {
        match self {
            Reducer::Identity { dims } => *dims,
            Reducer::Pca(m) => m.input_dims(),
            Reducer::Lda(m) => m.input_dims(),
        }
    }

    pub fn output_dims(&self) -> usize {
        match self {
            Reducer::Identity { dims } => *dims,
            Reducer::Pca(m) => m.output_dims(),
            Reducer::Lda(m) => m.output_dims(),
        }
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Reducer::Identity { dims } => {
                check_dims(*dims, x.len())?;
                Ok(x.clone())
            }
            Reducer::Pca(m) => m.project(x),
            Reducer::Lda(m) => m.project(x),
        }
    }

    pub fn project_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Reducer::Identity { dims } => {
                check_dims(*dims, x.ncols())?;
                Ok(x.clone())
            }
            Reducer::Pca(m) => m.project_rows(x),
            Reducer::Lda(m) => m.project_rows(x),
        }
    }

    /// Writes the model as a line-oriented CSV dump:
    ///
    /// ```text
    /// # sph-subspace v1 <identity|pca|lda>
    /// input_dims,<n>
    /// mean,<values...>            (pca, lda)
    /// eigenvalues,<values...>     (pca, lda)
    /// component,<values...>       (one line per PCA component)
    /// discriminant,<values...>    (lda: one line per direction, in PCA space)
    /// ```
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        let io = |e| Error::io("<model output>", e);
        let kind = match self {
            Reducer::Identity { .. } => "identity",
            Reducer::Pca(_) => "pca",
            Reducer::Lda(_) => "lda",
        };
        writeln!(out, "{FORMAT_TAG} {kind}").map_err(io)?;
        writeln!(out, "input_dims,{}", self.input_dims()).map_err(io)?;
        let line = |out: &mut dyn Write, tag: &str, vals: &mut dyn Iterator<Item = f64>| {
            let body: Vec<String> = vals.map(|v| v.to_string()).collect();
            writeln!(out, "{tag},{}", body.join(",")).map_err(io)
        };
        let pca = match self {
            Reducer::Identity { .. } => None,
            Reducer::Pca(m) => Some(m),
            Reducer::Lda(m) => Some(&m.pca),
        };
        if let Some(m) = pca {
            line(&mut out, "mean", &mut m.mean.iter().copied())?;
            line(&mut out, "eigenvalues", &mut m.eigenvalues.iter().copied())?;
            for row in m.components.row_iter() {
                line(&mut out, "component", &mut row.iter().copied())?;
            }
        }
        if let Reducer::Lda(m) = self {
            for row in m.projection.row_iter() {
                line(&mut out, "discriminant", &mut row.iter().copied())?;
            }
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Reducer> {
        let bad = |msg: &str| Error::Format(format!("subspace model: {msg}"));
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file"))?
            .map_err(|e| Error::io("<model input>", e))?;
        let kind = header
            .strip_prefix(FORMAT_TAG)
            .map(str::trim)
            .ok_or_else(|| bad("missing version header"))?
            .to_string();
        let mut input_dims = None;
        let mut mean = Vec::new();
        let mut eigenvalues = Vec::new();
        let mut components: Vec<Vec<f64>> = Vec::new();
        let mut discriminants: Vec<Vec<f64>> = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io("<model input>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let tag = fields.next().unwrap_or_default();
            let values = fields
                .filter(|f| !f.is_empty())
                .map(|f| f.trim().parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<Vec<f64>>>()?;
            match tag {
                "input_dims" => input_dims = values.first().map(|&v| v as usize),
                "mean" => mean = values,
                "eigenvalues" => eigenvalues = values,
                "component" => components.push(values),
                "discriminant" => discriminants.push(values),
                other => return Err(bad(&format!("unknown record {other:?}"))),
            }
        }
        let dims = input_dims.ok_or_else(|| bad("missing input_dims"))?;
        let matrix = |rows: &[Vec<f64>], width: usize| -> Result<DMatrix<f64>> {
            if rows.iter().any(|r| r.len() != width) {
                return Err(bad("ragged rows"));
            }
            Ok(DMatrix::from_fn(rows.len(), width, |r, c| rows[r][c]))
        };
        let pca = || -> Result<PcaModel> {
            if mean.len() != dims || eigenvalues.len() != components.len() {
                return Err(bad("inconsistent PCA section"));
            }
            Ok(PcaModel {
                mean: DVector::from_vec(mean.clone()),
                components: matrix(&components, dims)?,
                eigenvalues: eigenvalues.clone(),
            })
        };
        match kind.as_str() {
            "identity" => Ok(Reducer::Identity { dims }),
            "pca" => Ok(Reducer::Pca(pca()?)),
            "lda" => {
                let pca = pca()?;
                let projection = matrix(&discriminants, pca.output_dims())?;
                Ok(Reducer::Lda(LdaModel { pca, projection }))
            }
            other => Err(bad(&format!("unknown model kind {other:?}"))),
        }
    }
}
