//! Extraction, reduction and classification over a split protocol.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::classify::{evaluate, nnc_classify, CrcClassifier, Gallery};
use crate::error::{Error, Result};
use crate::experiments::config::{ClassifierKind, ExperimentConfig, ReducerKind};
use crate::features::{extract_all, with_jobs, FeatureSpec};
use crate::imageio::{load_dataset, Dataset};
use crate::subspace::{fit_lda, fit_pca, lda_max_dims, Reducer};

/// Outcome of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub feature_dims: usize,
    /// Output dimension of the reducer in each fold.
    pub reduced_dims: Vec<usize>,
    /// `(train, test)` sample counts per fold.
    pub fold_sizes: Vec<(usize, usize)>,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation of the fold accuracies (0 for one fold).
    pub std: f64,
    pub extraction_secs: f64,
    pub classification_secs: f64,
}

impl ResultRecord {
    /// Equality ignoring wall-clock timings.
    pub fn same_outcome(&self, other: &ResultRecord) -> bool {
        self.config == other.config
            && self.feature_dims == other.feature_dims
            && self.reduced_dims == other.reduced_dims
            && self.fold_sizes == other.fold_sizes
            && self.fold_accuracies == other.fold_accuracies
            && self.mean == other.mean
            && self.std == other.std
    }

    /// `mean±std%`, e.g. `82.06±4.50%`.
    pub fn summary(&self) -> String {
        format!("{:.2}±{:.2}%", 100.0 * self.mean, 100.0 * self.std)
    }

    pub fn csv_header() -> &'static [&'static str] {
        &[
            "feature",
            "scales",
            "reducer",
            "dims",
            "classifier",
            "lambda",
            "protocol",
            "feature_dims",
            "reduced_dims",
            "fold_accuracies",
            "mean",
            "std",
            "extraction_secs",
            "classification_secs",
        ]
    }

    pub fn csv_row(&self) -> Vec<String> {
        let c = &self.config;
        let spec = c.feature_spec().ok();
        let scales = spec
            .map(|s| s.scales.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        let protocol = c
            .split_protocol()
            .map(|p| p.to_string())
            .unwrap_or_else(|_| c.protocol.to_string());
        let join = |v: Vec<String>| v.join(";");
        vec![
            c.feature.to_string(),
            scales,
            c.reducer.to_string(),
            c.dims.map(|d| d.to_string()).unwrap_or_else(|| "max".into()),
            c.classifier.to_string(),
            c.lambda.to_string(),
            protocol,
            self.feature_dims.to_string(),
            join(self.reduced_dims.iter().map(|d| d.to_string()).collect()),
            join(self.fold_accuracies.iter().map(|a| a.to_string()).collect()),
            self.mean.to_string(),
            self.std.to_string(),
            format!("{:.6}", self.extraction_secs),
            format!("{:.6}", self.classification_secs),
        ]
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Extracted features keyed by feature description, so sweeps and repeated
/// runs over one dataset extract each configuration once.
#[derive(Debug, Default)]
pub struct FeatureCache {
    entries: HashMap<String, Arc<Vec<Vec<f64>>>>,
}

impl FeatureCache {
    pub fn get_or_extract(
        &mut self,
        dataset: &Dataset,
        spec: &FeatureSpec,
        jobs: Option<usize>,
    ) -> Result<Arc<Vec<Vec<f64>>>> {
        let key = spec.describe();
        if let Some(f) = self.entries.get(&key) {
            return Ok(Arc::clone(f));
        }
        let features = Arc::new(extract_all(dataset, spec, jobs)?);
        self.entries.insert(key, Arc::clone(&features));
        Ok(features)
    }
}

/// Loads the configured dataset and runs the pipeline on it.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<ResultRecord> {
    let root = config
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset given".into()))?;
    let dataset = load_configured_dataset(config, root)?;
    run_on_dataset(&dataset, config)
}

pub fn load_configured_dataset(config: &ExperimentConfig, root: &std::path::Path) -> Result<Dataset> {
    let mut dataset = load_dataset(root)?;
    config.preprocess.apply(&mut dataset)?;
    Ok(dataset)
}

pub fn run_on_dataset(dataset: &Dataset, config: &ExperimentConfig) -> Result<ResultRecord> {
    run_with_cache(dataset, config, &mut FeatureCache::default())
}

pub fn run_with_cache(
    dataset: &Dataset,
    config: &ExperimentConfig,
    cache: &mut FeatureCache,
) -> Result<ResultRecord> {
    config.validate()?;
    let spec = config.feature_spec()?;
    let splits = config.split_protocol()?.splits(dataset)?;

    let start = Instant::now();
    let features = cache.get_or_extract(dataset, &spec, config.jobs)?;
    let extraction_secs = start.elapsed().as_secs_f64();
    let feature_dims = features.first().map_or(0, Vec::len);
    let labels = dataset.labels();

    let start = Instant::now();
    let mut reduced_dims = Vec::with_capacity(splits.len());
    let mut fold_sizes = Vec::with_capacity(splits.len());
    let mut fold_accuracies = Vec::with_capacity(splits.len());
    for (fold, split) in splits.iter().enumerate() {
        let (dims, accuracy) = run_fold(&features, &labels, &split.train, &split.test, config)
            .map_err(|e| e.context(format!("fold {}", fold + 1)))?;
        log::info!(
            "fold {}: train {}, test {}, dims {dims}, accuracy {:.4}",
            fold + 1,
            split.train.len(),
            split.test.len(),
            accuracy
        );
        reduced_dims.push(dims);
        fold_sizes.push((split.train.len(), split.test.len()));
        fold_accuracies.push(accuracy);
    }
    let classification_secs = start.elapsed().as_secs_f64();
    let (mean, std) = mean_std(&fold_accuracies);
    Ok(ResultRecord {
        config: config.clone(),
        feature_dims,
        reduced_dims,
        fold_sizes,
        fold_accuracies,
        mean,
        std,
        extraction_secs,
        classification_secs,
    })
}

fn rows(features: &[Vec<f64>], idx: &[usize]) -> DMatrix<f64> {
    let dims = features[idx[0]].len();
    DMatrix::from_fn(idx.len(), dims, |r, c| features[idx[r]][c])
}

/// Fits the reducer on the training samples and returns `(output dims, accuracy)`.
fn run_fold(
    features: &[Vec<f64>],
    labels: &[usize],
    train: &[usize],
    test: &[usize],
    config: &ExperimentConfig,
) -> Result<(usize, f64)> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Protocol("fold has an empty train or test set".into()));
    }
    let x_train = rows(features, train);
    let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let (n, dims) = x_train.shape();

    let reducer = match config.reducer {
        ReducerKind::None => Reducer::Identity { dims },
        ReducerKind::Pca => {
            let max = n.saturating_sub(1).min(dims);
            if max == 0 {
                return Err(Error::Protocol("PCA needs at least two training samples".into()));
            }
            Reducer::Pca(fit_pca(&x_train, clamp_dims(config.dims, max, "PCA"))?)
        }
        ReducerKind::Lda => {
            let mut classes = y_train.clone();
            classes.sort_unstable();
            classes.dedup();
            let max = lda_max_dims(n, classes.len(), dims);
            if max == 0 {
                return Err(Error::Protocol(
                    "LDA needs at least two classes in every training set".into(),
                ));
            }
            Reducer::Lda(fit_lda(&x_train, &y_train, clamp_dims(config.dims, max, "LDA"))?)
        }
    };

    let gallery = Gallery::from_rows(&reducer.project_rows(&x_train)?, y_train)?;
    let x_test = reducer.project_rows(&rows(features, test))?;
    let queries: Vec<DVector<f64>> = x_test.row_iter().map(|r| r.transpose()).collect();
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();

    let predicted: Vec<usize> = match config.classifier {
        ClassifierKind::Nnc => with_jobs(config.jobs, || {
            queries
                .par_iter()
                .map(|q| nnc_classify(&gallery, q).map(|p| p.label))
                .collect::<Result<Vec<_>>>()
        })??,
        ClassifierKind::Crc => {
            let crc = CrcClassifier::new(gallery, config.lambda)?;
            with_jobs(config.jobs, || {
                queries
                    .par_iter()
                    .map(|q| crc.classify(q).map(|p| p.label))
                    .collect::<Result<Vec<_>>>()
            })??
        }
    };
    Ok((reducer.output_dims(), evaluate(&predicted, &truth)?))
}

fn clamp_dims(requested: Option<usize>, max: usize, what: &str) -> usize {
    match requested {
        Some(d) if d > max => {
            log::warn!("{what} dims {d} exceeds the maximum {max} for this fold; using {max}");
            max
        }
        Some(d) => d,
        None => max,
    }
}
