//! Single-scale SPH parameter sweeps.

use std::io::Write;

use crate::descriptor::SphParams;
use crate::error::{Error, Result};
use crate::experiments::config::{ExperimentConfig, SweepGrid};
use crate::experiments::pipeline::{run_with_cache, FeatureCache, ResultRecord};
use crate::features::FeatureKind;
use crate::imageio::Dataset;

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub params: SphParams,
    /// Descriptor length for the dataset's image size.
    pub dims: usize,
    pub record: ResultRecord,
}

/// Runs `base` once per valid grid combination. Combinations that are
/// invalid for the dataset are logged and skipped.
pub fn sweep(dataset: &Dataset, grid: &SweepGrid, base: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let first = dataset
        .samples
        .first()
        .ok_or_else(|| Error::Dataset("cannot sweep an empty dataset".into()))?;
    let (w, h) = (first.image.width(), first.image.height());
    if base.feature != FeatureKind::Sph {
        log::warn!("sweeps vary single-scale SPH; ignoring feature = {}", base.feature);
    }
    let base_scale = base
        .scales
        .as_ref()
        .and_then(|s| s.first().copied())
        .unwrap_or_default();

    let mut cache = FeatureCache::default();
    let mut rows = Vec::new();
    for params in grid.combinations(&base_scale) {
        let dims = match params.dims(w, h) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("skipping {params}: {e}");
                continue;
            }
        };
        let config = ExperimentConfig {
            feature: FeatureKind::Sph,
            scales: Some(vec![params]),
            sweep: None,
            ..base.clone()
        };
        let record = run_with_cache(dataset, &config, &mut cache)
            .map_err(|e| e.context(format!("sweep point {params}")))?;
        log::info!("{params}: dims {dims}, accuracy {}", record.summary());
        rows.push(SweepRow { params, dims, record });
    }
    Ok(rows)
}

/// Writes one CSV row per sweep point: the varied parameters, descriptor
/// dimension, then the [`ResultRecord`] columns.
pub fn write_sweep_csv(out: impl Write, rows: &[SweepRow]) -> Result<()> {
    let err = |e: csv::Error| Error::Format(format!("sweep CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["block_size", "block_overlap", "cell_size", "cell_overlap", "k", "sph_dims"];
    header.extend_from_slice(ResultRecord::csv_header());
    w.write_record(&header).map_err(err)?;
    for row in rows {
        let p = &row.params;
        let mut fields = vec![
            p.block_size.to_string(),
            p.block_overlap.to_string(),
            p.cell_size.to_string(),
            p.cell_overlap.to_string(),
            p.k.to_string(),
            row.dims.to_string(),
        ];
        fields.extend(row.record.csv_row());
        w.write_record(&fields).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<sweep output>", e))
}
