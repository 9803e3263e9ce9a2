//! Feature selection, batch extraction and the descriptor CSV format.
//!
//! Descriptor files start with one comment line recording how the features
//! were made, followed by an ordinary CSV table:
//!
//! ```text
//! # sph-descriptors v1 feature=sph scales=b=8,bo=1/2,f=2,fo=1/2,k=1
//! label,path,dims,v0,v1,...
//! 0,faces/s1/1.pgm,735,0.0123,...
//! ```
//!
//! Multi-scale files list every scale in `scales=`, separated by `;`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{extract_msph, SphParams};
use crate::error::{Error, Result};
use crate::imageio::{Dataset, GrayImage};

const HEADER_TAG: &str = "# sph-descriptors v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Sph,
    Msph,
    /// Raw pixel intensities, the baseline representation.
    Pixels,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Sph => "sph",
            FeatureKind::Msph => "msph",
            FeatureKind::Pixels => "pixels",
        })
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sph" => Ok(FeatureKind::Sph),
            "msph" => Ok(FeatureKind::Msph),
            "pixels" | "pixel" | "raw" => Ok(FeatureKind::Pixels),
            other => Err(Error::Config(format!("unknown feature {other:?}"))),
        }
    }
}

/// A feature kind together with its scales.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub scales: Vec<SphParams>,
}

impl FeatureSpec {
    /// Uses `scales` when given, otherwise the default single- or three-scale
    /// configuration for `kind`.
    pub fn new(kind: FeatureKind, scales: Option<Vec<SphParams>>) -> Result<Self> {
        let scales = match (kind, scales) {
            (FeatureKind::Pixels, _) => Vec::new(),
            (_, Some(s)) if s.is_empty() => {
                return Err(Error::Config("scale list is empty".into()));
            }
            (FeatureKind::Sph, Some(s)) if s.len() > 1 => {
                return Err(Error::Config(format!(
                    "feature sph takes one scale, got {}; use msph",
                    s.len()
                )));
            }
            (_, Some(s)) => s,
            (FeatureKind::Sph, None) => vec![SphParams::default()],
            (FeatureKind::Msph, None) => SphParams::msph_default(),
        };
        for s in &scales {
            s.validate()?;
        }
        Ok(FeatureSpec { kind, scales })
    }

    pub fn sph(params: SphParams) -> Self {
        FeatureSpec {
            kind: FeatureKind::Sph,
            scales: vec![params],
        }
    }

    pub fn extract(&self, img: &GrayImage) -> Result<Vec<f64>> {
        match self.kind {
            FeatureKind::Pixels => Ok(img.pixels().iter().map(|&p| p as f64).collect()),
            _ => Ok(extract_msph(img, &self.scales)?.values),
        }
    }

    pub fn dims(&self, width: usize, height: usize) -> Result<usize> {
        match self.kind {
            FeatureKind::Pixels => Ok(width * height),
            _ => self.scales.iter().map(|s| s.dims(width, height)).sum(),
        }
    }

    /// Canonical description; also used as the feature cache key.
    pub fn describe(&self) -> String {
        let scales: Vec<String> = self.scales.iter().map(|s| s.to_string()).collect();
        if scales.is_empty() {
            format!("feature={}", self.kind)
        } else {
            format!("feature={} scales={}", self.kind, scales.join(";"))
        }
    }
}

/// Runs `f` on a pool of `jobs` threads, or on the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Extracts one feature vector per sample, in sample order. Output does not
/// depend on the number of workers.
pub fn extract_all(dataset: &Dataset, spec: &FeatureSpec, jobs: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let features = with_jobs(jobs, || {
        dataset
            .samples
            .par_iter()
            .map(|s| {
                spec.extract(&s.image)
                    .map_err(|e| e.context(format!("extracting {}", s.path.display())))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    if let Some(first) = features.first() {
        if let Some((i, f)) = features.iter().enumerate().find(|(_, f)| f.len() != first.len()) {
            return Err(Error::Dataset(format!(
                "{} yields {} features but {} yields {}; resize images to a common size",
                dataset.samples[i].path.display(),
                f.len(),
                dataset.samples[0].path.display(),
                first.len()
            )));
        }
    }
    Ok(features)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorRecord {
    pub label: usize,
    pub path: String,
    pub values: Vec<f64>,
}

pub fn write_descriptor_csv(
    mut out: impl Write,
    spec: &FeatureSpec,
    records: &[DescriptorRecord],
) -> Result<()> {
    let io = |e| Error::io("<descriptor output>", e);
    writeln!(out, "{HEADER_TAG} {}", spec.describe()).map_err(io)?;
    let dims = records.first().map_or(0, |r| r.values.len());
    let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(format!("descriptor CSV: {e}"));
    let mut header = vec!["label".to_string(), "path".to_string(), "dims".to_string()];
    header.extend((0..dims).map(|i| format!("v{i}")));
    writer.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.label.to_string(), r.path.clone(), r.values.len().to_string()];
        row.extend(r.values.iter().map(|v| v.to_string()));
        writer.write_record(&row).map_err(csv_err)?;
    }
    writer.flush().map_err(io)?;
    Ok(())
}

/// Reads a descriptor file, returning the feature description from its
/// header line and the records.
pub fn read_descriptor_csv(mut input: impl BufRead) -> Result<(String, Vec<DescriptorRecord>)> {
    let bad = |msg: String| Error::Format(format!("descriptor CSV: {msg}"));
    let mut first = String::new();
    input
        .read_line(&mut first)
        .map_err(|e| Error::io("<descriptor input>", e))?;
    let description = first
        .trim_end()
        .strip_prefix(HEADER_TAG)
        .ok_or_else(|| bad("missing version header".into()))?
        .trim()
        .to_string();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| row.get(i).ok_or_else(|| bad(format!("short row {row:?}")));
        let label = field(0)?.parse().map_err(|_| bad("bad label".into()))?;
        let path = field(1)?.to_string();
        let dims: usize = field(2)?.parse().map_err(|_| bad("bad dims".into()))?;
        if row.len() != dims + 3 {
            return Err(bad(format!("row declares {dims} values but has {}", row.len() - 3)));
        }
        let values = (3..row.len())
            .map(|i| row[i].parse::<f64>().map_err(|_| bad(format!("bad value {:?}", &row[i]))))
            .collect::<Result<Vec<_>>>()?;
        records.push(DescriptorRecord { label, path, values });
    }
    Ok((description, records))
}
