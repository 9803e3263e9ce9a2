//! Feature extraction timing.

use std::hint::black_box;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::experiments::pipeline::mean_std;
use crate::features::FeatureSpec;
use crate::imageio::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchEntry {
    pub feature: String,
    pub dims: usize,
    pub images: usize,
    pub repetitions: usize,
    /// Mean and sample std of the per-image extraction time, in seconds.
    pub mean_secs_per_image: f64,
    pub std_secs_per_image: f64,
    /// Mean wall time of one pass over all images.
    pub mean_total_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
}

impl MachineInfo {
    pub fn current() -> Self {
        MachineInfo {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub machine: MachineInfo,
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let m = &self.machine;
        let mut out = format!("machine: {} {} ({} cpus)\n", m.os, m.arch, m.cpus);
        out.push_str("feature,dims,images,repetitions,mean_us_per_image,std_us_per_image,mean_total_ms\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{:.3},{:.3},{:.3}\n",
                e.feature,
                e.dims,
                e.images,
                e.repetitions,
                e.mean_secs_per_image * 1e6,
                e.std_secs_per_image * 1e6,
                e.mean_total_secs * 1e3
            ));
        }
        out
    }
}

/// Times sequential single-threaded extraction of every image for each
/// feature configuration. One untimed pass per configuration warms caches.
/// Repetitions are interleaved across configurations so that slow drift in
/// machine load affects every configuration alike.
pub fn bench_extraction(
    images: &[GrayImage],
    specs: &[FeatureSpec],
    repetitions: usize,
) -> Result<BenchReport> {
    if repetitions < 3 {
        return Err(Error::Params(format!("need at least 3 repetitions, got {repetitions}")));
    }
    if images.is_empty() {
        return Err(Error::Params("no images to benchmark".into()));
    }
    let mut dims = Vec::with_capacity(specs.len());
    for spec in specs {
        dims.push(spec.extract(&images[0])?.len());
        for img in images {
            black_box(spec.extract(img)?);
        }
    }
    let mut totals = vec![Vec::with_capacity(repetitions); specs.len()];
    for _ in 0..repetitions {
        for (spec, times) in specs.iter().zip(&mut totals) {
            let start = Instant::now();
            for img in images {
                black_box(spec.extract(black_box(img))?);
            }
            times.push(start.elapsed().as_secs_f64());
        }
    }
    let entries = specs
        .iter()
        .zip(dims)
        .zip(totals)
        .map(|((spec, dims), times)| {
            let per_image: Vec<f64> = times.iter().map(|t| t / images.len() as f64).collect();
            let (mean, std) = mean_std(&per_image);
            BenchEntry {
                feature: spec.describe(),
                dims,
                images: images.len(),
                repetitions,
                mean_secs_per_image: mean,
                std_secs_per_image: std,
                mean_total_secs: mean_std(&times).0,
            }
        })
        .collect();
    Ok(BenchReport {
        machine: MachineInfo::current(),
        entries,
    })
}
