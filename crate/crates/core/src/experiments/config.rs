//! Experiment configuration files.
//!
//! Configs are TOML with keys mirroring [`ExperimentConfig`]; every key is
//! optional. Example:
//!
//! ```toml
//! dataset = "data/orl"
//! feature = "sph"              # sph | msph | pixels
//! reducer = "lda"              # pca | lda | none
//! dims = 39                    # omit for the largest valid dimension
//! classifier = "nnc"           # nnc | crc
//! lambda = 0.001               # CRC ridge penalty
//! protocol = "paper-nfold"     # paper-nfold | leave-one-out | fixed-split
//! n = 2                        # paper-nfold part count
//! train_count = 10             # fixed-split training samples per subject
//!
//! [[scales]]
//! block_size = 8
//! block_overlap = "1/2"
//! cell_size = 2
//! cell_overlap = "1/2"
//! k = 1.0
//!
//! [preprocess]
//! crop = [120, 120]
//! resize = [32, 32]
//!
//! [sweep]
//! block_sizes = [4, 6, 8, 10]
//! block_overlaps = ["0", "1/4", "1/2", "3/4"]
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::DEFAULT_LAMBDA;
use crate::descriptor::{Overlap, SphParams};
use crate::error::{Error, Result};
use crate::experiments::splits::Protocol;
use crate::features::{FeatureKind, FeatureSpec};
use crate::imageio::{crop_resize, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducerKind {
    Pca,
    Lda,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Nnc,
    Crc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    PaperNfold,
    LeaveOneOut,
    FixedSplit,
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " {:?}"), other))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

text_enum!(ReducerKind, "reducer", { "pca" => ReducerKind::Pca, "lda" => ReducerKind::Lda, "none" => ReducerKind::None });
text_enum!(ClassifierKind, "classifier", { "nnc" => ClassifierKind::Nnc, "crc" => ClassifierKind::Crc });
text_enum!(ProtocolKind, "protocol", {
    "paper-nfold" => ProtocolKind::PaperNfold,
    "leave-one-out" => ProtocolKind::LeaveOneOut,
    "fixed-split" => ProtocolKind::FixedSplit,
});

/// Optional centre crop followed by a bilinear resize, applied on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    pub crop: Option<[usize; 2]>,
    pub resize: Option<[usize; 2]>,
}

impl Preprocess {
    pub fn apply(&self, dataset: &mut Dataset) -> Result<()> {
        if self.crop.is_none() && self.resize.is_none() {
            return Ok(());
        }
        let (crop, resize) = (self.crop, self.resize);
        dataset.map_images(|img| {
            let [cw, ch] = crop.unwrap_or([img.width(), img.height()]);
            let [ow, oh] = resize.unwrap_or([cw, ch]);
            crop_resize(img, cw, ch, ow, oh)
        })
    }
}

/// Parameter grid for a single-scale SPH sweep. Empty lists fall back to the
/// base configuration's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub block_sizes: Vec<usize>,
    pub block_overlaps: Vec<Overlap>,
    pub cell_sizes: Vec<usize>,
    pub cell_overlaps: Vec<Overlap>,
    pub ks: Vec<f64>,
}

impl SweepGrid {
    /// Block size x block overlap grid: {4, 6, 8, 10} x {0, 1/4, 1/2, 3/4}.
    pub fn blocks() -> Self {
        SweepGrid {
            block_sizes: vec![4, 6, 8, 10],
            block_overlaps: vec![
                Overlap::NONE,
                Overlap::QUARTER,
                Overlap::HALF,
                Overlap::THREE_QUARTERS,
            ],
            ..Default::default()
        }
    }

    /// Cell size x cell overlap grid: {2, 4} x {0, 1/2}.
    pub fn cells() -> Self {
        SweepGrid {
            cell_sizes: vec![2, 4],
            cell_overlaps: vec![Overlap::NONE, Overlap::HALF],
            ..Default::default()
        }
    }

    /// Every combination, block size outermost and `k` innermost.
    pub fn combinations(&self, base: &SphParams) -> Vec<SphParams> {
        fn or<T: Clone>(v: &[T], fallback: T) -> Vec<T> {
            if v.is_empty() {
                vec![fallback]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for b in or(&self.block_sizes, base.block_size) {
            for bo in or(&self.block_overlaps, base.block_overlap) {
                for f in or(&self.cell_sizes, base.cell_size) {
                    for fo in or(&self.cell_overlaps, base.cell_overlap) {
                        for k in or(&self.ks, base.k) {
                            out.push(SphParams::new(b, bo, f, fo, k));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub feature: FeatureKind,
    /// Scales for `sph` (exactly one) or `msph`; defaults when omitted.
    pub scales: Option<Vec<SphParams>>,
    pub reducer: ReducerKind,
    /// Target dimension after reduction; the largest valid value when omitted.
    pub dims: Option<usize>,
    pub classifier: ClassifierKind,
    pub lambda: f64,
    pub protocol: ProtocolKind,
    pub n: usize,
    pub train_count: Option<usize>,
    /// Extraction/classification worker threads; all cores when omitted.
    pub jobs: Option<usize>,
    pub preprocess: Preprocess,
    pub sweep: Option<SweepGrid>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            feature: FeatureKind::Sph,
            scales: None,
            reducer: ReducerKind::Pca,
            dims: None,
            classifier: ClassifierKind::Nnc,
            lambda: DEFAULT_LAMBDA,
            protocol: ProtocolKind::PaperNfold,
            n: 2,
            train_count: None,
            jobs: None,
            preprocess: Preprocess::default(),
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(format!("in {}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn feature_spec(&self) -> Result<FeatureSpec> {
        FeatureSpec::new(self.feature, self.scales.clone())
    }

    pub fn split_protocol(&self) -> Result<Protocol> {
        Ok(match self.protocol {
            ProtocolKind::PaperNfold => Protocol::PaperNfold { n: self.n },
            ProtocolKind::LeaveOneOut => Protocol::LeaveOneOut,
            ProtocolKind::FixedSplit => Protocol::FixedSplit {
                train_count: self.train_count.ok_or_else(|| {
                    Error::Config("fixed-split protocol requires train_count".into())
                })?,
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_spec()?;
        self.split_protocol()?;
        if self.classifier == ClassifierKind::Crc && !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.dims == Some(0) {
            return Err(Error::Config("dims must be >= 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        Ok(())
    }
}
