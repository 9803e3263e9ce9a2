//! Evaluation protocol: splits, the recognition pipeline, parameter sweeps,
//! extraction benchmarks and a synthetic dataset generator.

pub mod bench;
pub mod config;
pub mod pipeline;
pub mod splits;
pub mod sweep;
pub mod synth;

pub use bench::{bench_extraction, BenchEntry, BenchReport};
pub use config::{ClassifierKind, ExperimentConfig, Preprocess, ProtocolKind, ReducerKind, SweepGrid};
pub use pipeline::{run_on_dataset, run_pipeline, run_with_cache, FeatureCache, ResultRecord};
pub use splits::{fixed_split, kfold_splits, leave_one_out_splits, Protocol, Split};
pub use sweep::{sweep, write_sweep_csv, SweepRow};
pub use synth::SynthSpec;
