//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors. Flags override the matching keys of `--config`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::pipeline::load_configured_dataset;
use crate::experiments::{
    bench_extraction, run_on_dataset, sweep, write_sweep_csv, ClassifierKind, ExperimentConfig,
    ProtocolKind, ReducerKind, ResultRecord, SweepGrid, SynthSpec,
};
use crate::features::{extract_all, write_descriptor_csv, DescriptorRecord, FeatureKind, FeatureSpec};
use crate::imageio::Dataset;

#[derive(Debug, Parser)]
#[command(name = "sph", version, about = "Shape primitive histogram features and face recognition experiments")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract descriptors for every image of a dataset into a CSV file.
    Extract(PipelineArgs),
    /// Run the recognition pipeline and report mean±std accuracy.
    Eval(PipelineArgs),
    /// Run the pipeline over a grid of single-scale SPH parameters.
    Sweep(SweepArgs),
    /// Time feature extraction.
    Bench(BenchArgs),
    /// Write a deterministic synthetic dataset.
    GenSynth(SynthArgs),
}

#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset root: one subdirectory of images per subject.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// sph | msph | pixels
    #[arg(long)]
    pub feature: Option<String>,
    /// pca | lda | none
    #[arg(long)]
    pub reducer: Option<String>,
    #[arg(long)]
    pub dims: Option<usize>,
    /// nnc | crc
    #[arg(long)]
    pub classifier: Option<String>,
    /// CRC ridge penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// paper-nfold | leave-one-out | fixed-split
    #[arg(long)]
    pub protocol: Option<String>,
    /// Part count for paper-nfold.
    #[arg(long)]
    pub n: Option<usize>,
    /// Training samples per subject for fixed-split.
    #[arg(long)]
    pub train_count: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Built-in grid used when the config has no [sweep] table: blocks | cells
    #[arg(long, default_value = "blocks")]
    pub grid: String,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// Benchmark only the first N images.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (must be absent or empty).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub classes: usize,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    /// Maximum translation in pixels.
    #[arg(long, default_value_t = 1)]
    pub jitter: usize,
    /// Uniform additive noise amplitude.
    #[arg(long, default_value_t = 0)]
    pub noise: u8,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
}

impl PipelineArgs {
    /// The config file (if any) with command-line overrides applied.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "config file {} not found",
                        path.display()
                    )));
                }
                ExperimentConfig::load(path)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dataset {
            c.dataset = Some(d.clone());
        }
        if let Some(f) = &self.feature {
            let kind: FeatureKind = f.parse()?;
            if kind != c.feature {
                // config scales belong to the config's feature
                c.scales = None;
            }
            c.feature = kind;
        }
        if let Some(r) = &self.reducer {
            c.reducer = r.parse::<ReducerKind>()?;
        }
        if self.dims.is_some() {
            c.dims = self.dims;
        }
        if let Some(k) = &self.classifier {
            c.classifier = k.parse::<ClassifierKind>()?;
        }
        if let Some(l) = self.lambda {
            c.lambda = l;
        }
        if let Some(p) = &self.protocol {
            c.protocol = p.parse::<ProtocolKind>()?;
        }
        if let Some(n) = self.n {
            c.n = n;
        }
        if self.train_count.is_some() {
            c.train_count = self.train_count;
        }
        if self.jobs.is_some() {
            c.jobs = self.jobs;
        }
        c.validate()?;
        Ok(c)
    }

    fn dataset(&self, config: &ExperimentConfig) -> Result<Dataset> {
        let root = config
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("no dataset: pass --dataset or set it in the config".into()))?;
        load_configured_dataset(config, root)
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn cmd_extract(args: &PipelineArgs) -> Result<()> {
    let config = args.resolve()?;
    let spec = config.feature_spec()?;
    let dataset = args.dataset(&config)?;
    let features = extract_all(&dataset, &spec, config.jobs)?;
    let root = config.dataset.clone().unwrap_or_default();
    let records: Vec<DescriptorRecord> = dataset
        .samples
        .iter()
        .zip(features)
        .map(|(s, values)| DescriptorRecord {
            label: s.label,
            path: s.path.strip_prefix(&root).unwrap_or(&s.path).display().to_string(),
            values,
        })
        .collect();
    let mut out = open_output(args.out.as_deref())?;
    write_descriptor_csv(&mut out, &spec, &records)?;
    out.flush().map_err(|e| Error::io("<output>", e))?;
    eprintln!(
        "extracted {} descriptors of {} dims ({})",
        records.len(),
        records.first().map_or(0, |r| r.values.len()),
        spec.describe()
    );
    Ok(())
}

fn write_records(path: Option<&Path>, records: &[&ResultRecord]) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| Error::Format(format!("result CSV: {e}"));
    w.write_record(ResultRecord::csv_header()).map_err(err)?;
    for r in records {
        w.write_record(r.csv_row()).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cmd_eval(args: &PipelineArgs) -> Result<()> {
    let config = args.resolve()?;
    let dataset = args.dataset(&config)?;
    let record = run_on_dataset(&dataset, &config)?;
    println!(
        "dataset: {} samples, {} subjects; feature {} ({} dims); reducer {}; classifier {}; protocol {}",
        dataset.len(),
        dataset.num_classes(),
        config.feature,
        record.feature_dims,
        config.reducer,
        config.classifier,
        config.split_protocol()?
    );
    for (i, ((&(train, test), acc), dims)) in record
        .fold_sizes
        .iter()
        .zip(&record.fold_accuracies)
        .zip(&record.reduced_dims)
        .enumerate()
    {
        println!(
            "fold {}: train {train}, test {test}, dims {dims}, accuracy {:.2}%",
            i + 1,
            100.0 * acc
        );
    }
    println!("accuracy: {}", record.summary());
    write_records(args.out.as_deref(), &[&record])
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let config = args.pipeline.resolve()?;
    let dataset = args.pipeline.dataset(&config)?;
    let grid = match &config.sweep {
        Some(g) => g.clone(),
        None => match args.grid.as_str() {
            "blocks" => SweepGrid::blocks(),
            "cells" => SweepGrid::cells(),
            other => return Err(Error::Config(format!("unknown grid {other:?}"))),
        },
    };
    let rows = sweep(&dataset, &grid, &config)?;
    for r in &rows {
        println!("{}  dims {:5}  {}", r.params, r.dims, r.record.summary());
    }
    let mut out = open_output(args.pipeline.out.as_deref())?;
    if args.pipeline.out.is_some() {
        write_sweep_csv(&mut out, &rows)?;
        out.flush().map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let config = args.pipeline.resolve()?;
    let dataset = args.pipeline.dataset(&config)?;
    let images: Vec<_> = dataset
        .samples
        .iter()
        .take(args.limit.unwrap_or(usize::MAX))
        .map(|s| s.image.clone())
        .collect();
    let specs = if args.pipeline.feature.is_some() || config.scales.is_some() {
        vec![config.feature_spec()?]
    } else {
        vec![
            FeatureSpec::new(FeatureKind::Sph, None)?,
            FeatureSpec::new(FeatureKind::Msph, None)?,
        ]
    };
    let report = bench_extraction(&images, &specs, args.repetitions)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(path) = &args.pipeline.out {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn cmd_gen_synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        classes: args.classes,
        samples: args.samples,
        jitter: args.jitter,
        noise: args.noise,
        width: args.size,
        height: args.size,
        ..Default::default()
    };
    let ds = spec.write_dataset(&args.out)?;
    eprintln!(
        "wrote {} images for {} subjects to {}",
        ds.len(),
        ds.num_classes(),
        args.out.display()
    );
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::GenSynth(a) => cmd_gen_synth(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
