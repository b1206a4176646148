//! Command-line front end: `synth`, `cluster`, `train`, `eval`, `ablate`
//! and `gradcheck`.
//!
//! Exit codes: 0 success, 1 failure (including a failed gradient check),
//! 2 usage error, 3 I/O or format error.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::error::Error;

pub use config::{AblateSection, ClusterSection, EvalSection, Metric, RunConfig};
pub use manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "unicom", version, about = "Cluster discrimination with random class and feature selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic embedding set with controlled class conflict.
    Synth(SynthArgs),
    /// Run k-means and write centroids plus a pseudo-labeled copy of the input.
    Cluster(ClusterArgs),
    /// Train the encoder and prototypes on a labeled embedding set.
    Train(TrainArgs),
    /// Score an embedding set with Recall@K or mAP@100.
    Eval(EvalArgs),
    /// Sweep r1, r2, r3 or the cluster count on synthetic data.
    Ablate(AblateArgs),
    /// Compare analytic loss gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output directory; receives manifest.json and every artifact.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for data-parallel sections.
    #[arg(long, env = "UNICOM_THREADS")]
    pub threads: Option<usize>,
    /// JSON settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Per-coordinate Gaussian noise before renormalization.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Fraction of classes split across two pseudo labels.
    #[arg(long)]
    pub conflict: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// kmeanspp or random-points.
    #[arg(long, value_parser = kebab::<crate::clustering::InitMethod>)]
    pub init: Option<crate::clustering::InitMethod>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Labeled input set (for example the labeled copy written by `cluster`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// adamw or sgd-momentum.
    #[arg(long, value_parser = kebab::<crate::trainer::OptimizerKind>)]
    pub optimizer: Option<crate::trainer::OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub wd: Option<f64>,
    #[arg(long)]
    pub r1: Option<f64>,
    #[arg(long)]
    pub r2: Option<f64>,
    /// Train with per-sample Dropout at this ratio instead of the feature mask.
    #[arg(long)]
    pub r3: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub scale: Option<f64>,
    /// Encoder output dimension (default: input dimension).
    #[arg(long)]
    pub output_dim: Option<usize>,
    /// centroids or random.
    #[arg(long, value_parser = kebab::<crate::trainer::PrototypeInit>)]
    pub prototype_init: Option<crate::trainer::PrototypeInit>,
    /// identity or random.
    #[arg(long, value_parser = kebab::<crate::trainer::EncoderInit>)]
    pub encoder_init: Option<crate::trainer::EncoderInit>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Query set; for recall it is also the gallery.
    #[arg(long)]
    pub input: PathBuf,
    /// Gallery for map100.
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    /// Encode inputs with this checkpoint first.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub metric: Option<Metric>,
    /// Recall cutoffs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Keep only the leading dimensions (renormalized).
    #[arg(long)]
    pub dims: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// r1, r2, r3 or k.
    #[arg(long, value_parser = kebab::<crate::eval::AblationParam>)]
    pub param: Option<crate::eval::AblationParam>,
    /// Comma-separated grid, e.g. 0.05,0.1,0.3,1.0.
    #[arg(long)]
    pub values: Option<String>,
    /// Number of seeds; run i uses seed + i.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Also report Recall@K after truncation to this many dimensions.
    #[arg(long)]
    pub report_dims: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub conflict: Option<f64>,
    #[arg(long)]
    pub holdout_per_class: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub output_dim: Option<usize>,
    /// Cluster the training data into this many pseudo classes first.
    #[arg(long)]
    pub cluster_k: Option<usize>,
    #[arg(long)]
    pub recall_k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Finite-difference step.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_scale: Option<f64>,
    /// Negate the analytic gradient; the check must then fail.
    #[arg(long)]
    pub inject_sign_flip: bool,
}

/// Parses a kebab-case name through the type's serde representation.
pub fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
    Lib(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
            CliError::Lib(e) if e.is_io_or_format() => 3,
            CliError::Lib(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failed(m) => write!(f, "{m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

/// Turns a validation failure into a usage error.
pub(crate) fn usage<T>(r: crate::error::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("unicom: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
