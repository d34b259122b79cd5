use std::path::PathBuf;

use chaos_core::affinity::Affinity;
use clap::{Args, Parser, Subcommand};

/// Train convolutional networks with CHAOS, benchmark worker scaling, and
/// query the performance model.
///
/// Every option that has an environment variable reads it when the flag is
/// absent; an explicit flag always wins.
#[derive(Debug, Parser)]
#[command(name = "chaos", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one network and write its report and checkpoint.
    Train(TrainArgs),
    /// Train once per worker count and report speedup and error counts.
    Bench(BenchArgs),
    /// Performance-model queries.
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// small, medium, large, or a path to an architecture file.
    #[arg(long, env = "CHAOS_ARCH", default_value = "small")]
    pub arch: String,

    /// Directory holding the four MNIST IDX files (optionally gzipped).
    #[arg(long, env = "CHAOS_DATA_DIR", default_value = "data/mnist")]
    pub data_dir: PathBuf,

    #[arg(long, env = "CHAOS_EPOCHS", default_value_t = 1)]
    pub epochs: usize,

    /// Use only the first N training images.
    #[arg(long, env = "CHAOS_SUBSET")]
    pub subset: Option<usize>,

    /// Use only the first N test images.
    #[arg(long, env = "CHAOS_TEST_SUBSET")]
    pub test_subset: Option<usize>,

    /// Learning rate.
    #[arg(long, env = "CHAOS_ETA", default_value_t = 0.001)]
    pub eta: f32,

    /// Weight decay applied with every published update.
    #[arg(long, env = "CHAOS_LAMBDA", default_value_t = 0.0)]
    pub lambda: f32,

    /// Learning-rate multiplier applied after every epoch.
    #[arg(long, env = "CHAOS_ETA_DECAY", default_value_t = 1.0)]
    pub eta_decay: f32,

    /// Weight-initialization seed; overrides the one in an architecture file.
    #[arg(long, env = "CHAOS_SEED")]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, env = "CHAOS_OUT", default_value = "results")]
    pub out: PathBuf,

    /// Worker placement: none, scatter or compact.
    #[arg(long, env = "CHAOS_AFFINITY", default_value = "none")]
    pub affinity: Affinity,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Worker threads.
    #[arg(long, env = "CHAOS_WORKERS", default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Comma-separated worker counts; must include 1 unless a baseline CSV
    /// is given.
    #[arg(long, env = "CHAOS_WORKERS", value_delimiter = ',', default_value = "1,2,4")]
    pub workers: Vec<usize>,

    /// Earlier bench CSV whose workers=1 row for the same architecture
    /// serves as the baseline.
    #[arg(long, env = "CHAOS_BASELINE_CSV")]
    pub baseline_csv: Option<PathBuf>,

    /// Run one untimed epoch before each measured run.
    #[arg(long)]
    pub warmup: bool,

    /// Timed runs per worker count; times are averaged.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
}

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Fit the operation factor and memory contention to measured runs.
    Calibrate(CalibrateArgs),
    /// Predicted time of one workload.
    Predict(PredictArgs),
    /// Predicted speedup over a list of worker counts.
    Speedup(SpeedupArgs),
    /// Predicted minutes over a grid of images, epochs and threads.
    Whatif(WhatIfArgs),
    /// Prediction accuracy of a measured time against a predicted one.
    Accuracy(AccuracyArgs),
    /// Per-layer operation counts of an architecture.
    Ops(OpsArgs),
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// Calibrated parameters written by `model calibrate`. Without it the
    /// parameters come from --arch and --profile; without either, the small
    /// network on the coprocessor profile anchored at 8.9 minutes for
    /// 60k/10k images, 70 epochs and 240 threads.
    #[arg(long)]
    pub params: Option<PathBuf>,

    #[arg(long, env = "CHAOS_ARCH")]
    pub arch: Option<String>,

    /// coprocessor, host, or a key=value profile file.
    #[arg(long, default_value = "coprocessor")]
    pub profile: String,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, env = "CHAOS_ARCH", default_value = "small")]
    pub arch: String,

    /// CSV with header i,it,ep,p,seconds.
    #[arg(long)]
    pub calibration: PathBuf,

    /// coprocessor, host, or a key=value profile file.
    #[arg(long, default_value = "host")]
    pub profile: String,

    /// Write the parameters here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub params: ParamsArgs,
    /// Training images.
    #[arg(long = "i")]
    pub train_images: u64,
    /// Test images.
    #[arg(long = "it")]
    pub test_images: u64,
    /// Epochs.
    #[arg(long = "ep")]
    pub epochs: u64,
    /// Processing units.
    #[arg(long = "p")]
    pub units: u64,
}

#[derive(Debug, Args)]
pub struct SpeedupArgs {
    #[command(flatten)]
    pub params: ParamsArgs,
    #[arg(long = "i", default_value_t = 60_000)]
    pub train_images: u64,
    #[arg(long = "it", default_value_t = 10_000)]
    pub test_images: u64,
    #[arg(long = "ep", default_value_t = 70)]
    pub epochs: u64,
    /// Comma-separated worker counts.
    #[arg(long = "p", value_delimiter = ',', default_value = "1,15,30,60,120,180,240,244")]
    pub units: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct WhatIfArgs {
    #[command(flatten)]
    pub params: ParamsArgs,
    /// Comma-separated TRAIN:TEST image pairs.
    #[arg(long, value_delimiter = ',', default_value = "60000:10000,120000:20000,240000:40000")]
    pub images: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "70,140,280,560")]
    pub epochs: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "240,480")]
    pub threads: Vec<u64>,
}

#[derive(Debug, Args)]
pub struct AccuracyArgs {
    /// Measured seconds.
    #[arg(long)]
    pub measured: f64,
    /// Predicted seconds.
    #[arg(long)]
    pub predicted: f64,
}

#[derive(Debug, Args)]
pub struct OpsArgs {
    #[arg(long, env = "CHAOS_ARCH", default_value = "small")]
    pub arch: String,
}
