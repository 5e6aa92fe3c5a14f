use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use arelu::bench::Precision;
use arelu::experiments::tasks::TauChoice;
use arelu::TransformKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Comma-separated list value, e.g. `--dims=1000,8000,32000`.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|part| part.trim().parse::<T>().map_err(|e| format!("`{part}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: std::fmt::Display> std::fmt::Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Parser)]
#[command(name = "arelu", version, about = "Sparse output transforms: benchmarks, training runs and experiments")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Key=value file of settings; keys are flag names, explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time the transform kernels on random logits and write bench.csv.
    Bench(BenchArgs),
    /// Train a classifier on Gaussian clusters with one paired loss.
    Train(TrainArgs),
    /// Train α-ReLU classifiers over a list of fixed thresholds.
    TauSweep(TauSweepArgs),
    /// Compare one-step logit changes with the empirical-kernel prediction.
    NtkCheck(NtkArgs),
    /// Histogram the zero fractions of trained models' outputs.
    Sparsity(SparsityArgs),
    /// Measure how often the empty output beats the beam hypothesis.
    EmptySeq(EmptySeqArgs),
    /// Compute the calibrated α-ReLU threshold of an untrained model.
    Calibrate(CalibrateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bench(_) => "bench",
            Command::Train(_) => "train",
            Command::TauSweep(_) => "tau-sweep",
            Command::NtkCheck(_) => "ntk-check",
            Command::Sparsity(_) => "sparsity",
            Command::EmptySeq(_) => "empty-seq",
            Command::Calibrate(_) => "calibrate",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunOpts {
    /// Seed for data, initialization and shuffling. Required.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: $ARELU_OUT_DIR, else runs/<command>-seed<N>].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    /// Gaussian-cluster classification.
    Cls,
    /// Token copying with the toy sequence model.
    Copy,
}

/// Training settings; unset values take the task's defaults.
#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Hidden widths, e.g. `64` or `128,64` (the sequence model takes one).
    #[arg(long)]
    pub hidden: Option<List<usize>>,
    /// Entmax and α-ReLU exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterOpts {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub center_scale: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CopyOpts {
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub dev_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Transforms to time.
    #[arg(long, default_value = "softmax,sparsemax,entmax15_sorted,entmax_bisect,arelu")]
    pub transforms: List<TransformKind>,
    /// Logit dimensions; one CSV row per transform and dimension.
    #[arg(long, default_value = "32000")]
    pub dims: List<usize>,
    #[arg(long, default_value_t = 512)]
    pub batch: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    #[arg(long, default_value = "f32", value_parser = parse_precision)]
    pub precision: Precision,
    /// Worker threads per batch; 1 keeps timing single-threaded.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub tau: f64,
    /// Standard deviation of the random logits.
    #[arg(long, default_value_t = 1.0)]
    pub logit_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunOpts,
    /// Loss: softmax, sparsemax, entmax (1.5 unless --alpha) or arelu. Required.
    #[arg(long)]
    pub loss: Option<TransformKind>,
    /// α-ReLU threshold: `calibrate` or a number.
    #[arg(long, default_value = "calibrate")]
    pub tau: TauChoice,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub clusters: ClusterOpts,
}

#[derive(Debug, Clone, Args)]
pub struct TauSweepArgs {
    #[command(flatten)]
    pub run: RunOpts,
    #[arg(long, default_value = "0,0.1,0.3,1,2,10")]
    pub taus: List<f64>,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub clusters: ClusterOpts,
}

#[derive(Debug, Clone, Args)]
pub struct NtkArgs {
    #[command(flatten)]
    pub run: RunOpts,
    #[arg(long, default_value = "softmax,entmax15_sorted,arelu")]
    pub transforms: List<TransformKind>,
    /// Hidden widths of the one-hidden-layer networks.
    #[arg(long, default_value = "1024,2048,4096")]
    pub widths: List<usize>,
    /// Training points; every point is also a probe.
    #[arg(long, default_value_t = 32)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
    /// Gradient steps, each checked against a fresh kernel.
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, default_value = "calibrate")]
    pub tau: TauChoice,
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    #[command(flatten)]
    pub clusters: ClusterOpts,
}

#[derive(Debug, Clone, Args)]
pub struct SparsityArgs {
    #[command(flatten)]
    pub run: RunOpts,
    #[arg(long, value_enum, default_value = "cls")]
    pub task: TaskArg,
    #[arg(long, default_value = "softmax,sparsemax,entmax15_sorted,arelu")]
    pub transforms: List<TransformKind>,
    #[arg(long, default_value = "calibrate")]
    pub tau: TauChoice,
    #[arg(long, default_value_t = 10)]
    pub buckets: usize,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub clusters: ClusterOpts,
    #[command(flatten)]
    pub copy: CopyOpts,
}

#[derive(Debug, Clone, Args)]
pub struct EmptySeqArgs {
    #[command(flatten)]
    pub run: RunOpts,
    #[arg(long, default_value = "softmax,sparsemax,entmax15_sorted,arelu")]
    pub transforms: List<TransformKind>,
    #[arg(long, default_value = "calibrate")]
    pub tau: TauChoice,
    #[arg(long, default_value_t = 5)]
    pub beam_width: usize,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub copy: CopyOpts,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub run: RunOpts,
    #[arg(long, value_enum, default_value = "cls")]
    pub task: TaskArg,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub clusters: ClusterOpts,
    #[command(flatten)]
    pub copy: CopyOpts,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse().map_err(|e: arelu::Error| e.to_string())
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
pub fn read_config(path: &std::path::Path) -> anyhow::Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value, got `{line}`", path.display(), n + 1);
        };
        pairs.push((key.trim().replace('_', "-"), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Inserts the config file's settings as flags right after the subcommand,
/// so that flags given on the command line override them.
pub fn splice_config(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 1;
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if sub.is_none() && !a.starts_with('-') {
            sub = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(sub)) = (config, sub) else {
        return Ok(args);
    };
    let flags = read_config(&path)?.into_iter().map(|(k, v)| OsString::from(format!("--{k}={v}")));
    let mut out = args[..=sub].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}
