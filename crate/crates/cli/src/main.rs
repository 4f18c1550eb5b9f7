mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ldc::dataio::DatasetId;
use ldc::model::NormKind;
use ldc::trainer::LossKind;
use ldc::LdcError;

#[derive(Debug, Parser)]
#[command(name = "ldc", version, about = "Train, export and run low-dimensional binary VSA classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier and write model.json, report.json and epochs.csv.
    Train(TrainCmd),
    /// Train MLP teacher(s) and export their training-split logits.
    DistillTeacher(TeacherCmd),
    /// Fold the normalizer and write a packed .ldcv model.
    Export(ExportCmd),
    /// Run packed inference on samples given as rows of feature levels.
    Infer(InferCmd),
    /// Measure packed inference throughput on a test split.
    Bench(BenchCmd),
    /// Accuracy of a packed model under random bit errors.
    Robustness(RobustnessCmd),
    /// Train once per grid value and tabulate accuracy and confidence.
    Sweep(SweepCmd),
    /// Gradient and pre-sign histograms for one test sample.
    Snapshot(SnapshotCmd),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Benchmark name (fashion_mnist, isolet, har, chb_mit, creditcard, custom).
    #[arg(long)]
    pub dataset: DatasetId,
    /// Dataset root; defaults to $LDC_DATA_DIR, then ./data.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Training files for a custom dataset (delimited, label in the last column).
    #[arg(long, value_delimiter = ',')]
    pub train_files: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub test_files: Vec<PathBuf>,
    /// Number of discretization levels M.
    #[arg(long, default_value_t = 256)]
    pub levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    None,
    Batch,
    Layer,
    Rms,
}

impl From<NormArg> for NormKind {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::None => NormKind::None,
            NormArg::Batch => NormKind::Batch,
            NormArg::Layer => NormKind::Layer,
            NormArg::Rms => NormKind::Rms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Ce,
    #[value(name = "kd_kl", alias = "kd-kl")]
    KdKl,
    #[value(name = "kd_js", alias = "kd-js")]
    KdJs,
    #[value(name = "hard_label_teacher", alias = "hard-label-teacher")]
    HardLabelTeacher,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Ce => LossKind::Ce,
            LossArg::KdKl => LossKind::KdKl,
            LossArg::KdJs => LossKind::KdJs,
            LossArg::HardLabelTeacher => LossKind::HardLabelTeacher,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Vector dimension D.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Value vector dimension D_v (default D/4).
    #[arg(long)]
    pub value_dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = NormArg::None)]
    pub norm: NormArg,
    #[arg(long, value_enum, default_value_t = LossArg::Ce)]
    pub loss: LossArg,
    /// Distillation temperature.
    #[arg(long = "T", default_value_t = 1.0)]
    pub temperature: f64,
    /// Weight of the cross-entropy term (distillation gets 1 - gamma).
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Teacher logits file for the training split (required by distillation losses).
    #[arg(long)]
    pub teacher_logits: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    /// Active range of the straight-through estimator.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Multiplier on the feature scaling factor.
    #[arg(long, default_value_t = 1.0)]
    pub alpha_multiplier: f64,
    /// Label smoothing amount eps: targets become (1 - eps) t + eps / K.
    #[arg(long, default_value_t = 0.0)]
    pub label_smoothing: f64,
    #[arg(long, default_value_t = 0.01)]
    pub qat_momentum: f64,
    #[arg(long, default_value_t = 0.02)]
    pub qat_threshold: f64,
    #[arg(long, default_value_t = 15)]
    pub qat_start_epoch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub repeats: u64,
    /// Only evaluate on the test split after the last epoch.
    #[arg(long)]
    pub final_eval_only: bool,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TeacherCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Ensemble size; members use seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub members: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportCmd {
    /// Trained model (model.json written by `train`).
    #[arg(long)]
    pub model: PathBuf,
    /// Output .ldcv file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferCmd {
    #[arg(long)]
    pub model: PathBuf,
    /// Delimited file with one sample of N feature levels per line.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Passes over the test split.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct RobustnessCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.001,0.01,0.05,0.1")]
    pub rates: Vec<f64>,
    /// Injection seeds per rate.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Grid {
    Gamma,
    #[value(alias = "T")]
    Temperature,
    #[value(name = "batch_size", alias = "batch-size")]
    BatchSize,
    #[value(alias = "label-smoothing")]
    Smoothing,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, value_enum)]
    pub grid: Grid,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SnapshotCmd {
    /// Trained model (model.json).
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Test sample index; defaults to the first misclassified sample.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Also write histograms for a zero logit gradient.
    #[arg(long)]
    pub with_zero_upstream: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<LdcError>()) {
        Some(e) if e.is_data_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
