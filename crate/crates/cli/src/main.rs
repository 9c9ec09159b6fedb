//! `netorder`: dataset generation, training and evaluation of net-ordering
//! predictors for layer-compressed global routing.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netorder_core::assign::AssignMode;
use netorder_core::features::FeatureMode;
use netorder_core::route::Router;
use netorder_core::Error;

#[derive(Parser, Debug)]
#[command(name = "netorder", version, about = "Learned net ordering for multilayer global routing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate labelled datasets.
    Gen(GenArgs),
    /// Train a model, or grid-search one.
    Train(TrainArgs),
    /// Accuracy of checkpoints, the heuristic and random orderings.
    Compare(CompareArgs),
    /// Accuracy of one checkpoint across layer counts.
    Transfer(TransferArgs),
    /// Route and assign one generated problem.
    Route(RouteArgs),
    /// Re-run the command recorded in a manifest and check its outputs.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RouterArg {
    Ka,
    St,
}

impl From<RouterArg> for Router {
    fn from(r: RouterArg) -> Router {
        match r {
            RouterArg::Ka => Router::Ka,
            RouterArg::St => Router::St,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FeaturesArg {
    Full,
    Reduced,
}

impl From<FeaturesArg> for FeatureMode {
    fn from(f: FeaturesArg) -> FeatureMode {
        match f {
            FeaturesArg::Full => FeatureMode::Full,
            FeaturesArg::Reduced => FeatureMode::Reduced,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Strict,
    OverflowMin,
}

impl From<ModeArg> for AssignMode {
    fn from(m: ModeArg) -> AssignMode {
        match m {
            ModeArg::Strict => AssignMode::Strict,
            ModeArg::OverflowMin => AssignMode::OverflowMin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalSet {
    /// The held-out split.
    Test,
    /// Every group.
    All,
}

/// Problem shape shared by `gen` and `route`.
#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value = "ka")]
    pub router: RouterArg,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 3)]
    pub nets: usize,
    #[arg(long, default_value_t = 5)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub height: usize,
    #[arg(long, default_value_t = 15)]
    pub pins_per_layer: usize,
    /// Boundary-edge capacity per layer.
    #[arg(long, default_value_t = 2)]
    pub boundary_cap: u32,
    /// Via-edge capacity; defaults to width * height.
    #[arg(long)]
    pub via_cap: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum, default_value = "full")]
    pub features: FeaturesArg,
    #[arg(long, default_value_t = 500)]
    pub groups: usize,
    /// Emit all sixteen router/layer/net/feature combinations.
    #[arg(long)]
    pub paper_matrix: bool,
    /// Output file; defaults to a descriptive name in `--out-dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub model: u8,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of groups used for training.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    /// Search this many hyperparameter points and keep the best by test
    /// accuracy.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss-curve CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long, num_args = 0..)]
    pub checkpoint: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Seed of the random baseline.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "test")]
    pub eval: EvalSet,
    /// Split seed; defaults to the first checkpoint's training seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Training fraction; defaults to the first checkpoint's.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TransferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub min_layers: usize,
    #[arg(long, default_value_t = 10)]
    pub max_layers: usize,
    #[arg(long, default_value_t = 300)]
    pub groups: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Router of the fresh datasets; defaults to the training dataset's.
    #[arg(long, value_enum)]
    pub router: Option<RouterArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RouteArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// `oracle`, `heuristic`, `model`, `random` or a list such as `2,0,1`.
    #[arg(long, default_value = "oracle")]
    pub order: String,
    /// Checkpoint for `--order model`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "overflow-min")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Write the assigned solution as JSON.
    #[arg(long)]
    pub emit_json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::TooManyNets(..) => 2,
        Error::Infeasible { .. } => 4,
        _ => 3,
    }
}

pub fn run(cli: Cli, argv: Vec<String>) -> netorder_core::Result<()> {
    match cli.command {
        Command::Gen(a) => commands::gen(a, argv),
        Command::Train(a) => commands::train(a, argv),
        Command::Compare(a) => commands::compare(a, argv),
        Command::Transfer(a) => commands::transfer(a, argv),
        Command::Route(a) => commands::route(a, argv),
        Command::Replay(a) => commands::replay(a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
