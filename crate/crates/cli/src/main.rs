mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dia_sgn::error::{SimError, TrainError};

/// Dataset generation, training, evaluation and single-scene prediction for
/// the semantic graph network over dynamic insertion areas.
#[derive(Debug, Parser)]
#[command(name = "dia-sgn", version, propagate_version = true)]
struct Cli {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Repeat for more log output (RUST_LOG also works).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate labeled episodes on a map template and write a dataset directory.
    Generate(GenerateArgs),
    /// Train a network on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a trained network on a dataset directory.
    Eval(EvalArgs),
    /// Predict one frame of one episode and emit graph, attention and intention files.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// merge, lane-change, t-intersection, roundabout or roundabout:N:R
    #[arg(long)]
    pub template: Option<String>,
    /// Number of labeled episodes to keep.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Vehicles per episode, the predicted one included.
    #[arg(long)]
    pub agents: Option<usize>,
    /// Maximum simulated seconds per episode.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Falls back to DIA_SGN_SEED, then 7.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct SampleArgs {
    /// Graph frames per input, the newest included.
    #[arg(long)]
    pub history: Option<usize>,
    /// Keep every n-th labeled frame.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Skip frames with fewer candidate areas.
    #[arg(long)]
    pub min_candidates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for the model, metrics and loss curve.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampling: SampleArgs,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Samples per gradient step.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mixture components per candidate.
    #[arg(long)]
    pub mixtures: Option<usize>,
    /// Weight of the intention term of the loss.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Covariance diagonal regularizer.
    #[arg(long)]
    pub kreg: Option<f64>,
    #[arg(long, value_parser = ["full", "desk"])]
    pub preset: Option<String>,
    /// ua: uniform attention; nc: edge encoder without the relative state.
    #[arg(long, value_parser = ["ua", "nc", "none"])]
    pub ablation: Option<String>,
    #[arg(long, value_parser = ["adam", "sgd"])]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Draws per prediction in the training-set metrics.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also plot the loss curve.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub sampling: SampleArgs,
    /// Draws per prediction for the point estimates.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Episode id from the dataset manifest.
    #[arg(long)]
    pub episode: String,
    /// Frame index within the episode.
    #[arg(long)]
    pub frame: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub history: Option<usize>,
    /// Sampled 3D graphs.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the attention matrix as CSV.
    #[arg(long)]
    pub heatmap_csv: bool,
    /// Write insertion probabilities as CSV.
    #[arg(long)]
    pub intention_csv: bool,
    /// Cover every frame up to --frame in the intention output.
    #[arg(long)]
    pub trace: bool,
    /// Render the heatmap and intention plots as SVG.
    #[arg(long)]
    pub svg: bool,
}

/// Exit code 2 for bad input, 1 for everything that fails at run time.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidParams(m) => Self::Usage(m),
            other => Self::Runtime(other.into()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(m) => Self::Usage(m),
            other => Self::Runtime(other.into()),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => commands::generate(&a, &file),
        Command::Train(a) => commands::train(&a, &file),
        Command::Eval(a) => commands::eval(&a, &file),
        Command::Predict(a) => commands::predict(&a, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
