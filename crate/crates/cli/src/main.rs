//! `dsanet`: phantom generation, training, inference, evaluation and
//! self-checks for the spatio-temporal artery segmentation network.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage, 3 IO or data,
//! 4 numerical abort, 5 checkpoint/config mismatch.

mod eval;
mod gen;
mod infer;
mod preprocess;
mod run_config;
mod train;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use dsanet_core::Error;

use run_config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "dsanet", version, about = "Artery segmentation in angiography sequences")]
struct Cli {
    /// JSON run configuration; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Compute in double precision.
    #[arg(long = "f64", global = true)]
    use_f64: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with a five-fold split.
    GenPhantom(gen::GenArgs),
    /// Train a network on all folds but one, writing checkpoints and a loss log.
    Train(train::TrainArgs),
    /// Sliding-window prediction for one or more samples.
    Infer(infer::InferArgs),
    /// Score predictions against ground truth.
    Eval(eval::EvalArgs),
    /// Run the built-in gradient, attention, pipeline and metric checks.
    Verify(verify::VerifyArgs),
    /// Write the minimum intensity projection of a sequence.
    Minip(preprocess::MinipArgs),
    /// Resample a sequence to a fixed number of frames.
    Resample(preprocess::ResampleArgs),
}

/// Options shared by every subcommand after merging the config file.
pub struct Globals {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub use_f64: bool,
    pub file: RunConfig,
}

impl Globals {
    /// The output directory, or a usage error (exit 2).
    pub fn require_out(&self) -> PathBuf {
        match &self.out {
            Some(p) => p.clone(),
            None => usage_exit("the following required argument was not provided: --out <OUT>"),
        }
    }

    pub fn run_config(&self, command: &str, settings: &impl serde::Serialize) -> RunConfig {
        RunConfig {
            command: command.to_string(),
            seed: Some(self.seed),
            out: self.out.clone(),
            f64: Some(self.use_f64),
            settings: serde_json::to_value(settings).expect("settings serialize"),
        }
    }
}

pub fn usage_exit(msg: &str) -> ! {
    Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, msg).exit()
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Config(_) | Error::Generation(_) => 2,
        Error::Io { .. } | Error::Format { .. } | Error::Data(_) | Error::Dimension(_) | Error::MetricSchema { .. } => 3,
        Error::NonFinite(_) => 4,
        Error::Mismatch(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code(&e));
            }
        },
        None => RunConfig::default(),
    };
    let g = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| file.out.clone()),
        use_f64: cli.use_f64 || file.f64.unwrap_or(false),
        file,
    };
    let result = match cli.command {
        Command::GenPhantom(a) => gen::run(a, &g),
        Command::Train(a) => train::run(a, &g),
        Command::Infer(a) => infer::run(a, &g),
        Command::Eval(a) => eval::run(a, &g),
        Command::Verify(a) => verify::run(a),
        Command::Minip(a) => preprocess::run_minip(a, &g),
        Command::Resample(a) => preprocess::run_resample(a, &g),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
