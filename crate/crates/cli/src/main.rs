mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "irgnm", version, about = "Adaptive finite element IRGNM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the file.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Noise seed; overrides the file.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the constants and print the derived bounds.
    Validate(Common),
    /// Run the adaptive IRGNM once.
    Run(Common),
    /// Run the dense benchmark over a grid of noise levels.
    RateStudy(Common),
    /// Compare the error estimators with fine-mesh references.
    EstimatorStudy {
        #[command(flatten)]
        common: Common,
        /// Refinement factor of the reference mesh (a power of two, at least 4).
        #[arg(long, value_name = "N")]
        fine_factor: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, fine_factor) = match &cli.command {
        Command::Validate(c) | Command::Run(c) | Command::RateStudy(c) => (c, None),
        Command::EstimatorStudy { common, fine_factor } => (common, *fine_factor),
    };
    let cfg = match config::ConfigFile::load(&common.config) {
        Ok(c) => c.resolve(common.seed, common.out.clone(), fine_factor),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let wanted = match cli.command {
        Command::Validate(_) => config::StudyKind::Validate,
        Command::Run(_) => config::StudyKind::Single,
        Command::RateStudy(_) => config::StudyKind::RateStudy,
        Command::EstimatorStudy { .. } => config::StudyKind::EstimatorStudy,
    };
    if cfg.study != config::StudyKind::Single && cfg.study != wanted {
        log::warn!("config declares study {:?}, running {:?}", cfg.study, wanted);
    }
    let result = match cli.command {
        Command::Validate(_) => commands::validate(&cfg),
        Command::Run(_) => commands::run(&cfg),
        Command::RateStudy(_) => commands::rate_study(&cfg),
        Command::EstimatorStudy { .. } => commands::estimator_study(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
