//! `iha`: train shadow models, precompute Hessians, score membership
//! attacks, and evaluate them, end to end from one JSON config.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing artifact: {path} (run the earlier pipeline stages first)")]
    MissingArtifact { path: PathBuf },
    #[error("unknown attack id '{0}' in this config")]
    UnknownAttack(String),
    #[error(transparent)]
    Data(#[from] iha_core::data::DataError),
    #[error(transparent)]
    Model(#[from] iha_core::model::ModelError),
    #[error(transparent)]
    Train(#[from] iha_core::training::TrainError),
    #[error(transparent)]
    Linalg(#[from] iha_core::linalg::LinalgError),
    #[error(transparent)]
    Dynamics(#[from] iha_core::dynamics::DynamicsError),
    #[error(transparent)]
    Attack(#[from] iha_core::attacks::AttackError),
    #[error(transparent)]
    Game(#[from] iha_core::game::GameError),
    #[error(transparent)]
    Eval(#[from] iha_core::eval::EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "Config",
            Self::MissingArtifact { .. } => "MissingArtifact",
            Self::UnknownAttack(_) => "UnknownAttack",
            Self::Data(_) => "Data",
            Self::Model(_) => "Model",
            Self::Train(_) => "Train",
            Self::Linalg(_) => "Linalg",
            Self::Dynamics(_) => "Dynamics",
            Self::Attack(_) => "Attack",
            Self::Game(_) => "Game",
            Self::Eval(_) => "Eval",
            Self::Io(_) => "Io",
            Self::Json(_) => "Json",
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let mut body = json!({
            "kind": self.kind(),
            "message": self.to_string(),
        });
        if let Self::MissingArtifact { path } = self {
            body["path"] = json!(path.display().to_string());
        }
        json!({ "error": body })
    }
}

#[derive(Parser)]
#[command(
    name = "iha",
    about = "Membership-inference auditing via inverse-Hessian scoring",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the game's models and write parameters, masks, and a manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Precompute and persist the member-set Hessian eigendecompositions.
    Hessian {
        #[arg(long)]
        config: PathBuf,
        /// Only this model index (all models otherwise).
        #[arg(long)]
        model: Option<usize>,
    },
    /// Score one attack against target models, writing score tables.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Attack id from the config's attack list.
        #[arg(long)]
        attack: String,
        /// Target model index; omit to audit every model.
        #[arg(long)]
        target: Option<usize>,
    },
    /// Compute ROC/AUC/TPR metrics and agreement from the score tables.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Verify the stationary SGD theory against simulation.
    Dynamics {
        #[command(subcommand)]
        command: DynamicsCommand,
    },
    /// Train, precompute, audit, and evaluate in one deterministic run.
    RunAll {
        /// Config file; a bundled synthetic experiment is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the bundled config.
        #[arg(long, default_value = "iha-out")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DynamicsCommand {
    /// Compare theoretical and simulated noise covariance, stationary
    /// fluctuation, and posterior log-density; emit a JSON report.
    Verify {
        /// Monte-Carlo batches for the noise covariance check.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Thinned snapshots for the fluctuation check.
        #[arg(long, default_value_t = 40_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Ok(threads) = std::env::var("IHA_THREADS") {
        let threads: usize = threads
            .parse()
            .map_err(|_| CliError::Config(format!("IHA_THREADS='{threads}' is not a number")))?;
        iha_core::exec::init_thread_pool(threads);
    }
    match cli.command {
        Command::Train { config } => {
            commands::train::run(&config::ExperimentConfig::load(&config)?)
        }
        Command::Hessian { config, model } => {
            commands::hessian::run(&config::ExperimentConfig::load(&config)?, model)
        }
        Command::Audit {
            config,
            attack,
            target,
        } => commands::audit::run(&config::ExperimentConfig::load(&config)?, &attack, target),
        Command::Evaluate { config } => {
            commands::evaluate::run(&config::ExperimentConfig::load(&config)?)
        }
        Command::Dynamics {
            command:
                DynamicsCommand::Verify {
                    trials,
                    samples,
                    seed,
                    out,
                },
        } => commands::dynamics::run(trials, samples, seed, out.as_deref()),
        Command::RunAll { config, out } => {
            let cfg = match config {
                Some(path) => config::ExperimentConfig::load(&path)?,
                None => config::ExperimentConfig::bundled_synthetic(out),
            };
            commands::run_all::run(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::FAILURE
        }
    }
}
