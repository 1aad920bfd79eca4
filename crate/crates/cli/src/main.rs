mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<beflow::ModelError> for CliError {
    fn from(e: beflow::ModelError) -> Self {
        match e {
            beflow::ModelError::Diverged { .. } | beflow::ModelError::NonFinite { .. } => {
                CliError::Numeric(e.to_string())
            }
            beflow::ModelError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "beflow", version, about = "Elementary reaction step prediction on bond-electron matrices")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean a corpus and report rejects.
    Validate {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Train a model and write the best checkpoint.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Sample one step repeatedly and rank the products.
    Sample {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        reactants: String,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        rounding: Option<String>,
        /// Turn the lone-pair validity fix off.
        #[arg(long)]
        no_fix: bool,
    },
    /// Beam search over multi-step pathways.
    Search {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        reactants: String,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Step, pathway and conservation metrics on a test corpus.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Comma separated k values.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Failure-mode histogram over every sample of a corpus.
    Failures {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        rounding: Option<String>,
        #[arg(long)]
        no_fix: bool,
    },
}

fn push(set: &mut Vec<String>, key: &str, value: Option<String>) {
    if let Some(v) = value {
        set.push(format!("{key}={v}"));
    }
}

fn quoted(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| format!("{:?}", p.display().to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut set = cli.common.set.clone();
    push(&mut set, "out_dir", quoted(&cli.common.out));
    match cli.command {
        Command::Validate { corpus } => {
            push(&mut set, "corpus", quoted(&corpus));
            commands::validate(&config::RunConfig::load(cli.common.config.as_deref(), &set)?)
        }
        Command::Train { corpus } => {
            push(&mut set, "corpus", quoted(&corpus));
            commands::train(&config::RunConfig::load(cli.common.config.as_deref(), &set)?)
        }
        Command::Sample { checkpoint, reactants, samples, rounding, no_fix } => {
            push(&mut set, "checkpoint", quoted(&checkpoint));
            push(&mut set, "samples", samples.map(|s| s.to_string()));
            push(&mut set, "rounding", rounding.map(|r| format!("{r:?}")));
            if no_fix {
                set.push("validity_fix=false".into());
            }
            commands::sample(&config::RunConfig::load(cli.common.config.as_deref(), &set)?, &reactants)
        }
        Command::Search { checkpoint, reactants, width, depth, samples } => {
            push(&mut set, "checkpoint", quoted(&checkpoint));
            push(&mut set, "width", width.map(|s| s.to_string()));
            push(&mut set, "depth", depth.map(|s| s.to_string()));
            push(&mut set, "samples", samples.map(|s| s.to_string()));
            commands::search(&config::RunConfig::load(cli.common.config.as_deref(), &set)?, &reactants)
        }
        Command::Evaluate { checkpoint, corpus, ks } => {
            push(&mut set, "checkpoint", quoted(&checkpoint));
            push(&mut set, "corpus", quoted(&corpus));
            push(&mut set, "ks", ks.map(|k| format!("{k:?}")));
            commands::evaluate(&config::RunConfig::load(cli.common.config.as_deref(), &set)?)
        }
        Command::Failures { checkpoint, corpus, rounding, no_fix } => {
            push(&mut set, "checkpoint", quoted(&checkpoint));
            push(&mut set, "corpus", quoted(&corpus));
            push(&mut set, "rounding", rounding.map(|r| format!("{r:?}")));
            if no_fix {
                set.push("validity_fix=false".into());
            }
            // the failure analysis rounds the full matrix unless told otherwise
            let defaults = ["rounding=full_matrix".to_string()];
            commands::failures(&config::RunConfig::load_with(&defaults, cli.common.config.as_deref(), &set)?)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
