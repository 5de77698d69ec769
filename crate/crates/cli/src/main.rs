mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use hyperlfh::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "hyperlfh", version, about = "Heterogeneous hypergraph learning on node and link tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Run seed; same as `--set seed=N`, applied last.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Floating-point width of the model (default 64).
    #[arg(long, global = true, value_parser = parse_precision)]
    pub precision: Option<Precision>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Self::Single => 32,
            Self::Double => 64,
        }
    }
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "32" => Ok(Precision::Single),
        "64" => Ok(Precision::Double),
        _ => Err(format!("expected 32 or 64, got {s:?}")),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the planted synthetic graph into --out.
    Synth,
    /// Graph directory utilities.
    Graph {
        #[command(subcommand)]
        action: GraphAction,
    },
    /// Train node classification; writes metrics and a checkpoint.
    Train,
    /// Evaluate a checkpoint on its graph and split.
    Eval {
        /// Checkpoint written by `train`.
        checkpoint: PathBuf,
    },
    /// Hide edges, train on the rest, classify hidden against absent pairs.
    Linkpred,
    /// Train once per value of sweep.param and seed; writes sweep.csv.
    Sweep,
    /// Compare analytic and numeric gradients of the united loss.
    Gradcheck,
}

#[derive(Subcommand, Debug)]
enum GraphAction {
    /// Load and check a graph directory.
    Validate { dir: PathBuf },
}

/// How a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input: configuration, files, arguments.
    Input(String),
    /// Non-finite values or a failed gradient check.
    Numerical(String),
}

impl From<hyperlfh::Error> for Failure {
    fn from(e: hyperlfh::Error) -> Self {
        match e {
            hyperlfh::Error::Divergence { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn command_with_keys() -> clap::Command {
    let keys = format!("Configuration keys:\n{}", RunConfig::help_text());
    let mut cmd = Cli::command().after_long_help(keys.clone()).after_help(keys.clone());
    fn annotate(cmd: clap::Command, keys: &str) -> clap::Command {
        let cmd = cmd.after_help(keys.to_string()).after_long_help(keys.to_string());
        cmd.mut_subcommands(|s| annotate(s, keys))
    }
    cmd = cmd.mut_subcommands(|s| annotate(s, &keys));
    cmd
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match command_with_keys().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Synth => commands::synth(&cli.common),
        Command::Graph {
            action: GraphAction::Validate { dir },
        } => commands::validate(dir),
        Command::Train => commands::train(&cli.common),
        Command::Eval { checkpoint } => commands::eval(&cli.common, checkpoint),
        Command::Linkpred => commands::linkpred(&cli.common),
        Command::Sweep => commands::sweep(&cli.common),
        Command::Gradcheck => commands::gradcheck(&cli.common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical error: {msg}");
            ExitCode::from(2)
        }
    }
}
