//! The `flowclone` command line.
//!
//! Every setting can come from a flag, from a `FLOWCLONE_<NAME>` environment
//! variable, or from a TOML file given with `--config` (keys are the flag
//! names with `_` for `-`). Flags win over the environment, which wins over
//! the file; anything left unset takes its built-in default.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 runtime or numeric error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Result;
use crate::pipeline::with_workers;
use config::{RunConfig, Settings};

#[derive(Debug, Parser)]
#[command(name = "flowclone", version, about = "Code clone detection with graph neural networks over flow-augmented ASTs")]
pub struct Cli {
    /// TOML file with values for any of the flags
    #[arg(long, global = true, env = "FLOWCLONE_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build flow graphs and export them as DOT or JSON files
    Graph(Settings),
    /// Generate the synthetic clone corpus (fragments, pairs, manifest)
    Synth(Settings),
    /// Train a model; writes checkpoint, log, resolved config and splits
    Train(Settings),
    /// Pick the F1-maximizing threshold on a validation pair list
    Tune(Settings),
    /// Report P/R/F1, threshold sweep, ROC/AUC and per-type results
    Eval(Settings),
    /// Score pairs and write id1, id2, score, verdict rows
    Predict(Settings),
    /// Export cross-graph attention of a GMN for each pair
    Attention(Settings),
}

impl Command {
    fn split(self) -> (&'static str, Settings) {
        match self {
            Command::Graph(s) => ("graph", s),
            Command::Synth(s) => ("synth", s),
            Command::Train(s) => ("train", s),
            Command::Tune(s) => ("tune", s),
            Command::Eval(s) => ("eval", s),
            Command::Predict(s) => ("predict", s),
            Command::Attention(s) => ("attention", s),
        }
    }
}

fn resolve(cli: Cli) -> Result<RunConfig> {
    let (name, flags) = cli.command.split();
    let file = match &cli.config {
        Some(path) => Settings::from_toml(path)?,
        None => Settings::default(),
    };
    let cfg = RunConfig::resolve(name, flags.or(file));
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cfg: &RunConfig) -> Result<()> {
    eprintln!("# resolved configuration\n{}", cfg.to_toml());
    with_workers(cfg.workers, || match cfg.command.as_str() {
        "graph" => commands::graph(cfg),
        "synth" => commands::synth(cfg),
        "train" => commands::train(cfg),
        "tune" => commands::tune(cfg),
        "eval" => commands::eval(cfg),
        "predict" => commands::predict(cfg),
        "attention" => commands::attention(cfg),
        other => unreachable!("unknown command {other}"),
    })?
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match resolve(cli).and_then(|cfg| execute(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
