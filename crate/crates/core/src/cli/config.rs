//! Flag, environment and file configuration merged into one resolved view.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::GraphFormat;
use crate::model::{ModelConfig, ModelKind};
use crate::pipeline::TrainConfig;
use crate::util::read_text;

pub const DEFAULT_DIM: usize = 100;
pub const DEFAULT_STEPS: usize = 4;
pub const DEFAULT_LR: f64 = 0.001;
pub const DEFAULT_BATCH: usize = 32;
pub const DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_TOP: usize = 20;

/// Every setting, as given on the command line, in the environment or in
/// the configuration file. Unset values fall through to the next source.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Java file, directory of .java files, or fragment record file (.jsonl)
    #[arg(long, env = "FLOWCLONE_INPUT")]
    pub input: Option<PathBuf>,

    /// Pair list (id1, id2, label, clone type); training pairs for `train`
    #[arg(long, env = "FLOWCLONE_PAIRS")]
    pub pairs: Option<PathBuf>,

    /// Validation pair list for `train`; without it the pairs are split 8:1:1
    #[arg(long, env = "FLOWCLONE_VALID_PAIRS")]
    pub valid_pairs: Option<PathBuf>,

    /// Output file or directory [default: per command]
    #[arg(long, env = "FLOWCLONE_OUT")]
    pub out: Option<PathBuf>,

    /// Graph export format: dot or json [default: dot]
    #[arg(long, env = "FLOWCLONE_FORMAT")]
    pub format: Option<GraphFormat>,

    /// Model: gmn or ggnn [default for train: gmn]; other commands check the checkpoint against it
    #[arg(long, env = "FLOWCLONE_MODEL")]
    pub model: Option<ModelKind>,

    /// Trained checkpoint to load
    #[arg(long, env = "FLOWCLONE_CHECKPOINT")]
    pub checkpoint: Option<PathBuf>,

    /// Node state and embedding dimension [default: 100]
    #[arg(long, env = "FLOWCLONE_DIM")]
    pub dim: Option<usize>,

    /// Propagation steps [default: 4]
    #[arg(long, env = "FLOWCLONE_STEPS")]
    pub steps: Option<usize>,

    /// Adam learning rate [default: 0.001]
    #[arg(long, env = "FLOWCLONE_LR")]
    pub lr: Option<f64>,

    /// Pairs per minibatch [default: 32]
    #[arg(long, env = "FLOWCLONE_BATCH")]
    pub batch: Option<usize>,

    /// Training epochs [default: 10]
    #[arg(long, env = "FLOWCLONE_EPOCHS")]
    pub epochs: Option<usize>,

    /// Seed for initialization, sampling, splits and corpus generation [default: 0]
    #[arg(long, env = "FLOWCLONE_SEED")]
    pub seed: Option<u64>,

    /// Non-clone pairs kept per clone pair in each epoch; 0 keeps all [default: 1]
    #[arg(long, env = "FLOWCLONE_BALANCE")]
    pub balance: Option<f64>,

    /// Minimum label count for the vocabulary [default: 1]
    #[arg(long, env = "FLOWCLONE_MIN_COUNT")]
    pub min_count: Option<usize>,

    /// Similarity threshold; a pair is a clone when its score is at least this [default: from the checkpoint]
    #[arg(long, env = "FLOWCLONE_THRESHOLD", allow_hyphen_values = true)]
    pub threshold: Option<f64>,

    /// Worker threads [default: all cores]
    #[arg(long, env = "FLOWCLONE_WORKERS")]
    pub workers: Option<usize>,

    /// Single-threaded run (same results as any worker count, kept for audits)
    #[arg(long, env = "FLOWCLONE_DETERMINISTIC")]
    #[serde(default)]
    pub deterministic: bool,

    /// Number of functionalities for `synth` [default: 4]
    #[arg(long, env = "FLOWCLONE_FUNCTIONALITIES")]
    pub functionalities: Option<usize>,

    /// Variants per functionality for `synth` [default: 10]
    #[arg(long, env = "FLOWCLONE_VARIANTS")]
    pub variants: Option<usize>,

    /// Attention cells exported per pair [default: 20]
    #[arg(long, env = "FLOWCLONE_TOP")]
    pub top: Option<usize>,

    /// Directory for cached flow graphs [default: no cache]
    #[arg(long, env = "FLOWCLONE_CACHE")]
    pub cache: Option<PathBuf>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr; $($field:ident),*) => {
        Settings {
            $($field: $hi.$field.or($lo.$field),)*
            deterministic: $hi.deterministic || $lo.deterministic,
        }
    };
}

impl Settings {
    /// Values from `self`, falling back to `lower`.
    pub fn or(self, lower: Settings) -> Settings {
        overlay!(self, lower; input, pairs, valid_pairs, out, format, model, checkpoint, dim, steps,
            lr, batch, epochs, seed, balance, min_count, threshold, workers, functionalities,
            variants, top, cache)
    }

    pub fn from_toml(path: &Path) -> Result<Settings> {
        toml::from_str(&read_text(path)?).map_err(|e| Error::format(path.display(), e.to_string()))
    }
}

/// Settings after defaults, as echoed to the run log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub valid_pairs: Option<PathBuf>,
    pub out: PathBuf,
    pub format: GraphFormat,
    pub model: Option<ModelKind>,
    pub checkpoint: Option<PathBuf>,
    pub dim: usize,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub balance: f64,
    pub min_count: usize,
    pub threshold: Option<f64>,
    pub workers: Option<usize>,
    pub deterministic: bool,
    pub functionalities: usize,
    pub variants: usize,
    pub top: usize,
    pub cache: Option<PathBuf>,
}

impl RunConfig {
    pub fn resolve(command: &str, s: Settings) -> RunConfig {
        let default_out = match command {
            "synth" => "synthetic",
            "train" => "run",
            "graph" => "graphs",
            "eval" => "eval",
            "predict" => "predictions.tsv",
            "attention" => "attention.jsonl",
            "tune" => "threshold.json",
            _ => ".",
        };
        RunConfig {
            command: command.to_string(),
            input: s.input,
            pairs: s.pairs,
            valid_pairs: s.valid_pairs,
            out: s.out.unwrap_or_else(|| PathBuf::from(default_out)),
            format: s.format.unwrap_or(GraphFormat::Dot),
            model: s.model,
            checkpoint: s.checkpoint,
            dim: s.dim.unwrap_or(DEFAULT_DIM),
            steps: s.steps.unwrap_or(DEFAULT_STEPS),
            lr: s.lr.unwrap_or(DEFAULT_LR),
            batch: s.batch.unwrap_or(DEFAULT_BATCH),
            epochs: s.epochs.unwrap_or(DEFAULT_EPOCHS),
            seed: s.seed.unwrap_or(0),
            balance: s.balance.unwrap_or(1.0),
            min_count: s.min_count.unwrap_or(1),
            threshold: s.threshold,
            workers: if s.deterministic { Some(1) } else { s.workers },
            deterministic: s.deterministic,
            functionalities: s.functionalities.unwrap_or(4),
            variants: s.variants.unwrap_or(10),
            top: s.top.unwrap_or(DEFAULT_TOP),
            cache: s.cache,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: ModelConfig::new(self.model.unwrap_or(ModelKind::Gmn), self.dim, self.steps),
            lr: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            seed: self.seed,
            balance: (self.balance != 0.0).then_some(self.balance),
            min_count: self.min_count,
        }
    }

    /// Lists every problem at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let needs: &[&str] = match self.command.as_str() {
            "graph" => &["input"],
            "train" => &["input", "pairs"],
            "tune" | "eval" | "predict" | "attention" => &["input", "pairs", "checkpoint"],
            _ => &[],
        };
        for &name in needs {
            let given = match name {
                "input" => self.input.is_some(),
                "pairs" => self.pairs.is_some(),
                _ => self.checkpoint.is_some(),
            };
            if !given {
                problems.push(format!("`{}` needs --{name}", self.command));
            }
        }
        if self.command == "train" {
            if let Err(Error::Config(p)) = self.train_config().validate() {
                problems.extend(p);
            }
            if !(self.balance.is_finite() && self.balance >= 0.0) {
                problems.retain(|p| !p.starts_with("balance"));
                problems.push(format!("balance must be zero or positive, got {}", self.balance));
            }
        }
        if self.command == "synth" {
            if self.functionalities < 2 {
                problems.push("functionalities must be at least 2".into());
            }
            if self.variants == 0 {
                problems.push("variants must be at least 1".into());
            }
        }
        if let Some(t) = self.threshold {
            if !(-1.0..=1.0).contains(&t) {
                problems.push(format!("threshold must lie in [-1, 1], got {t}"));
            }
        }
        if self.workers == Some(0) {
            problems.push("workers must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
