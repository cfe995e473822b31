//! Options that can come from flags or a TOML file. Values in the file
//! take precedence over flags, and flags over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use batcheval::engine::RepartitionBasis;
use batcheval::{Procedure, ScoreFormat, Strategy};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::failure::Failure;

macro_rules! overlay {
    ($top:expr, $bottom:expr, [$($field:ident),+ $(,)?]) => {{
        let (top, bottom) = ($top, $bottom);
        Self {
            config: bottom.config,
            $($field: top.$field.or(bottom.$field),)+
            ..Default::default()
        }
    }};
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("reading {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    /// Chat-completion endpoint; key from JUDGE_API_KEY, base URL from JUDGE_API_BASE.
    Api,
    /// Deterministic simulated judge driven by the dataset's human scores.
    Sim,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    /// TOML file with any of these options (snake_case keys); its values win over flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset file (JSON lines).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Criterion to score; may be omitted when the dataset declares one.
    #[arg(long)]
    pub criterion: Option<String>,
    /// Output directory for the run artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of rounds [default: 5].
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Samples per batch [default: 10].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// random, homogeneous, heterogeneous or fixed [default: heterogeneous].
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// one_stage, two_stage or three_stage [default: two_stage].
    #[arg(long)]
    pub procedure: Option<Procedure>,
    /// Judge sampling temperature [default: 0.2].
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Seed for partitions and the simulated judge [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Re-asks per batch after an unparseable response [default: 3].
    #[arg(long)]
    pub max_parse_retries: Option<u32>,
    /// Batches sent concurrently within a round [default: 4].
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Scores used for regrouping: running_mean or last_round [default: running_mean].
    #[arg(long)]
    pub basis: Option<RepartitionBasis>,
    /// Override the criterion's score format: integer or decimal.
    #[arg(long)]
    pub format: Option<ScoreFormat>,
    /// Template task name [default: the dataset name if a template exists, else generic].
    #[arg(long)]
    pub task: Option<String>,
    /// Directory of `<task>.<procedure>.<format>.txt` templates overriding the bundled ones.
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    /// Judge backend [default: sim].
    #[arg(long, value_enum)]
    pub judge: Option<JudgeMode>,
    /// Simulated judge: weight of the batch-mean shift [default: 0.5].
    #[arg(long)]
    pub sim_alpha: Option<f64>,
    /// Simulated judge: standard deviation of per-score noise [default: 0.2].
    #[arg(long)]
    pub sim_sigma: Option<f64>,
    /// Simulated judge: noise seed [default: the run seed].
    #[arg(long)]
    pub sim_seed: Option<u64>,
    /// Live judge model name [default: gpt-4].
    #[arg(long)]
    pub model: Option<String>,
    /// Price per 1000 prompt tokens, as a decimal string [default: 0].
    #[arg(long)]
    pub price_prompt: Option<String>,
    /// Price per 1000 completion tokens, as a decimal string [default: 0].
    #[arg(long)]
    pub price_completion: Option<String>,
    /// Stop the run once spending passes this amount.
    #[arg(long)]
    pub budget: Option<String>,
}

impl RunOptions {
    pub fn resolve(self) -> Result<Self, Failure> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let file: RunOptions = read_toml(&path)?;
        Ok(file.overlay(self))
    }

    fn overlay(self, lower: Self) -> Self {
        overlay!(self, lower, [
            dataset, criterion, out, rounds, batch_size, strategy, procedure, temperature, seed,
            max_parse_retries, max_in_flight, basis, format, task, template_dir, judge, sim_alpha,
            sim_sigma, sim_seed, model, price_prompt, price_completion, budget,
        ])
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateOptions {
    /// TOML file with any of these options (snake_case keys, lists as arrays); its values win over flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Synthetic samples per run [default: 100].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Comma-separated strategies [default: heterogeneous].
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<Strategy>>,
    /// Comma-separated batch sizes [default: 10].
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<usize>>,
    /// Comma-separated round counts [default: 5].
    #[arg(long, value_delimiter = ',')]
    pub rounds: Option<Vec<usize>>,
    /// Comma-separated batch-mean shift weights [default: 0.5].
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Comma-separated noise standard deviations [default: 0.2].
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Comma-separated score formats [default: decimal].
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<ScoreFormat>>,
    /// Evaluation procedure [default: two_stage].
    #[arg(long)]
    pub procedure: Option<Procedure>,
    /// Comma-separated seeds [default: 0].
    #[arg(long, value_delimiter = ',', conflicts_with = "seed_count")]
    pub seeds: Option<Vec<u64>>,
    /// Use seeds 0..N instead of listing them.
    #[arg(long)]
    pub seed_count: Option<u64>,
    /// Average rows over seeds, one row per setting.
    #[arg(long)]
    #[serde(default)]
    pub aggregate: bool,
    /// CSV output file [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SimulateOptions {
    pub fn resolve(self) -> Result<Self, Failure> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let file: SimulateOptions = read_toml(&path)?;
        Ok(file.overlay(self))
    }

    fn overlay(self, lower: Self) -> Self {
        let aggregate = self.aggregate || lower.aggregate;
        let merged = overlay!(self, lower, [
            samples, strategies, batch_sizes, rounds, alphas, sigmas, formats, procedure, seeds,
            seed_count, out,
        ]);
        Self { aggregate, ..merged }
    }
}
