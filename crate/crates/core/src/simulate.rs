//! Parameter sweeps against the simulated judge on synthetic data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::synth;
use crate::diagnostics::{diagnose, DiagReport};
use crate::engine::{run_batcheval, EngineError, RunConfig, RunOutcome};
use crate::judge::{CostLedger, PriceTable, SimJudge, SimJudgeConfig};
use crate::metrics::MetricsError;
use crate::prompts::{PromptError, TemplateSet};
use crate::types::{Anchor, Criterion, Procedure, ScoreFormat, Strategy};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// The criterion used for synthetic runs: one quality on `[1, 3]`.
pub fn synthetic_criterion(format: ScoreFormat) -> Criterion {
    let unit = match format {
        ScoreFormat::Decimal => "float score",
        ScoreFormat::Integer => "score",
    };
    Criterion {
        name: "Quality".into(),
        definition: "How good is the text overall?".into(),
        anchors: vec![
            Anchor { level: 1.0, description: format!("A {unit} near 1 means the text is poor.") },
            Anchor { level: 2.0, description: format!("A {unit} near 2 means the text is acceptable.") },
            Anchor { level: 3.0, description: format!("A {unit} near 3 means the text is excellent.") },
        ],
        score_min: 1.0,
        score_max: 3.0,
        format,
        heading: None,
    }
}

/// One simulated setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub samples: usize,
    pub strategy: Strategy,
    pub batch_size: usize,
    pub rounds: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub format: ScoreFormat,
    pub procedure: Procedure,
    pub seed: u64,
}

impl Default for SimSetting {
    fn default() -> Self {
        Self {
            samples: 100,
            strategy: Strategy::Heterogeneous,
            batch_size: 10,
            rounds: 5,
            alpha: 0.5,
            sigma: 0.2,
            format: ScoreFormat::Decimal,
            procedure: Procedure::TwoStage,
            seed: 0,
        }
    }
}

pub struct SimRun {
    pub outcome: RunOutcome,
    pub quality: BTreeMap<String, f64>,
    pub report: DiagReport,
}

/// Synthesizes `samples` items, scores them with the simulated judge and
/// diagnoses the result against the hidden qualities. The dataset and the
/// judge noise both derive from `setting.seed`.
pub fn simulate_once(setting: &SimSetting) -> Result<SimRun, SimulateError> {
    if setting.samples == 0 {
        return Err(SimulateError::InvalidSweep("samples must be positive".into()));
    }
    if !(setting.sigma >= 0.0) || !setting.alpha.is_finite() {
        return Err(SimulateError::InvalidSweep("alpha must be finite and sigma non-negative".into()));
    }
    let criterion = synthetic_criterion(setting.format);
    let dataset = synth(setting.samples, &criterion, setting.seed);
    let quality: BTreeMap<String, f64> = dataset
        .samples
        .iter()
        .map(|s| (s.id.clone(), s.human_scores[&criterion.name]))
        .collect();
    let judge = SimJudge::new(
        SimJudgeConfig {
            true_quality: quality.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            bias_alpha: setting.alpha,
            noise_sigma: setting.sigma,
            seed: setting.seed,
            format: setting.format,
        },
        &criterion,
        setting.procedure,
    );
    let templates = TemplateSet::builtin();
    let template = templates.get("generic", setting.procedure, setting.format)?;
    let config = RunConfig {
        rounds: setting.rounds,
        batch_size: setting.batch_size,
        strategy: setting.strategy,
        procedure: setting.procedure,
        seed: setting.seed,
        ..RunConfig::default()
    };
    let ledger = CostLedger::new(PriceTable::default());
    let outcome = run_batcheval(&dataset.samples, &criterion, template, &config, &judge, &ledger)?;
    let report = diagnose(&outcome.table, &outcome.partitions, &criterion, Some(&quality), None)?;
    Ok(SimRun { outcome, quality, report })
}

/// A grid of settings: the cross product of every list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub samples: usize,
    pub strategies: Vec<Strategy>,
    pub batch_sizes: Vec<usize>,
    pub rounds: Vec<usize>,
    pub alphas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub formats: Vec<ScoreFormat>,
    pub procedure: Procedure,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let one = SimSetting::default();
        Self {
            samples: one.samples,
            strategies: vec![one.strategy],
            batch_sizes: vec![one.batch_size],
            rounds: vec![one.rounds],
            alphas: vec![one.alpha],
            sigmas: vec![one.sigma],
            formats: vec![one.format],
            procedure: one.procedure,
            seeds: vec![one.seed],
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SimulateError> {
        let empty = [
            ("strategies", self.strategies.is_empty()),
            ("batch sizes", self.batch_sizes.is_empty()),
            ("rounds", self.rounds.is_empty()),
            ("alphas", self.alphas.is_empty()),
            ("sigmas", self.sigmas.is_empty()),
            ("formats", self.formats.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(SimulateError::InvalidSweep(format!("no {name} given")));
        }
        if self.samples == 0 {
            return Err(SimulateError::InvalidSweep("samples must be positive".into()));
        }
        if self.batch_sizes.contains(&0) || self.rounds.contains(&0) {
            return Err(SimulateError::InvalidSweep("batch sizes and rounds must be positive".into()));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0)) || self.alphas.iter().any(|a| !a.is_finite()) {
            return Err(SimulateError::InvalidSweep("alphas must be finite and sigmas non-negative".into()));
        }
        Ok(())
    }

    pub fn settings(&self) -> Vec<SimSetting> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &batch_size in &self.batch_sizes {
                for &rounds in &self.rounds {
                    for &alpha in &self.alphas {
                        for &sigma in &self.sigmas {
                            for &format in &self.formats {
                                for &seed in &self.seeds {
                                    out.push(SimSetting {
                                        samples: self.samples,
                                        strategy,
                                        batch_size,
                                        rounds,
                                        alpha,
                                        sigma,
                                        format,
                                        procedure: self.procedure,
                                        seed,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// One output row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub rounds: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub format: ScoreFormat,
    pub seed: u64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub batch_bias: Option<f64>,
    pub reference_bias: Option<f64>,
    pub entropy: f64,
    pub variance: Option<f64>,
}

impl SweepRow {
    fn new(setting: &SimSetting, report: &DiagReport) -> Self {
        Self {
            strategy: setting.strategy,
            batch_size: setting.batch_size,
            rounds: setting.rounds,
            alpha: setting.alpha,
            sigma: setting.sigma,
            format: setting.format,
            seed: setting.seed,
            pearson: report.correlation.map(|c| c.pearson),
            spearman: report.correlation.map(|c| c.spearman),
            batch_bias: report.batch_bias.overall,
            reference_bias: report.reference_bias.as_ref().and_then(|b| b.overall),
            entropy: report.entropy.bits,
            variance: report.decomposition.last().map(|p| p.decomposition.variance),
        }
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, SimulateError> {
    spec.validate()?;
    spec.settings()
        .iter()
        .map(|s| Ok(SweepRow::new(s, &simulate_once(s)?.report)))
        .collect()
}
