//! The iterative batch evaluation loop.
//!
//! Round 1 scores a seeded random partition. Every later round regroups the
//! samples with the configured strategy, using each sample's mean score so
//! far (or its last score), and the final score of a sample is the mean of
//! its per-round scores.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batching::{self, Batch, BatchingError, Partition};
use crate::judge::{CostLedger, Judge, JudgeError, JudgeRequest, LedgerSnapshot, TokenUsage};
use crate::parsing::{parse_batch_scores, ParseError};
use crate::prompts::{render, PromptError, PromptTemplate};
use crate::seed;
use crate::types::{text_enum, Criterion, Procedure, Sample, Strategy, ValidationError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    InvalidSample(#[from] ValidationError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Batching(#[from] BatchingError),
    #[error("round {round}, batch {batch}: {source}")]
    JudgeUnavailable {
        round: usize,
        batch: usize,
        source: JudgeError,
    },
    #[error("score table has no completed rounds")]
    EmptyTable,
}

/// Which per-sample score drives repartitioning between rounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepartitionBasis {
    /// Mean over every completed round.
    #[default]
    RunningMean,
    /// The most recent round only.
    LastRound,
}

text_enum!(RepartitionBasis, "repartition basis", {
    RunningMean => "running_mean",
    LastRound => "last_round",
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub rounds: usize,
    pub batch_size: usize,
    pub strategy: Strategy,
    pub procedure: Procedure,
    pub temperature: f64,
    pub seed: u64,
    pub max_parse_retries: u32,
    pub max_in_flight: usize,
    pub basis: RepartitionBasis,
    pub max_output: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            batch_size: 10,
            strategy: Strategy::Heterogeneous,
            procedure: Procedure::TwoStage,
            temperature: 0.2,
            seed: 0,
            max_parse_retries: 3,
            max_in_flight: 4,
            basis: RepartitionBasis::RunningMean,
            max_output: 2048,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |msg: &str| Err(EngineError::ConfigInvalid(msg.to_string()));
        if self.rounds == 0 {
            return fail("rounds must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return fail("temperature must lie in [0, 2]");
        }
        if self.max_in_flight == 0 {
            return fail("in-flight limit must be at least 1");
        }
        Ok(())
    }
}

/// Per-sample score history, one slot per completed round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub entries: BTreeMap<String, Vec<Option<f64>>>,
    pub rounds_completed: usize,
}

impl ScoreTable {
    pub fn new<'a>(ids: impl IntoIterator<Item = &'a String>) -> Self {
        Self {
            entries: ids.into_iter().map(|id| (id.clone(), Vec::new())).collect(),
            rounds_completed: 0,
        }
    }

    /// Appends one round. Samples absent from `scores` get an empty slot.
    pub fn merge_round(&mut self, scores: &HashMap<String, f64>) {
        for (id, slots) in self.entries.iter_mut() {
            slots.push(scores.get(id).copied());
        }
        self.rounds_completed += 1;
    }

    pub fn round(&self, round: usize) -> BTreeMap<String, f64> {
        self.entries
            .iter()
            .filter_map(|(id, slots)| slots.get(round).copied().flatten().map(|s| (id.clone(), s)))
            .collect()
    }

    /// Mean of present slots among the first `rounds` rounds.
    pub fn mean_through(&self, rounds: usize) -> BTreeMap<String, f64> {
        self.entries
            .iter()
            .filter_map(|(id, slots)| {
                let present: Vec<f64> = slots.iter().take(rounds).flatten().copied().collect();
                (!present.is_empty())
                    .then(|| (id.clone(), present.iter().sum::<f64>() / present.len() as f64))
            })
            .collect()
    }

    pub fn present_scores(&self) -> Vec<f64> {
        self.entries.values().flatten().flatten().copied().collect()
    }
}

/// Per-sample mean over present slots, plus the ids with no score at all.
pub fn ensemble_scores(table: &ScoreTable) -> Result<(BTreeMap<String, f64>, Vec<String>), EngineError> {
    if table.rounds_completed == 0 {
        return Err(EngineError::EmptyTable);
    }
    let ensemble = table.mean_through(table.rounds_completed);
    let missing = table
        .entries
        .keys()
        .filter(|id| !ensemble.contains_key(*id))
        .cloned()
        .collect();
    Ok((ensemble, missing))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseStatus {
    Ok { clamped: Vec<usize> },
    ParseFailed { error: ParseError },
}

/// One prompt/response exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub round: usize,
    pub batch: usize,
    pub attempt: u32,
    pub sample_ids: Vec<String>,
    pub prompt: String,
    pub response: String,
    pub usage: TokenUsage,
    pub parse_status: ParseStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub table: ScoreTable,
    pub ensemble: BTreeMap<String, f64>,
    /// Samples that never produced a parseable score.
    pub missing: Vec<String>,
    pub partitions: Vec<Partition>,
    pub transcripts: Vec<Transcript>,
    pub ledger: LedgerSnapshot,
    pub failed_batches: usize,
    pub total_batches: usize,
}

struct BatchResult {
    scores: Option<Vec<f64>>,
    transcripts: Vec<Transcript>,
}

struct RunContext<'a> {
    by_id: HashMap<&'a str, &'a Sample>,
    criterion: &'a Criterion,
    template: &'a PromptTemplate,
    config: &'a RunConfig,
    judge: &'a dyn Judge,
    ledger: &'a CostLedger,
}

impl RunContext<'_> {
    fn evaluate(&self, round: usize, index: usize, batch: &Batch) -> Result<BatchResult, EngineError> {
        let samples: Vec<&Sample> = batch.ids().iter().map(|id| self.by_id[id.as_str()]).collect();
        let prompt = render(self.template, &samples, self.criterion)?;
        let request = JudgeRequest {
            prompt,
            temperature: self.config.temperature,
            max_output: self.config.max_output,
            round,
            batch_index: index,
            sample_ids: batch.ids().to_vec(),
        };
        let judge_failure = |source| EngineError::JudgeUnavailable { round, batch: index, source };
        let mut transcripts = Vec::new();
        for attempt in 0..=self.config.max_parse_retries {
            self.ledger.check_budget().map_err(judge_failure)?;
            let response = self.judge.complete(&request).map_err(judge_failure)?;
            let budget = self.ledger.record(response.usage);
            let parsed = parse_batch_scores(&response.text, batch.len(), self.criterion, self.config.procedure);
            let (status, scores) = match parsed {
                Ok(p) => (
                    ParseStatus::Ok { clamped: p.clamped.iter().copied().collect() },
                    Some(p.ordered()),
                ),
                Err(error) => (ParseStatus::ParseFailed { error }, None),
            };
            transcripts.push(Transcript {
                round,
                batch: index,
                attempt,
                sample_ids: request.sample_ids.clone(),
                prompt: request.prompt.clone(),
                response: response.text,
                usage: response.usage,
                parse_status: status,
            });
            budget.map_err(judge_failure)?;
            if scores.is_some() {
                return Ok(BatchResult { scores, transcripts });
            }
        }
        Ok(BatchResult { scores: None, transcripts })
    }

    fn evaluate_round(&self, partition: &Partition) -> Result<Vec<BatchResult>, EngineError> {
        let count = partition.batches.len();
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<BatchResult, EngineError>>>> =
            Mutex::new((0..count).map(|_| None).collect());
        let workers = self.config.max_in_flight.min(count).max(1);
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= count {
                        break;
                    }
                    let result = self.evaluate(partition.round, i, &partition.batches[i]);
                    let failed = result.is_err();
                    slots.lock().expect("result lock poisoned")[i] = Some(result);
                    if failed {
                        // stop handing out new batches
                        next.store(count, Ordering::Relaxed);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(count);
        for slot in slots.into_inner().expect("result lock poisoned") {
            if let Some(result) = slot {
                out.push(result?);
            }
        }
        Ok(out)
    }
}

fn repartition_scores(
    table: &ScoreTable,
    basis: RepartitionBasis,
    criterion: &Criterion,
) -> HashMap<String, f64> {
    let running = table.mean_through(table.rounds_completed);
    let last = table.round(table.rounds_completed.saturating_sub(1));
    let fallback = if running.is_empty() {
        (criterion.score_min + criterion.score_max) / 2.0
    } else {
        running.values().sum::<f64>() / running.len() as f64
    };
    table
        .entries
        .keys()
        .map(|id| {
            let score = match basis {
                RepartitionBasis::LastRound => last.get(id).or_else(|| running.get(id)),
                RepartitionBasis::RunningMean => running.get(id),
            };
            (id.clone(), score.copied().unwrap_or(fallback))
        })
        .collect()
}

fn next_partition(
    ids: &[String],
    previous: &Partition,
    table: &ScoreTable,
    config: &RunConfig,
    criterion: &Criterion,
    round: usize,
) -> Result<Partition, BatchingError> {
    let scores = || repartition_scores(table, config.basis, criterion);
    match config.strategy {
        Strategy::Random => {
            batching::partition_random(ids, config.batch_size, &mut seed::round_rng(config.seed, round), round)
        }
        Strategy::Homogeneous => batching::partition_homogeneous(ids, &scores(), config.batch_size, round),
        Strategy::Heterogeneous => {
            batching::partition_heterogeneous_rotated(ids, &scores(), config.batch_size, round, round)
        }
        Strategy::Fixed => Ok(Partition { round, batches: previous.batches.clone() }),
    }
}

pub fn run_batcheval(
    samples: &[Sample],
    criterion: &Criterion,
    template: &PromptTemplate,
    config: &RunConfig,
    judge: &dyn Judge,
    ledger: &CostLedger,
) -> Result<RunOutcome, EngineError> {
    run_batcheval_with(samples, criterion, template, config, judge, ledger, &mut |_| {})
}

/// As [`run_batcheval`], handing each transcript to `sink` once its round
/// completes, in (batch, attempt) order.
pub fn run_batcheval_with(
    samples: &[Sample],
    criterion: &Criterion,
    template: &PromptTemplate,
    config: &RunConfig,
    judge: &dyn Judge,
    ledger: &CostLedger,
    sink: &mut dyn FnMut(&Transcript),
) -> Result<RunOutcome, EngineError> {
    config.validate()?;
    criterion
        .validate()
        .map_err(|e| EngineError::ConfigInvalid(e.to_string()))?;
    if samples.is_empty() {
        return Err(EngineError::EmptyInput);
    }
    let mut by_id = HashMap::with_capacity(samples.len());
    for sample in samples {
        sample.validate()?;
        if by_id.insert(sample.id.as_str(), sample).is_some() {
            return Err(EngineError::DuplicateId(sample.id.clone()));
        }
    }
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let ctx = RunContext { by_id, criterion, template, config, judge, ledger };

    let mut table = ScoreTable::new(&ids);
    let mut partitions = Vec::with_capacity(config.rounds);
    let mut transcripts = Vec::new();
    let mut failed_batches = 0;
    let mut partition =
        batching::partition_random(&ids, config.batch_size, &mut seed::round_rng(config.seed, 0), 0)?;
    for round in 0..config.rounds {
        if round > 0 {
            partition = next_partition(&ids, &partition, &table, config, criterion, round)?;
        }
        let results = ctx.evaluate_round(&partition)?;
        let mut round_scores = HashMap::with_capacity(ids.len());
        for (batch, result) in partition.batches.iter().zip(results) {
            match result.scores {
                Some(scores) => round_scores.extend(batch.ids().iter().cloned().zip(scores)),
                None => failed_batches += 1,
            }
            for t in result.transcripts {
                sink(&t);
                transcripts.push(t);
            }
        }
        table.merge_round(&round_scores);
        partitions.push(partition.clone());
    }

    let (ensemble, missing) = ensemble_scores(&table)?;
    let total_batches = partitions.iter().map(Partition::batch_count).sum();
    Ok(RunOutcome {
        table,
        ensemble,
        missing,
        partitions,
        transcripts,
        ledger: ledger.snapshot(samples.len()),
        failed_batches,
        total_batches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::synth;
    use crate::judge::{JudgeResponse, PriceTable, SimJudge, SimJudgeConfig};
    use crate::parsing::format_scores;
    use crate::prompts::TemplateSet;
    use crate::types::{Anchor, ScoreFormat};
    use proptest::prelude::*;
    use crate::types::Strategy;

    fn crit() -> Criterion {
        Criterion {
            name: "Quality".into(),
            definition: "How good is it?".into(),
            anchors: vec![Anchor { level: 1.0, description: "A float score near 1 means poor.".into() }],
            score_min: 1.0,
            score_max: 3.0,
            format: ScoreFormat::Decimal,
            heading: None,
        }
    }

    fn template() -> PromptTemplate {
        TemplateSet::builtin()
            .get("generic", Procedure::TwoStage, ScoreFormat::Decimal)
            .unwrap()
            .clone()
    }

    fn sim_for(samples: &[Sample], alpha: f64, sigma: f64) -> SimJudge {
        let cfg = SimJudgeConfig {
            true_quality: samples.iter().map(|s| (s.id.clone(), s.human_scores["Quality"])).collect(),
            bias_alpha: alpha,
            noise_sigma: sigma,
            seed: 3,
            format: ScoreFormat::Decimal,
        };
        SimJudge::new(cfg, &crit(), Procedure::TwoStage)
    }

    fn ledger() -> CostLedger {
        CostLedger::new(PriceTable::new("0.01", "0.03").unwrap())
    }

    #[test]
    fn ensemble_examples() {
        let mut t = ScoreTable::new(&["a".to_string(), "b".to_string()]);
        for (a, b) in [(2.0, Some(2.0)), (3.0, None), (2.5, Some(3.0)), (2.5, None), (2.0, None)] {
            let mut m = HashMap::from([("a".to_string(), a)]);
            if let Some(b) = b {
                m.insert("b".to_string(), b);
            }
            t.merge_round(&m);
        }
        let (e, missing) = ensemble_scores(&t).unwrap();
        assert!((e["a"] - 2.4).abs() < 1e-12);
        assert!((e["b"] - 2.5).abs() < 1e-12);
        assert!(missing.is_empty());
        assert!(matches!(ensemble_scores(&ScoreTable::default()), Err(EngineError::EmptyTable)));
    }

    #[test]
    fn ensemble_matches_recomputation() {
        let mut rng = seed::rng(8, "tables", &[]);
        use rand::Rng;
        for _ in 0..100 {
            let ids: Vec<String> = (0..rng.random_range(1..12)).map(|i| format!("s{i}")).collect();
            let mut t = ScoreTable::new(&ids);
            let rounds = rng.random_range(1..6);
            for _ in 0..rounds {
                let mut m = HashMap::new();
                for id in &ids {
                    if rng.random_bool(0.8) {
                        m.insert(id.clone(), rng.random_range(1.0..3.0));
                    }
                }
                t.merge_round(&m);
            }
            let (e, missing) = ensemble_scores(&t).unwrap();
            for (id, slots) in &t.entries {
                let mut sum = 0.0;
                let mut count = 0;
                for s in slots.iter().flatten() {
                    sum += s;
                    count += 1;
                }
                if count == 0 {
                    assert!(missing.contains(id));
                } else {
                    assert!((e[id] - sum / count as f64).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            RunConfig { rounds: 0, ..Default::default() },
            RunConfig { batch_size: 0, ..Default::default() },
            RunConfig { temperature: 2.5, ..Default::default() },
            RunConfig { max_in_flight: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(EngineError::ConfigInvalid(_))));
        }
        let d = RunConfig::default();
        assert_eq!((d.rounds, d.batch_size, d.temperature), (5, 10, 0.2));
        assert_eq!(d.strategy, Strategy::Heterogeneous);
        assert_eq!(d.procedure, Procedure::TwoStage);
    }

    #[test]
    fn batch_counts_on_ragged_input() {
        let d = synth(125, &crit(), 1);
        let judge = sim_for(&d.samples, 0.5, 0.2);
        let out = run_batcheval(&d.samples, &crit(), &template(), &RunConfig::default(), &judge, &ledger()).unwrap();
        assert_eq!(out.table.rounds_completed, 5);
        assert!(out.table.entries.values().all(|s| s.len() == 5 && s.iter().all(Option::is_some)));
        for p in &out.partitions {
            assert_eq!(p.batch_count(), 13);
            assert!(p.covers_exactly(&d.ids()));
        }
        assert_eq!(out.transcripts.len(), 65);
        assert_eq!(out.total_batches, 65);
        let random_round = &out.partitions[0];
        let mut sizes = random_round.sizes();
        sizes.sort_unstable();
        assert_eq!(sizes[0], 5);
        assert!(sizes[1..].iter().all(|&s| s == 10));
    }

    #[test]
    fn single_sample_single_round() {
        let d = synth(1, &crit(), 2);
        let judge = sim_for(&d.samples, 0.0, 0.0);
        let cfg = RunConfig { rounds: 1, ..Default::default() };
        let out = run_batcheval(&d.samples, &crit(), &template(), &cfg, &judge, &ledger()).unwrap();
        let id = &d.samples[0].id;
        assert_eq!(out.partitions[0].sizes(), vec![1]);
        assert_eq!(out.ensemble[id], out.table.entries[id][0].unwrap());
    }

    #[test]
    fn deterministic_across_concurrency() {
        let d = synth(57, &crit(), 4);
        let judge = sim_for(&d.samples, 0.5, 0.3);
        let serial = RunConfig { max_in_flight: 1, seed: 9, ..Default::default() };
        let parallel = RunConfig { max_in_flight: 8, ..serial.clone() };
        let a = run_batcheval(&d.samples, &crit(), &template(), &serial, &judge, &ledger()).unwrap();
        let b = run_batcheval(&d.samples, &crit(), &template(), &parallel, &judge, &ledger()).unwrap();
        assert_eq!(serde_json::to_string(&a.table).unwrap(), serde_json::to_string(&b.table).unwrap());
        assert_eq!(a.transcripts, b.transcripts);
    }

    #[test]
    fn ledger_matches_transcripts() {
        let d = synth(23, &crit(), 4);
        let judge = sim_for(&d.samples, 0.5, 0.3);
        let l = ledger();
        let out = run_batcheval(&d.samples, &crit(), &template(), &RunConfig::default(), &judge, &l).unwrap();
        let prompt: u64 = out.transcripts.iter().map(|t| t.usage.prompt_tokens).sum();
        let completion: u64 = out.transcripts.iter().map(|t| t.usage.completion_tokens).sum();
        assert_eq!(out.ledger.prompt_tokens, prompt);
        assert_eq!(out.ledger.completion_tokens, completion);
        assert_eq!(out.ledger.calls, out.transcripts.len() as u64);
    }

    /// Fails to follow the template for chosen (round, batch) pairs.
    struct Flaky {
        inner: SimJudge,
        broken: Vec<(usize, usize)>,
        calls: AtomicUsize,
    }

    impl Judge for Flaky {
        fn complete(&self, r: &JudgeRequest) -> Result<JudgeResponse, JudgeError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            if self.broken.contains(&(r.round, r.batch_index)) {
                let n = r.sample_ids.len();
                let short = format_scores(&vec![2.0; n.saturating_sub(1)], Procedure::TwoStage, ScoreFormat::Decimal);
                return Ok(JudgeResponse { text: short, usage: TokenUsage::default() });
            }
            self.inner.complete(r)
        }
        fn mode(&self) -> &str {
            "flaky"
        }
    }

    #[test]
    fn parse_exhaustion_leaves_gaps() {
        let d = synth(20, &crit(), 6);
        let flaky = Flaky {
            inner: sim_for(&d.samples, 0.0, 0.0),
            broken: vec![(0, 0), (1, 1)],
            calls: AtomicUsize::new(0),
        };
        let cfg = RunConfig { rounds: 2, batch_size: 10, max_parse_retries: 2, ..Default::default() };
        let out = run_batcheval(&d.samples, &crit(), &template(), &cfg, &flaky, &ledger()).unwrap();
        assert_eq!(out.failed_batches, 2);
        // two healthy batches once each, two broken batches three times each
        assert_eq!(flaky.calls.load(Ordering::Relaxed), 2 + 2 * 3);
        let r0_missing: Vec<&String> = out.partitions[0].batches[0].ids().iter().collect();
        for id in &r0_missing {
            assert_eq!(out.table.entries[*id][0], None);
        }
        assert!(out.table.entries.values().all(|s| s.len() == 2));
        let gap_both: Vec<&String> = out
            .table
            .entries
            .iter()
            .filter(|(_, s)| s.iter().all(Option::is_none))
            .map(|(id, _)| id)
            .collect();
        assert_eq!(out.missing.len(), gap_both.len());
    }

    struct Down;
    impl Judge for Down {
        fn complete(&self, _: &JudgeRequest) -> Result<JudgeResponse, JudgeError> {
            Err(JudgeError::Unavailable { attempts: 5, reason: "HTTP 503".into() })
        }
        fn mode(&self) -> &str {
            "down"
        }
    }

    #[test]
    fn judge_failure_aborts() {
        let d = synth(5, &crit(), 6);
        let err = run_batcheval(&d.samples, &crit(), &template(), &RunConfig::default(), &Down, &ledger()).unwrap_err();
        assert!(matches!(err, EngineError::JudgeUnavailable { round: 0, .. }));
    }

    #[test]
    fn budget_cap_aborts() {
        let d = synth(30, &crit(), 6);
        let judge = sim_for(&d.samples, 0.0, 0.0);
        let capped = CostLedger::new(PriceTable::new("1", "1").unwrap()).with_cap("0.001".parse().unwrap());
        let err = run_batcheval(&d.samples, &crit(), &template(), &RunConfig::default(), &judge, &capped).unwrap_err();
        assert!(matches!(
            err,
            EngineError::JudgeUnavailable { source: JudgeError::BudgetExceeded { .. }, .. }
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut d = synth(3, &crit(), 6);
        d.samples[1].id = d.samples[0].id.clone();
        let judge = sim_for(&d.samples, 0.0, 0.0);
        assert!(matches!(
            run_batcheval(&d.samples, &crit(), &template(), &RunConfig::default(), &judge, &ledger()),
            Err(EngineError::DuplicateId(_))
        ));
        assert!(matches!(
            run_batcheval(&[], &crit(), &template(), &RunConfig::default(), &judge, &ledger()),
            Err(EngineError::EmptyInput)
        ));
    }

    #[test]
    fn fixed_strategy_repeats_first_partition() {
        let d = synth(30, &crit(), 6);
        let judge = sim_for(&d.samples, 0.5, 0.2);
        let cfg = RunConfig { strategy: Strategy::Fixed, ..Default::default() };
        let out = run_batcheval(&d.samples, &crit(), &template(), &cfg, &judge, &ledger()).unwrap();
        for p in &out.partitions[1..] {
            assert_eq!(p.batches, out.partitions[0].batches);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn run_invariants(n in 1usize..60, b in 1usize..12, rounds in 1usize..4, strat in 0usize..4, last in any::<bool>()) {
            let strategy = [Strategy::Random, Strategy::Homogeneous, Strategy::Heterogeneous, Strategy::Fixed][strat];
            let d = synth(n, &crit(), n as u64);
            let judge = sim_for(&d.samples, 0.5, 0.3);
            let cfg = RunConfig {
                rounds,
                batch_size: b,
                strategy,
                basis: if last { RepartitionBasis::LastRound } else { RepartitionBasis::RunningMean },
                ..Default::default()
            };
            let out = run_batcheval(&d.samples, &crit(), &template(), &cfg, &judge, &ledger()).unwrap();
            for p in &out.partitions {
                prop_assert!(p.covers_exactly(&d.ids()));
            }
            for (id, slots) in &out.table.entries {
                prop_assert_eq!(slots.len(), rounds);
                let e = out.ensemble[id];
                prop_assert!((1.0..=3.0).contains(&e));
                let all: Vec<f64> = slots.iter().map(|s| s.unwrap()).collect();
                prop_assert!((e - all.iter().sum::<f64>() / all.len() as f64).abs() <= 1e-12);
            }
        }
    }
}
