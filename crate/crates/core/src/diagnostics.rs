//! Post-run analyses over a score table: agreement with reference scores,
//! batch bias, score-distribution entropy and the per-round ensemble error
//! decomposition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::batching::Partition;
use crate::engine::ScoreTable;
use crate::metrics::{
    batch_bias, correlate, decompose, histogram, mean_decomposition, CorrelationReport, Decomposition, Histogram,
    MetricsError,
};
use crate::types::{Criterion, ScoreFormat};

/// 0.1 for decimal scores, 1 for integer scores.
pub fn default_bin_width(format: ScoreFormat) -> f64 {
    match format {
        ScoreFormat::Decimal => 0.1,
        ScoreFormat::Integer => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    /// Mean over the batches of each round.
    pub per_round: Vec<Option<f64>>,
    /// Mean over every batch of every round.
    pub overall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    pub format: ScoreFormat,
    pub bin_width: f64,
    pub bits: f64,
    pub histogram: Histogram,
}

/// Decomposition averaged over samples, using each sample's first
/// `rounds` scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPoint {
    pub rounds: usize,
    pub samples: usize,
    #[serde(flatten)]
    pub decomposition: Decomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagReport {
    pub samples: usize,
    pub rounds: usize,
    pub scored: usize,
    pub correlation: Option<CorrelationReport>,
    pub batch_bias: BiasSummary,
    /// Batch bias measured against the reference scores instead of the
    /// ensemble; only with a reference.
    pub reference_bias: Option<BiasSummary>,
    pub entropy: EntropySummary,
    pub decomposition: Vec<DecompositionPoint>,
}

fn mean_of(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// [`batch_bias`] of every batch, grouped by round, against `target`. Batch
/// members lacking a round score or a target are left out of their batch.
pub fn bias_by_round(
    table: &ScoreTable,
    partitions: &[Partition],
    target: &BTreeMap<String, f64>,
) -> Result<BiasSummary, MetricsError> {
    let mut per_round = Vec::with_capacity(partitions.len());
    let mut all = Vec::new();
    for (r, partition) in partitions.iter().enumerate() {
        let round = table.round(r);
        let mut biases = Vec::with_capacity(partition.batches.len());
        for batch in &partition.batches {
            let ids = batch.ids().iter().filter(|id| round.contains_key(*id) && target.contains_key(*id));
            let scored: BTreeMap<String, f64> = ids.clone().map(|id| (id.clone(), round[id])).collect();
            if scored.is_empty() {
                continue;
            }
            let reference: BTreeMap<String, f64> = ids.map(|id| (id.clone(), target[id])).collect();
            biases.push(batch_bias(&scored, &reference)?);
        }
        per_round.push(mean_of(&biases));
        all.extend(biases);
    }
    Ok(BiasSummary { per_round, overall: mean_of(&all) })
}

/// One point per round count `r = 1..=rounds`, each averaging the
/// decomposition of a sample's first `r` present scores against its
/// reference. Samples without a reference or without scores are skipped.
pub fn decomposition_curve(
    table: &ScoreTable,
    reference: &BTreeMap<String, f64>,
) -> Result<Vec<DecompositionPoint>, MetricsError> {
    let mut curve = Vec::with_capacity(table.rounds_completed);
    for r in 1..=table.rounds_completed {
        let mut items = Vec::new();
        for (id, slots) in &table.entries {
            let Some(&y) = reference.get(id) else { continue };
            let present: Vec<f64> = slots.iter().take(r).flatten().copied().collect();
            if !present.is_empty() {
                items.push(decompose(&present, y)?);
            }
        }
        if items.is_empty() {
            continue;
        }
        curve.push(DecompositionPoint {
            rounds: r,
            samples: items.len(),
            decomposition: mean_decomposition(&items)?,
        });
    }
    Ok(curve)
}

/// Every diagnostic for one run. Correlation, reference bias and the
/// decomposition curve need `reference`; without one they are absent or
/// empty.
pub fn diagnose(
    table: &ScoreTable,
    partitions: &[Partition],
    criterion: &Criterion,
    reference: Option<&BTreeMap<String, f64>>,
    bin_width: Option<f64>,
) -> Result<DiagReport, MetricsError> {
    if table.rounds_completed == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let ensemble = table.mean_through(table.rounds_completed);
    let width = bin_width.unwrap_or_else(|| default_bin_width(criterion.format));
    let present = table.present_scores();
    let hist = histogram(&present, width, (criterion.score_min, criterion.score_max))?;

    let correlation = match reference {
        Some(reference) => {
            let (x, y): (Vec<f64>, Vec<f64>) = ensemble
                .iter()
                .filter_map(|(id, s)| reference.get(id).map(|h| (*s, *h)))
                .unzip();
            match correlate(&x, &y) {
                Ok(c) => Some(c),
                Err(MetricsError::TooFew { .. } | MetricsError::DegenerateInput) => None,
                Err(e) => return Err(e),
            }
        }
        None => None,
    };

    Ok(DiagReport {
        samples: table.entries.len(),
        rounds: table.rounds_completed,
        scored: ensemble.len(),
        correlation,
        batch_bias: bias_by_round(table, partitions, &ensemble)?,
        reference_bias: reference.map(|r| bias_by_round(table, partitions, r)).transpose()?,
        entropy: EntropySummary {
            format: criterion.format,
            bin_width: width,
            bits: hist.entropy(),
            histogram: hist,
        },
        decomposition: match reference {
            Some(r) => decomposition_curve(table, r)?,
            None => Vec::new(),
        },
    })
}
