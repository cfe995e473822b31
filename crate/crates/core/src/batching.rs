//! Batch composition strategies.
//!
//! Every strategy returns `ceil(|ids| / B)` batches that cover the id set
//! exactly once. Random and homogeneous partitions chunk an ordering into
//! runs of `B`; heterogeneous partitions cut the score order into `B`
//! contiguous quantile splits of `ceil(|ids| / B)` ids and build batch `i`
//! from the `i`-th member of every split.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BatchingError {
    #[error("cannot partition an empty id list")]
    EmptyInput,
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("no score for sample {0}")]
    MissingScore(String),
}

/// Sample ids evaluated together in one prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Batch(pub Vec<String>);

impl Batch {
    pub fn ids(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub round: usize,
    pub batches: Vec<Batch>,
}

impl Partition {
    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.batches.iter().map(Batch::len).collect()
    }

    /// Whether the batches are a disjoint cover of `ids`.
    pub fn covers_exactly(&self, ids: &[String]) -> bool {
        let mut seen: Vec<&str> = self
            .batches
            .iter()
            .flat_map(|b| b.0.iter().map(String::as_str))
            .collect();
        let mut want: Vec<&str> = ids.iter().map(String::as_str).collect();
        seen.sort_unstable();
        want.sort_unstable();
        seen == want
    }
}

/// Number of batches for `n` samples at batch size `batch_size`.
pub fn batch_count(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

fn check(ids: &[String], batch_size: usize) -> Result<(), BatchingError> {
    if ids.is_empty() {
        return Err(BatchingError::EmptyInput);
    }
    if batch_size == 0 {
        return Err(BatchingError::ZeroBatchSize);
    }
    Ok(())
}

fn chunk(order: Vec<String>, batch_size: usize, round: usize) -> Partition {
    Partition {
        round,
        batches: order
            .chunks(batch_size)
            .map(|c| Batch(c.to_vec()))
            .collect(),
    }
}

/// Ids ordered by ascending score, ties broken by ascending id.
pub fn sort_by_score(
    ids: &[String],
    scores: &HashMap<String, f64>,
) -> Result<Vec<String>, BatchingError> {
    let mut keyed = Vec::with_capacity(ids.len());
    for id in ids {
        let score = scores
            .get(id)
            .copied()
            .ok_or_else(|| BatchingError::MissingScore(id.clone()))?;
        keyed.push((score, id));
    }
    keyed.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.cmp(b.1))
    });
    Ok(keyed.into_iter().map(|(_, id)| id.clone()).collect())
}

pub fn partition_random<R: Rng + ?Sized>(
    ids: &[String],
    batch_size: usize,
    rng: &mut R,
    round: usize,
) -> Result<Partition, BatchingError> {
    check(ids, batch_size)?;
    let mut order = ids.to_vec();
    order.shuffle(rng);
    Ok(chunk(order, batch_size, round))
}

pub fn partition_homogeneous(
    ids: &[String],
    scores: &HashMap<String, f64>,
    batch_size: usize,
    round: usize,
) -> Result<Partition, BatchingError> {
    check(ids, batch_size)?;
    let order = sort_by_score(ids, scores)?;
    Ok(chunk(order, batch_size, round))
}

/// Quantile splits of the score order: `batch_size` contiguous runs of
/// `ceil(n / batch_size)` ids. Trailing splits may be short or empty.
pub fn quantile_splits(sorted: &[String], batch_size: usize) -> Vec<Vec<String>> {
    let width = batch_count(sorted.len(), batch_size);
    (0..batch_size)
        .map(|j| {
            let start = (j * width).min(sorted.len());
            let end = ((j + 1) * width).min(sorted.len());
            sorted[start..end].to_vec()
        })
        .collect()
}

pub fn partition_heterogeneous(
    ids: &[String],
    scores: &HashMap<String, f64>,
    batch_size: usize,
    round: usize,
) -> Result<Partition, BatchingError> {
    partition_heterogeneous_rotated(ids, scores, batch_size, 0, round)
}

/// Heterogeneous partition where split `j` is rotated left by
/// `rotation * j` positions before dealing, so repeated rounds over
/// unchanged scores pair different members of different splits. With
/// `rotation == 0` batch `i` is exactly the `i`-th member of every split.
pub fn partition_heterogeneous_rotated(
    ids: &[String],
    scores: &HashMap<String, f64>,
    batch_size: usize,
    rotation: usize,
    round: usize,
) -> Result<Partition, BatchingError> {
    check(ids, batch_size)?;
    let sorted = sort_by_score(ids, scores)?;
    let width = batch_count(sorted.len(), batch_size);
    let mut batches = vec![Vec::with_capacity(batch_size); width];
    for (j, mut split) in quantile_splits(&sorted, batch_size).into_iter().enumerate() {
        if split.is_empty() {
            continue;
        }
        let shift = rotation.wrapping_mul(j) % split.len();
        split.rotate_left(shift);
        for (i, id) in split.into_iter().enumerate() {
            batches[i].push(id);
        }
    }
    Ok(Partition {
        round,
        batches: batches.into_iter().map(Batch).collect(),
    })
}
