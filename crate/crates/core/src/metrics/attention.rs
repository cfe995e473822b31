//! Position-normalized attention between labeled token spans.
//!
//! In a causal model token `x` (1-based) spreads its attention over `x`
//! positions, so a raw weight has expected value `1/x`. Multiplying each
//! row by its position gives every entry expected value 1. A span pair is
//! the mean of the scaled causal entries (`y <= x`) in its cross product;
//! pairs with no causal entries are `None`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::MetricsError;

const ROW_SUM_TOLERANCE: f64 = 1e-6;
const ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub label: String,
    /// 0-based, end-exclusive token range.
    pub tokens: Range<usize>,
}

impl Span {
    pub fn new(label: impl Into<String>, tokens: Range<usize>) -> Self {
        Self { label: label.into(), tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMatrix {
    pub labels: Vec<String>,
    /// `values[i][j]`: attention from span `i` to span `j`.
    pub values: Vec<Vec<Option<f64>>>,
}

fn check_causal(att: &[Vec<f64>]) -> Result<(), MetricsError> {
    let size = att.len();
    for (x, row) in att.iter().enumerate() {
        if row.len() != size {
            return Err(MetricsError::NonCausalMatrix(format!(
                "row {x} has {} columns, expected {size}",
                row.len()
            )));
        }
        if let Some(y) = (x + 1..size).find(|&y| row[y].abs() > ZERO_TOLERANCE) {
            return Err(MetricsError::NonCausalMatrix(format!(
                "entry ({x}, {y}) attends to a future token"
            )));
        }
        if row[..=x].iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(MetricsError::NonCausalMatrix(format!("row {x} has a negative weight")));
        }
        let sum: f64 = row[..=x].iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(MetricsError::NonCausalMatrix(format!("row {x} sums to {sum}")));
        }
    }
    Ok(())
}

/// Scales row `x` (0-based) by `x + 1`.
pub fn scale_attention(att: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MetricsError> {
    check_causal(att)?;
    Ok(att
        .iter()
        .enumerate()
        .map(|(x, row)| row.iter().map(|v| v * (x + 1) as f64).collect())
        .collect())
}

pub fn normalize_attention(att: &[Vec<f64>], spans: &[Span]) -> Result<LabeledMatrix, MetricsError> {
    let size = att.len();
    for span in spans {
        if span.tokens.start >= span.tokens.end || span.tokens.end > size {
            return Err(MetricsError::SpanOutOfRange {
                label: span.label.clone(),
                start: span.tokens.start,
                end: span.tokens.end,
                size,
            });
        }
    }
    for (i, a) in spans.iter().enumerate() {
        for b in &spans[i + 1..] {
            if a.tokens.start < b.tokens.end && b.tokens.start < a.tokens.end {
                return Err(MetricsError::OverlappingSpans(a.label.clone(), b.label.clone()));
            }
        }
    }
    let scaled = scale_attention(att)?;
    let values = spans
        .iter()
        .map(|from| {
            spans
                .iter()
                .map(|to| {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for x in from.tokens.clone() {
                        let causal_end = to.tokens.end.min(x + 1);
                        for y in to.tokens.start..causal_end {
                            sum += scaled[x][y];
                            count += 1;
                        }
                    }
                    (count > 0).then(|| sum / count as f64)
                })
                .collect()
        })
        .collect();
    Ok(LabeledMatrix {
        labels: spans.iter().map(|s| s.label.clone()).collect(),
        values,
    })
}
