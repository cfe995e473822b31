//! Quantitative diagnostics: correlations, ensemble decomposition, batch
//! bias, score entropy, the rank-robustness bound and attention
//! normalization.

mod attention;
mod correlation;
mod ensemble;
mod entropy;
mod robustness;

pub use attention::{normalize_attention, scale_attention, LabeledMatrix, Span};
pub use correlation::{correlate, pearson, ranks, spearman, Correlation, CorrelationReport};
pub use ensemble::{batch_bias, decompose, mean_decomposition, Decomposition};
pub use entropy::{histogram, score_entropy, Histogram};
pub use robustness::{rank_robustness, spearman_noise_bound, RobustnessTrial, ScoreDistribution};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("input is empty")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("constant input: correlation undefined")]
    DegenerateInput,
    #[error("score maps have different keys")]
    KeyMismatch,
    #[error("bin width must be positive and finite, got {0}")]
    InvalidBinWidth(f64),
    #[error("invalid range [{0}, {1}]")]
    InvalidRange(f64, f64),
    #[error("n must be at least 2, got {0}")]
    InvalidN(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("span {label:?} [{start}, {end}) outside a {size}-token matrix")]
    SpanOutOfRange {
        label: String,
        start: usize,
        end: usize,
        size: usize,
    },
    #[error("spans {0:?} and {1:?} overlap")]
    OverlappingSpans(String, String),
    #[error("attention matrix is not causal and row-stochastic: {0}")]
    NonCausalMatrix(String),
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
