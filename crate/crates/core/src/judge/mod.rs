//! Judge gateway: a uniform request/response surface over the live
//! chat-completion client and the simulated judge.

mod api;
mod ledger;
mod sim;

pub use api::{ApiConfig, ApiJudge, RetryPolicy};
pub use ledger::{CostLedger, LedgerSnapshot, Money, MoneyError, PriceTable};
pub use sim::{SimJudge, SimJudgeConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output: u32,
    pub round: usize,
    pub batch_index: usize,
    /// Ids of the samples in the prompt, in `Sample k` order. Never sent
    /// to a remote judge.
    pub sample_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeResponse {
    pub text: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JudgeError {
    #[error("authentication rejected: {0}")]
    AuthFailure(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("judge unavailable after {attempts} attempts: {reason}")]
    Unavailable { attempts: u32, reason: String },
    #[error("budget exceeded: spent {spent}, cap {cap}")]
    BudgetExceeded { spent: Money, cap: Money },
    #[error("sample {0} unknown to the simulated judge")]
    UnknownSample(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Anything that can answer a batch prompt. Implementations must be
/// shareable across concurrent batch dispatches.
pub trait Judge: Send + Sync {
    fn complete(&self, request: &JudgeRequest) -> Result<JudgeResponse, JudgeError>;

    /// Short label recorded in run manifests.
    fn mode(&self) -> &str;
}

pub(crate) fn check_request(request: &JudgeRequest) -> Result<(), JudgeError> {
    if request.prompt.is_empty() {
        return Err(JudgeError::InvalidRequest("empty prompt".into()));
    }
    if !(request.temperature >= 0.0) {
        return Err(JudgeError::InvalidRequest("negative temperature".into()));
    }
    Ok(())
}

/// Whitespace token count, used wherever provider usage is unavailable.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
