//! Batch-wise evaluation of texts with an LLM judge.
//!
//! Samples are scored in groups over several rounds, regrouped between
//! rounds, and the per-round scores averaged.

pub mod artifacts;
pub mod batching;
pub mod datasets;
pub mod diagnostics;
pub mod engine;
pub mod judge;
pub mod metrics;
pub mod noise;
pub mod parsing;
pub mod prompts;
pub mod seed;
pub mod simulate;
pub mod types;

pub use batching::{Batch, Partition};
pub use datasets::Dataset;
pub use engine::{run_batcheval, EngineError, RunConfig, RunOutcome, ScoreTable};
pub use judge::{Judge, JudgeError};
pub use types::{Anchor, Criterion, Procedure, Sample, ScoreFormat, Strategy};
