//! Deterministic simulated judge.
//!
//! Each sample `i` in a batch is scored
//! `clip(q_i + alpha * (mean_batch(q) - mean_global(q)) + eps_i)` where `q`
//! is a hidden true quality and `eps_i ~ N(0, sigma^2)`. The noise draw for
//! a sample depends only on `(seed, round, sample id)`, so concurrency and
//! batch order cannot change a run, and two strategies run on the same seed
//! see the same noise.

use std::collections::HashMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{approx_tokens, check_request, Judge, JudgeError, JudgeRequest, JudgeResponse, TokenUsage};
use crate::parsing::format_scores;
use crate::seed;
use crate::types::{Criterion, Procedure, ScoreFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimJudgeConfig {
    pub true_quality: HashMap<String, f64>,
    pub bias_alpha: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub format: ScoreFormat,
}

#[derive(Debug, Clone)]
pub struct SimJudge {
    cfg: SimJudgeConfig,
    global_mean: f64,
    score_min: f64,
    score_max: f64,
    procedure: Procedure,
}

impl SimJudge {
    pub fn new(cfg: SimJudgeConfig, criterion: &Criterion, procedure: Procedure) -> Self {
        assert!(cfg.noise_sigma >= 0.0, "noise_sigma must be non-negative");
        let n = cfg.true_quality.len().max(1) as f64;
        // sum in id order so the mean does not depend on hash iteration order
        let mut qualities: Vec<(&String, &f64)> = cfg.true_quality.iter().collect();
        qualities.sort_by(|a, b| a.0.cmp(b.0));
        let global_mean = qualities.iter().map(|(_, q)| **q).sum::<f64>() / n;
        Self {
            cfg,
            global_mean,
            score_min: criterion.score_min,
            score_max: criterion.score_max,
            procedure,
        }
    }

    pub fn config(&self) -> &SimJudgeConfig {
        &self.cfg
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    fn quality(&self, id: &str) -> Result<f64, JudgeError> {
        self.cfg
            .true_quality
            .get(id)
            .copied()
            .ok_or_else(|| JudgeError::UnknownSample(id.to_string()))
    }

    fn noise(&self, round: usize, id: &str) -> f64 {
        if self.cfg.noise_sigma == 0.0 {
            return 0.0;
        }
        let mut rng = seed::rng(
            self.cfg.seed,
            "sim-noise",
            &[&(round as u64).to_le_bytes(), id.as_bytes()],
        );
        Normal::new(0.0, self.cfg.noise_sigma)
            .expect("finite sigma")
            .sample(&mut rng)
    }

    /// Emitted scores for one batch, after clipping and format rounding.
    pub fn scores(&self, ids: &[String], round: usize) -> Result<Vec<f64>, JudgeError> {
        let qualities: Vec<f64> = ids.iter().map(|id| self.quality(id)).collect::<Result<_, _>>()?;
        if qualities.is_empty() {
            return Ok(Vec::new());
        }
        let batch_mean = qualities.iter().sum::<f64>() / qualities.len() as f64;
        let shift = self.cfg.bias_alpha * (batch_mean - self.global_mean);
        Ok(ids
            .iter()
            .zip(&qualities)
            .map(|(id, q)| {
                let raw = (q + shift + self.noise(round, id)).clamp(self.score_min, self.score_max);
                match self.cfg.format {
                    ScoreFormat::Decimal => (raw * 10.0).round() / 10.0,
                    ScoreFormat::Integer => raw.round(),
                }
            })
            .collect())
    }

    /// A template-conformant response for one batch.
    pub fn respond(&self, ids: &[String], round: usize) -> Result<String, JudgeError> {
        let scores = self.scores(ids, round)?;
        let mut text = String::from(
            "I will do my best to provide individual analysis for each sample. Analysis:\n",
        );
        if self.procedure == Procedure::OneStage {
            for (k, line) in format_scores(&scores, Procedure::OneStage, self.cfg.format)
                .lines()
                .enumerate()
            {
                text.push_str(&format!("Sample {}: simulated analysis. {line}\n", k + 1));
            }
            return Ok(text);
        }
        for k in 1..=scores.len() {
            text.push_str(&format!("Sample {k}: simulated analysis.\n"));
        }
        if self.procedure == Procedure::ThreeStage {
            let mut order: Vec<usize> = (1..=scores.len()).collect();
            order.sort_by(|a, b| scores[b - 1].total_cmp(&scores[a - 1]).then(a.cmp(b)));
            let ranking: Vec<String> = order.iter().map(|k| format!("Sample{k}")).collect();
            text.push_str(&format!("\nRanking: {}\n", ranking.join(" > ")));
        }
        text.push('\n');
        text.push_str(&format_scores(&scores, self.procedure, self.cfg.format));
        Ok(text)
    }
}

impl Judge for SimJudge {
    fn complete(&self, request: &JudgeRequest) -> Result<JudgeResponse, JudgeError> {
        check_request(request)?;
        let text = self.respond(&request.sample_ids, request.round)?;
        let usage = TokenUsage {
            prompt_tokens: approx_tokens(&request.prompt),
            completion_tokens: approx_tokens(&text),
        };
        Ok(JudgeResponse { text, usage })
    }

    fn mode(&self) -> &str {
        "sim"
    }
}
