//! Rank robustness of a score distribution under small perturbations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{spearman, MetricsError};
use crate::seed;

/// Upper bound on the expected Spearman correlation between scores and the
/// same scores after a perturbation of expected magnitude `expected_lambda`:
/// `1 - 6 * E(lambda)^2 / (n^2 - 1)`. Attained by the uniform density on
/// `[0, 1]`.
pub fn spearman_noise_bound(expected_lambda: f64, n: usize) -> Result<f64, MetricsError> {
    if n < 2 {
        return Err(MetricsError::InvalidN(n));
    }
    if !(expected_lambda >= 0.0) {
        return Err(MetricsError::InvalidArgument(format!(
            "expected lambda must be non-negative, got {expected_lambda}"
        )));
    }
    let n = n as f64;
    Ok(1.0 - 6.0 * expected_lambda * expected_lambda / (n * n - 1.0))
}

/// Score densities on `[0, 1]` for the Monte-Carlo check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreDistribution {
    Uniform,
    /// Density `2x`: mass piles up near 1.
    Triangular,
    /// `u^power` for uniform `u`, increasingly concentrated near 0.
    Power(f64),
}

impl ScoreDistribution {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self {
            ScoreDistribution::Uniform => u,
            ScoreDistribution::Triangular => u.sqrt(),
            ScoreDistribution::Power(p) => u.powf(*p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTrial {
    pub n: usize,
    pub lambda: f64,
    pub trials: usize,
    pub mean_spearman: f64,
    pub bound: f64,
}

/// Mean Spearman correlation between `n` scores drawn from `dist` and the
/// same scores shifted by `lambda` in a random direction each, over
/// `trials` independent draws.
pub fn rank_robustness(
    n: usize,
    lambda: f64,
    trials: usize,
    dist: ScoreDistribution,
    seed: u64,
) -> Result<RobustnessTrial, MetricsError> {
    let bound = spearman_noise_bound(lambda, n)?;
    if trials == 0 {
        return Err(MetricsError::InvalidArgument("trials must be positive".into()));
    }
    let mut rng = seed::rng(seed, "rank-robustness", &[]);
    let mut total = 0.0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..n).map(|_| dist.draw(&mut rng)).collect();
        let perturbed: Vec<f64> = x
            .iter()
            .map(|v| if rng.random::<bool>() { v + lambda } else { v - lambda })
            .collect();
        total += spearman(&x, &perturbed)?.r;
    }
    Ok(RobustnessTrial {
        n,
        lambda,
        trials,
        mean_spearman: total / trials as f64,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_values() {
        assert_eq!(spearman_noise_bound(0.0, 10).unwrap(), 1.0);
        assert!((spearman_noise_bound(1.0, 7).unwrap() - 0.875).abs() < 1e-15);
        assert_eq!(spearman_noise_bound(0.1, 1), Err(MetricsError::InvalidN(1)));
        assert!(spearman_noise_bound(-0.1, 5).is_err());
    }

    #[test]
    fn bound_monotonicity() {
        let mut prev = spearman_noise_bound(0.0, 20).unwrap();
        for k in 1..20 {
            let b = spearman_noise_bound(k as f64 * 0.1, 20).unwrap();
            assert!(b < prev);
            prev = b;
        }
        let mut prev = spearman_noise_bound(0.5, 2).unwrap();
        for n in 3..50 {
            let b = spearman_noise_bound(0.5, n).unwrap();
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn concentrated_scores_are_less_robust() {
        let uniform = rank_robustness(100, 0.01, 200, ScoreDistribution::Uniform, 1).unwrap();
        let peaked = rank_robustness(100, 0.01, 200, ScoreDistribution::Power(4.0), 1).unwrap();
        assert!(peaked.mean_spearman < uniform.mean_spearman);
        assert!(uniform.mean_spearman <= uniform.bound + 0.02);
    }
}
