use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{mean, MetricsError};

/// Squared-error decomposition of an ensemble of scores against one
/// reference value: `err_ensemble = err_mean - variance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// `(mean(S) - y)^2`
    pub err_ensemble: f64,
    /// `mean((s - y)^2)`
    pub err_mean: f64,
    /// `mean((s - mean(S))^2)`
    pub variance: f64,
}

impl Decomposition {
    pub fn residual(&self) -> f64 {
        self.err_ensemble - (self.err_mean - self.variance)
    }
}

pub fn decompose(scores: &[f64], y: f64) -> Result<Decomposition, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let m = mean(scores);
    let d = Decomposition {
        err_ensemble: (m - y).powi(2),
        err_mean: mean(&scores.iter().map(|s| (s - y).powi(2)).collect::<Vec<_>>()),
        variance: mean(&scores.iter().map(|s| (s - m).powi(2)).collect::<Vec<_>>()),
    };
    let scale = 1.0 + d.err_mean.abs();
    debug_assert!(d.residual().abs() <= 1e-9 * scale, "identity violated: {d:?}");
    Ok(d)
}

/// Field-wise mean of per-sample decompositions.
pub fn mean_decomposition(items: &[Decomposition]) -> Result<Decomposition, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = items.len() as f64;
    Ok(Decomposition {
        err_ensemble: items.iter().map(|d| d.err_ensemble).sum::<f64>() / n,
        err_mean: items.iter().map(|d| d.err_mean).sum::<f64>() / n,
        variance: items.iter().map(|d| d.variance).sum::<f64>() / n,
    })
}

/// `|sum of in-batch scores - sum of ensemble scores| / |batch|`.
pub fn batch_bias(
    batch_scores: &BTreeMap<String, f64>,
    ensemble_scores: &BTreeMap<String, f64>,
) -> Result<f64, MetricsError> {
    if batch_scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if batch_scores.len() != ensemble_scores.len()
        || batch_scores.keys().zip(ensemble_scores.keys()).any(|(a, b)| a != b)
    {
        return Err(MetricsError::KeyMismatch);
    }
    let batch: f64 = batch_scores.values().sum();
    let ensemble: f64 = ensemble_scores.values().sum();
    Ok((batch - ensemble).abs() / batch_scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn symmetric_pair() {
        let d = decompose(&[1.0, 3.0], 2.0).unwrap();
        assert_eq!((d.err_ensemble, d.err_mean, d.variance), (0.0, 1.0, 1.0));
        let z = decompose(&[2.0, 2.0, 2.0], 2.0).unwrap();
        assert_eq!((z.err_ensemble, z.err_mean, z.variance), (0.0, 0.0, 0.0));
        assert_eq!(decompose(&[], 1.0), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn bias_examples() {
        let e = map(&[("a", 1.5), ("b", 2.5)]);
        assert_eq!(batch_bias(&map(&[("a", 2.0), ("b", 3.0)]), &e).unwrap(), 0.5);
        assert_eq!(batch_bias(&e, &e).unwrap(), 0.0);
        assert_eq!(batch_bias(&map(&[("a", 2.0), ("b", 2.0)]), &e).unwrap(), 0.0);
        assert_eq!(
            batch_bias(&map(&[("a", 2.0), ("c", 2.0)]), &e),
            Err(MetricsError::KeyMismatch)
        );
        assert_eq!(batch_bias(&map(&[]), &map(&[])), Err(MetricsError::EmptyInput));
    }

    proptest! {
        #[test]
        fn identity_holds(s in proptest::collection::vec(-10.0..10.0f64, 1..50), y in -10.0..10.0f64) {
            let d = decompose(&s, y).unwrap();
            prop_assert!(d.residual().abs() <= 1e-9);
            prop_assert!(d.err_mean + 1e-12 >= d.variance && d.variance >= 0.0);
        }

        #[test]
        fn bias_non_negative(v in proptest::collection::vec((0.0..5.0f64, 0.0..5.0f64), 1..20)) {
            let b: BTreeMap<String, f64> = v.iter().enumerate().map(|(i, p)| (i.to_string(), p.0)).collect();
            let e: BTreeMap<String, f64> = v.iter().enumerate().map(|(i, p)| (i.to_string(), p.1)).collect();
            prop_assert!(batch_bias(&b, &e).unwrap() >= 0.0);
        }
    }
}
