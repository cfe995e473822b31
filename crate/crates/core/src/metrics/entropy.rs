use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Fixed-width histogram over `[min, max]`. Bin `k` covers
/// `[min + k*width, min + (k+1)*width)`; there are
/// `floor((max - min) / width) + 1` bins so `max` gets a bin of its own
/// and, with unit width, each integer score lands in a distinct bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub min: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_start(&self, k: usize) -> f64 {
        self.min + k as f64 * self.width
    }

    /// Shannon entropy in bits over nonempty bins.
    pub fn entropy(&self) -> f64 {
        let total = self.total() as f64;
        if total == 0.0 {
            return 0.0;
        }
        -self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total;
                p * p.log2()
            })
            .sum::<f64>()
    }
}

// Scores sitting on a bin edge after decimal rounding (e.g. 1.3 with width
// 0.1) can fall a hair short of it in binary floating point.
const EDGE_SLACK: f64 = 1e-9;

pub fn histogram(scores: &[f64], bin_width: f64, range: (f64, f64)) -> Result<Histogram, MetricsError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(MetricsError::InvalidBinWidth(bin_width));
    }
    let (min, max) = range;
    if !(min < max) {
        return Err(MetricsError::InvalidRange(min, max));
    }
    let bins = ((max - min) / bin_width + EDGE_SLACK).floor() as usize + 1;
    let mut counts = vec![0u64; bins];
    for &s in scores {
        let k = ((s - min) / bin_width + EDGE_SLACK).floor();
        // out-of-range scores fall into the edge bins
        let k = if k < 0.0 { 0 } else { (k as usize).min(bins - 1) };
        counts[k] += 1;
    }
    Ok(Histogram { min, width: bin_width, counts })
}

pub fn score_entropy(scores: &[f64], bin_width: f64, range: (f64, f64)) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(histogram(scores, bin_width, range)?.entropy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn uniform_four_bins() {
        let scores = [1.0, 1.5, 2.0, 2.5, 1.2, 1.7, 2.2, 2.7];
        assert!((score_entropy(&scores, 0.5, (1.0, 2.5)).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(score_entropy(&[2.0, 2.0, 2.0], 1.0, (1.0, 3.0)).unwrap(), 0.0);
    }

    #[test]
    fn integer_bins_are_distinct() {
        let h = histogram(&[1.0, 2.0, 3.0, 3.0], 1.0, (1.0, 3.0)).unwrap();
        assert_eq!(h.counts, vec![1, 1, 2]);
    }

    #[test]
    fn decimal_scores_land_in_their_own_bins() {
        let scores: Vec<f64> = (10..=30).map(|k| k as f64 / 10.0).collect();
        let h = histogram(&scores, 0.1, (1.0, 3.0)).unwrap();
        assert_eq!(h.counts.len(), 21);
        assert!(h.counts.iter().all(|&c| c == 1), "{:?}", h.counts);
    }

    #[test]
    fn mixed_distribution_matches_hand_count() {
        // bins of width 1 over [0, 3]: counts 3, 1, 1, 1
        let scores = [0.1, 0.5, 0.9, 1.2, 3.0, 2.5];
        let h = histogram(&scores, 1.0, (0.0, 3.0)).unwrap();
        assert_eq!(h.counts, vec![3, 1, 1, 1]);
        let p = [3.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        let expected: f64 = -p.iter().map(|q: &f64| q * q.log2()).sum::<f64>();
        assert!((h.entropy() - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_width() {
        assert_eq!(
            score_entropy(&[1.0], 0.0, (1.0, 3.0)),
            Err(MetricsError::InvalidBinWidth(0.0))
        );
        assert_eq!(score_entropy(&[], 1.0, (1.0, 3.0)), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn uniform_histogram_maximizes_entropy() {
        let mut rng = seed::rng(4, "entropy", &[]);
        let bins = 8usize;
        let per_bin = 5usize;
        let uniform: Vec<f64> = (0..bins)
            .flat_map(|k| std::iter::repeat_n(k as f64 + 0.5, per_bin))
            .collect();
        let top = score_entropy(&uniform, 1.0, (0.0, (bins - 1) as f64)).unwrap();
        assert!((top - (bins as f64).log2()).abs() < 1e-12);
        for _ in 0..200 {
            let scores: Vec<f64> = (0..bins * per_bin)
                .map(|_| rng.random_range(0..bins) as f64 + 0.5)
                .collect();
            assert!(score_entropy(&scores, 1.0, (0.0, (bins - 1) as f64)).unwrap() <= top + 1e-12);
        }
    }
}
