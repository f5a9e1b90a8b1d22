use serde::{Deserialize, Serialize};

/// Summary statistics of realized costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostStatistics {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator; zero for one sample).
    pub std_dev: f64,
    /// `std_dev / sqrt(count)`.
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
}

impl CostStatistics {
    /// Two-pass statistics of a non-empty sample, evaluated in slice order.
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "statistics of an empty sample");
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let m2: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        let (min, max) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        Self::from_moments(n, mean, m2, min, max)
    }

    fn from_moments(count: usize, mean: f64, m2: f64, min: f64, max: f64) -> Self {
        let std_dev = if count > 1 {
            (m2 / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            count,
            mean,
            std_dev,
            std_error: std_dev / (count as f64).sqrt(),
            min,
            max,
        }
    }

    fn m2(&self) -> f64 {
        if self.count > 1 {
            self.std_dev * self.std_dev * (self.count - 1) as f64
        } else {
            0.0
        }
    }

    /// Combines statistics of two disjoint samples (Chan et al. pairwise update).
    pub fn merge(&self, other: &Self) -> Self {
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / n as f64;
        let m2 = self.m2()
            + other.m2()
            + delta * delta * (self.count as f64 * other.count as f64) / n as f64;
        Self::from_moments(n, mean, m2, self.min.min(other.min), self.max.max(other.max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn single_sample_convention() {
        let s = CostStatistics::from_samples(&[1.5]);
        assert_eq!((s.count, s.mean, s.std_dev, s.std_error), (1, 1.5, 0.0, 0.0));
    }

    #[test]
    fn known_sample() {
        let s = CostStatistics::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_relative_eq!(s.std_dev, (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(s.std_error, s.std_dev / 2.0, epsilon = 1e-15);
        assert_eq!((s.min, s.max), (1.0, 4.0));
    }

    proptest! {
        #[test]
        fn merge_matches_pooled(xs in prop::collection::vec(-10.0f64..10.0, 1..40),
                                ys in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let pooled: Vec<f64> = xs.iter().chain(ys.iter()).copied().collect();
            let whole = CostStatistics::from_samples(&pooled);
            let merged = CostStatistics::from_samples(&xs).merge(&CostStatistics::from_samples(&ys));
            prop_assert_eq!(merged.count, whole.count);
            prop_assert!((merged.mean - whole.mean).abs() < 1e-10);
            prop_assert!((merged.std_dev - whole.std_dev).abs() < 1e-9);
            prop_assert_eq!((merged.min, merged.max), (whole.min, whole.max));
            prop_assert!((merged.std_error - merged.std_dev / (merged.count as f64).sqrt()).abs() < 1e-15);
        }
    }
}
