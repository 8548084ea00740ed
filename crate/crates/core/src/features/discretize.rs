use serde::{Deserialize, Serialize};

use super::FeatureSequence;
use crate::error::{Error, Result};

/// Bin count used for the HMM emission tables.
pub const DEFAULT_BINS: usize = 20;

/// Equal-frequency discretizer, one set of interior edges per feature.
///
/// A value `x` falls into bin `1 + #{edges e : x > e}`, so values equal to an
/// edge go to the lower bin and everything outside the training range lands in
/// bin 1 or bin `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub bins: usize,
    /// `n` rows of `D - 1` non-decreasing edges.
    pub edges: Vec<Vec<f64>>,
}

impl Discretizer {
    /// Fits per-feature `j/D` quantile edges on the pooled training values.
    pub fn fit(training: &[FeatureSequence], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
        }
        let n = training
            .first()
            .map(FeatureSequence::num_features)
            .ok_or_else(|| Error::InvalidArgument("no training sequences".into()))?;
        if training.iter().any(|s| s.num_features() != n) {
            return Err(Error::Dimension("training sequences disagree on feature count".into()));
        }
        let mut edges = Vec::with_capacity(n);
        for k in 0..n {
            let mut pool: Vec<f64> = training.iter().flat_map(|s| s.column(k)).collect();
            if pool.is_empty() {
                return Err(Error::InvalidArgument("empty training pool".into()));
            }
            pool.sort_by(f64::total_cmp);
            let total = pool.len();
            let row: Vec<f64> = (1..bins)
                .map(|j| {
                    // smallest rank r with r/total >= j/bins
                    let rank = (j * total).div_ceil(bins);
                    pool[rank.max(1) - 1]
                })
                .collect();
            if row.windows(2).any(|w| w[0] == w[1]) {
                log::warn!(
                    "feature {k}: {bins} bins exceed the distinct training values; duplicate edges merged"
                );
            }
            edges.push(row);
        }
        Ok(Discretizer { bins, edges })
    }

    pub fn num_features(&self) -> usize {
        self.edges.len()
    }

    /// Bin index in `1..=D` for one value of feature `k`.
    pub fn bin(&self, k: usize, x: f64) -> usize {
        1 + self.edges[k].partition_point(|&e| e < x)
    }

    pub fn discretize_row(&self, row: &[f64]) -> Vec<usize> {
        row.iter().enumerate().map(|(k, &x)| self.bin(k, x)).collect()
    }

    /// Returns a copy of `seq` with its `discretized` matrix filled in.
    pub fn apply(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        if seq.num_features() != self.num_features() {
            return Err(Error::Dimension(format!(
                "discretizer has {} features, sequence has {}",
                self.num_features(),
                seq.num_features()
            )));
        }
        let mut out = seq.clone();
        out.discretized = Some(seq.values.iter().map(|r| self.discretize_row(r)).collect());
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Invariant("discretizer needs at least 2 bins".into()));
        }
        for row in &self.edges {
            if row.len() != self.bins - 1 || row.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(Error::Invariant(
                    "discretizer edges must be D-1 non-decreasing values".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(values: Vec<f64>) -> FeatureSequence {
        FeatureSequence::new("p", vec!["x".into()], values.into_iter().map(|v| vec![v]).collect(), None)
            .unwrap()
    }

    fn counts(d: &Discretizer, values: &[f64]) -> Vec<usize> {
        let mut c = vec![0; d.bins];
        for &v in values {
            c[d.bin(0, v) - 1] += 1;
        }
        c
    }

    #[test]
    fn uniform_grid_twenty_bins() {
        let values: Vec<f64> = (1..=100).map(f64::from).collect();
        let d = Discretizer::fit(&[seq(values.clone())], DEFAULT_BINS).unwrap();
        assert_eq!(DEFAULT_BINS, 20);
        assert_eq!(counts(&d, &values), vec![5; 20]);
        assert_eq!(d.bin(0, -1e9), 1);
        assert_eq!(d.bin(0, 1e9), 20);
    }

    #[test]
    fn constant_values_collapse_to_first_bin() {
        let d = Discretizer::fit(&[seq(vec![3.0; 10])], 4).unwrap();
        assert!(d.edges[0].iter().all(|&e| e == 3.0));
        assert_eq!(d.bin(0, 3.0), 1);
        assert_eq!(counts(&d, &[3.0; 10]), vec![10, 0, 0, 0]);
    }

    #[test]
    fn pooled_over_sequences() {
        let d = Discretizer::fit(&[seq(vec![1.0, 2.0]), seq(vec![3.0, 4.0])], 2).unwrap();
        assert_eq!(d.edges[0], vec![2.0]);
        let out = d.apply(&seq(vec![2.0, 2.5])).unwrap();
        assert_eq!(out.discretized.unwrap(), vec![vec![1], vec![2]]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Discretizer::fit(&[seq(vec![1.0])], 1).is_err());
        assert!(Discretizer::fit(&[], 4).is_err());
    }

    proptest! {
        #[test]
        fn tie_free_equal_frequency(d in 2usize..8, per in 1usize..20, seed in 0u64..1000) {
            // distinct values, count divisible by D
            let t = d * per;
            let values: Vec<f64> = (0..t).map(|i| ((i as u64 * 7919 + seed) % 100_003) as f64 + i as f64 * 1e-6).collect();
            let disc = Discretizer::fit(&[seq(values.clone())], d).unwrap();
            prop_assert_eq!(counts(&disc, &values), vec![per; d]);
        }

        #[test]
        fn bins_are_monotone(values in proptest::collection::vec(-100.0f64..100.0, 1..60), a in -200.0f64..200.0, b in -200.0f64..200.0, d in 2usize..25) {
            let disc = Discretizer::fit(&[seq(values)], d).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(disc.bin(0, lo) <= disc.bin(0, hi));
            prop_assert!((1..=d).contains(&disc.bin(0, a)));
        }

        #[test]
        fn bin_counts_near_target(values in proptest::collection::vec(0i32..10, 1..200), d in 2usize..8) {
            // each bin deviates from T/D by at most the ties at its edges
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let disc = Discretizer::fit(&[seq(values.clone())], d).unwrap();
            let c = counts(&disc, &values);
            let target = values.len() as f64 / d as f64;
            for (j, &cnt) in c.iter().enumerate() {
                let mut ties = 0;
                for e in [j.checked_sub(1), (j < d - 1).then_some(j)].into_iter().flatten() {
                    let edge = disc.edges[0][e];
                    ties += values.iter().filter(|&&v| v == edge).count();
                }
                prop_assert!((cnt as f64 - target).abs() <= ties as f64 + 1.0);
            }
        }
    }
}
