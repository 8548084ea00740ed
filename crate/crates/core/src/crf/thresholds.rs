use serde::{Deserialize, Serialize};

use super::ThresholdBank;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::types::LabelSet;

/// Pairs whose class histograms overlap more than this use the fallback.
pub const DEFAULT_OVERLAP_CUTOFF: f64 = 0.75;

const OVERLAP_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relevance {
    /// Midpoint of the two class medians.
    Relevant,
    /// The feature's global training mean; the pair is not separable on it.
    Fallback,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Overlapping coefficient `sum_i min(p_i, q_i)` of two equal-width
/// histograms spanning both samples.
fn overlap(a: &[f64], b: &[f64]) -> f64 {
    let lo = a[0].min(b[0]);
    let hi = a[a.len() - 1].max(b[b.len() - 1]);
    if hi <= lo {
        return 1.0;
    }
    let width = (hi - lo) / OVERLAP_BINS as f64;
    let hist = |xs: &[f64]| {
        let mut h = [0.0; OVERLAP_BINS];
        for &x in xs {
            let i = (((x - lo) / width) as usize).min(OVERLAP_BINS - 1);
            h[i] += 1.0 / xs.len() as f64;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    ha.iter().zip(&hb).map(|(p, q)| p.min(*q)).sum()
}

/// Picks one threshold per (ordered pair, feature) from labeled training data.
///
/// A pair that separates on feature `k` gets the midpoint of the two class
/// medians; a pair whose histograms overlap by more than `overlap_cutoff`, or
/// that involves a behaviour absent from training, gets the global mean of `k`.
pub fn fit_thresholds(
    training: &[FeatureSequence],
    label_set: &LabelSet,
    overlap_cutoff: f64,
) -> Result<ThresholdBank> {
    let m = label_set.len();
    let n = training
        .first()
        .map(FeatureSequence::num_features)
        .ok_or_else(|| Error::InvalidArgument("no training sequences".into()))?;
    // class_values[b][k], sorted
    let mut class_values = vec![vec![Vec::new(); n]; m];
    let mut sums = vec![0.0; n];
    let mut total = 0usize;
    for seq in training {
        if seq.num_features() != n {
            return Err(Error::Dimension("training sequences disagree on feature count".into()));
        }
        let labels = seq
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("sequence {} is unlabeled", seq.participant_id)))?;
        let states = label_set.encode(labels)?;
        for (row, &b) in seq.values.iter().zip(&states) {
            for (k, &x) in row.iter().enumerate() {
                class_values[b][k].push(x);
                sums[k] += x;
            }
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidArgument("no training ticks".into()));
    }
    let means: Vec<f64> = sums.iter().map(|s| s / total as f64).collect();
    for per_feature in class_values.iter_mut() {
        for v in per_feature.iter_mut() {
            v.sort_by(f64::total_cmp);
        }
    }
    for (b, per_feature) in class_values.iter().enumerate() {
        if per_feature[0].is_empty() {
            log::warn!(
                "behaviour {} has no training ticks; its thresholds fall back to feature means",
                label_set.members()[b]
            );
        }
    }

    let mut bank = ThresholdBank {
        num_labels: m,
        num_features: n,
        thresholds: Vec::new(),
        relevance: Vec::new(),
    };
    let triples = bank.num_triples();
    bank.thresholds = vec![0.0; triples];
    bank.relevance = vec![Relevance::Fallback; triples];
    for b in 0..m {
        for b2 in (0..m).filter(|&x| x != b) {
            for k in 0..n {
                let (xa, xb) = (&class_values[b][k], &class_values[b2][k]);
                let tri = bank.triple(b, b2, k);
                if xa.is_empty() || xb.is_empty() || overlap(xa, xb) > overlap_cutoff {
                    bank.thresholds[tri] = means[k];
                    bank.relevance[tri] = Relevance::Fallback;
                } else {
                    bank.thresholds[tri] = 0.5 * (median(xa) + median(xb));
                    bank.relevance[tri] = Relevance::Relevant;
                }
            }
        }
    }
    Ok(bank)
}
