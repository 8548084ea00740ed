//! Linear-chain conditional random field with threshold state features.
//!
//! For every ordered behaviour pair `(b, b2)` with `b != b2` and every feature
//! `k` there is a threshold and two weights: one added when the observation
//! exceeds the threshold, one when it does not. These indicators fire only
//! when the current label is `b`, so each tick activates `(m - 1) * n` of them
//! for every candidate label. A single weight `nu` rewards keeping the same
//! label from one tick to the next.
//!
//! Weights are stacked as `lambda = [mu..., nu]` with
//! `mu[2 * triple + 0]` the exceed weight and `mu[2 * triple + 1]` the
//! not-exceed weight of `triple = (b * (m - 1) + j) * n + k`, where `j` is the
//! rank of `b2` among the labels other than `b`.

mod decode;
mod objective;
mod optim;
mod thresholds;

pub use decode::{viterbi_decode, viterbi_states};
pub use objective::{
    log_partition, nll_and_gradient, sequence_score, CrfObjective, PreparedSequence,
};
pub use optim::{minimize_cg, CgOptions, CgResult, TraceRow};
pub use thresholds::{fit_thresholds, Relevance, DEFAULT_OVERLAP_CUTOFF};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::persist::decimal;
use crate::types::LabelSet;

/// Shrinkage variance of the Gaussian weight prior.
pub const DEFAULT_SIGMA2: f64 = 1.0;
/// Conjugate-gradient iteration budget.
pub const DEFAULT_CG_ITERS: usize = 100;

/// One threshold per (ordered label pair, feature) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBank {
    pub num_labels: usize,
    pub num_features: usize,
    #[serde(with = "decimal::vec")]
    pub thresholds: Vec<f64>,
    pub relevance: Vec<Relevance>,
}

impl ThresholdBank {
    pub fn num_triples(&self) -> usize {
        self.num_labels * (self.num_labels - 1) * self.num_features
    }

    /// Index of the triple `(b, b2, k)`; `b != b2`.
    pub fn triple(&self, b: usize, b2: usize, k: usize) -> usize {
        debug_assert_ne!(b, b2);
        let j = if b2 < b { b2 } else { b2 - 1 };
        (b * (self.num_labels - 1) + j) * self.num_features + k
    }

    pub fn threshold(&self, b: usize, b2: usize, k: usize) -> f64 {
        self.thresholds[self.triple(b, b2, k)]
    }

    /// Number of stacked weights, `2 m (m - 1) n + 1`.
    pub fn num_weights(&self) -> usize {
        2 * self.num_triples() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_labels < 2 || self.num_features == 0 {
            return Err(Error::Invariant("threshold bank needs >= 2 labels and >= 1 feature".into()));
        }
        let t = self.num_triples();
        if self.thresholds.len() != t || self.relevance.len() != t {
            return Err(Error::Invariant(format!(
                "threshold bank holds {} thresholds for {t} triples",
                self.thresholds.len()
            )));
        }
        if self.thresholds.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invariant("non-finite threshold".into()));
        }
        Ok(())
    }
}

/// Active `mu` indices for label `b` at one tick: exactly one of each
/// exceed/not-exceed pair, for every `(b, b2, k)`. Equality is not-exceed.
pub fn feature_vector(obs: &[f64], b: usize, bank: &ThresholdBank) -> Vec<usize> {
    let m = bank.num_labels;
    let mut out = Vec::with_capacity((m - 1) * bank.num_features);
    for b2 in (0..m).filter(|&x| x != b) {
        for (k, &x) in obs.iter().enumerate().take(bank.num_features) {
            let tri = bank.triple(b, b2, k);
            let exceed = x > bank.thresholds[tri];
            out.push(2 * tri + usize::from(!exceed));
        }
    }
    out
}

/// Transition feature: 1 when the label persists.
pub fn transition_feature(prev: usize, cur: usize) -> f64 {
    if prev == cur {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfModel {
    pub label_set: LabelSet,
    pub feature_names: Vec<String>,
    pub bank: ThresholdBank,
    #[serde(with = "decimal::vec")]
    pub mu: Vec<f64>,
    #[serde(with = "decimal::scalar")]
    pub nu: f64,
    #[serde(with = "decimal::scalar")]
    pub sigma2: f64,
}

impl CrfModel {
    pub fn num_labels(&self) -> usize {
        self.label_set.len()
    }

    /// `[mu..., nu]`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = self.mu.clone();
        w.push(self.nu);
        w
    }

    pub fn validate(&self) -> Result<()> {
        self.bank.validate()?;
        if self.bank.num_labels != self.label_set.len() {
            return Err(Error::Invariant("bank and label set disagree on label count".into()));
        }
        if self.feature_names.len() != self.bank.num_features {
            return Err(Error::Invariant("bank and feature names disagree on feature count".into()));
        }
        if self.mu.len() + 1 != self.bank.num_weights() {
            return Err(Error::Invariant(format!(
                "{} weights, expected {}",
                self.mu.len() + 1,
                self.bank.num_weights()
            )));
        }
        if !self.mu.iter().all(|w| w.is_finite()) || !self.nu.is_finite() {
            return Err(Error::Invariant("non-finite CRF weight".into()));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::Invariant("sigma2 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfConfig {
    pub sigma2: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub overlap_cutoff: f64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            sigma2: DEFAULT_SIGMA2,
            max_iters: DEFAULT_CG_ITERS,
            grad_tol: 1e-6,
            overlap_cutoff: DEFAULT_OVERLAP_CUTOFF,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrfFit {
    pub model: CrfModel,
    pub trace: Vec<TraceRow>,
}

/// Fits thresholds, then minimizes the penalized negative log-likelihood by
/// nonlinear conjugate gradients starting from zero weights.
pub fn train_crf(data: &[FeatureSequence], label_set: &LabelSet, config: &CrfConfig) -> Result<CrfFit> {
    if data.is_empty() || data.iter().all(FeatureSequence::is_empty) {
        return Err(Error::InvalidArgument("CRF training needs labeled data".into()));
    }
    if !(config.sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 must be positive, got {}", config.sigma2)));
    }
    let bank = fit_thresholds(data, label_set, config.overlap_cutoff)?;
    let objective = CrfObjective::new(&bank, data, label_set, config.sigma2)?;
    let opts = CgOptions {
        max_iters: config.max_iters,
        grad_tol: config.grad_tol,
        ..CgOptions::default()
    };
    let res = minimize_cg(|w| objective.value_and_gradient(w), vec![0.0; bank.num_weights()], &opts);
    let mut mu = res.x;
    let nu = mu.pop().expect("weight vector ends with nu");
    let model = CrfModel {
        label_set: label_set.clone(),
        feature_names: data[0].feature_names.clone(),
        bank,
        mu,
        nu,
        sigma2: config.sigma2,
    };
    model.validate()?;
    Ok(CrfFit {
        model,
        trace: res.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(m: usize, n: usize, t: f64) -> ThresholdBank {
        let triples = m * (m - 1) * n;
        ThresholdBank {
            num_labels: m,
            num_features: n,
            thresholds: vec![t; triples],
            relevance: vec![Relevance::Relevant; triples],
        }
    }

    #[test]
    fn weight_count() {
        let b = bank(3, 2, 0.0);
        assert_eq!(b.num_weights(), 2 * 3 * 2 * 2 + 1);
        let b = bank(12, 7, 0.0);
        assert_eq!(b.num_weights(), 2 * 12 * 11 * 7 + 1);
    }

    #[test]
    fn one_indicator_per_triple() {
        let b = bank(2, 1, 0.5);
        assert_eq!(feature_vector(&[1.0], 0, &b).len(), 1);
        let b = bank(4, 3, 0.5);
        let active = feature_vector(&[1.0, 0.0, 0.5], 2, &b);
        assert_eq!(active.len(), 3 * 3);
        // every active index belongs to label 2 and pairs are distinct
        let mut triples: Vec<usize> = active.iter().map(|i| i / 2).collect();
        triples.sort();
        triples.dedup();
        assert_eq!(triples.len(), 9);
        for i in active {
            assert_eq!(i / 2 / 3 / 3, 2);
        }
    }

    #[test]
    fn threshold_tie_is_not_exceed() {
        let b = bank(2, 1, 0.5);
        assert_eq!(feature_vector(&[0.5], 0, &b), vec![1]);
        assert_eq!(feature_vector(&[0.6], 0, &b), vec![0]);
    }

    #[test]
    fn persistence_feature() {
        assert_eq!(transition_feature(2, 2), 1.0);
        assert_eq!(transition_feature(2, 3), 0.0);
    }
}
