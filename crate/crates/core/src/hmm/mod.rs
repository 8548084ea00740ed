//! Discrete-emission hidden Markov model over behaviours.
//!
//! Every sensor is discretized into `D` bins and the sensors are conditionally
//! independent given the behaviour, so an observation at tick `t` is a row of
//! `n` bin indices in `1..=D` and its likelihood under state `b` is the product
//! of the per-sensor emission probabilities.
//!
//! Learning comes in three flavours: supervised counting
//! ([`fit_supervised`]), maximum likelihood EM ([`fit_em`]) and collapsed Gibbs
//! sampling ([`fit_gibbs`]). Prediction is always online MAP filtering
//! ([`filter_predict`]).

mod em;
mod gibbs;
mod inference;
mod matching;
mod supervised;

pub use em::{em_step, fit_em, EmFit, EmOptions, DEFAULT_RESTARTS};
pub use gibbs::{
    fit_gibbs, gibbs_conditional, gibbs_log_marginal, gibbs_sweep, GibbsFit, GibbsHyper,
    GibbsOptions, GibbsState,
};
pub use inference::{filter_predict, forward_backward, log_likelihood, FilterOutput, Posteriors};
pub use matching::{apply_mapping, match_states};
pub use supervised::{
    fit_supervised, fit_supervised_features, persistence_transitions, LabeledObs, PriorMode,
    SupervisedOptions, TransitionMode, DEFAULT_TAU,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on probability rows summing to one.
pub const ROW_TOL: f64 = 1e-9;

/// Initial, transition and emission tables of a discrete HMM.
///
/// `theta[b][b2]` is the probability of moving from `b` to `b2`;
/// `phi[b][k][s]` the probability that sensor `k` reads bin `s + 1` in state `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub state_names: Vec<String>,
    #[serde(with = "crate::persist::decimal::vec")]
    pub pi: Vec<f64>,
    #[serde(with = "crate::persist::decimal::mat")]
    pub theta: Vec<Vec<f64>>,
    #[serde(with = "crate::persist::decimal::cube")]
    pub phi: Vec<Vec<Vec<f64>>>,
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Invariant(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::Invariant(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

impl HmmModel {
    pub fn new(
        state_names: Vec<String>,
        pi: Vec<f64>,
        theta: Vec<Vec<f64>>,
        phi: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let model = HmmModel {
            state_names,
            pi,
            theta,
            phi,
        };
        model.validate()?;
        Ok(model)
    }

    /// Uniform model with latent state names `z0..`.
    pub fn uniform(m: usize, n: usize, d: usize) -> Self {
        HmmModel {
            state_names: latent_names(m),
            pi: vec![1.0 / m as f64; m],
            theta: vec![vec![1.0 / m as f64; m]; m],
            phi: vec![vec![vec![1.0 / d as f64; d]; n]; m],
        }
    }

    pub fn num_states(&self) -> usize {
        self.pi.len()
    }

    pub fn num_sensors(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    pub fn num_bins(&self) -> usize {
        self.phi.first().and_then(|p| p.first()).map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_states();
        let n = self.num_sensors();
        let d = self.num_bins();
        if m == 0 || n == 0 || d == 0 {
            return Err(Error::Invariant("model has an empty dimension".into()));
        }
        if self.state_names.len() != m {
            return Err(Error::Invariant(format!(
                "{} state names for {m} states",
                self.state_names.len()
            )));
        }
        check_row(&self.pi, "initial distribution")?;
        if self.theta.len() != m || self.phi.len() != m {
            return Err(Error::Invariant("table shapes disagree on state count".into()));
        }
        for (b, row) in self.theta.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Invariant(format!("transition row {b} has wrong length")));
            }
            check_row(row, &format!("transition row {b}"))?;
        }
        for (b, per_state) in self.phi.iter().enumerate() {
            if per_state.len() != n {
                return Err(Error::Invariant(format!("emission block {b} has wrong sensor count")));
            }
            for (k, row) in per_state.iter().enumerate() {
                if row.len() != d {
                    return Err(Error::Invariant(format!("emission row ({b},{k}) has wrong length")));
                }
                check_row(row, &format!("emission row ({b},{k})"))?;
            }
        }
        Ok(())
    }

    /// `sum_k ln phi[b][k][s_k]` for every state `b`.
    pub(crate) fn log_emission(&self, row: &[usize], out: &mut [f64]) {
        for (b, o) in out.iter_mut().enumerate() {
            *o = row
                .iter()
                .zip(&self.phi[b])
                .map(|(&s, p)| p[s - 1].ln())
                .sum();
        }
    }

    /// Checks that `obs` has `n` sensors per tick and bins in `1..=D`.
    pub fn check_observations(&self, obs: &[Vec<usize>]) -> Result<()> {
        check_observations(obs, self.num_sensors(), self.num_bins())
    }
}

pub(crate) fn check_observations(obs: &[Vec<usize>], n: usize, d: usize) -> Result<()> {
    for (t, row) in obs.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Dimension(format!(
                "tick {t} has {} sensors, model expects {n}",
                row.len()
            )));
        }
        if let Some(&s) = row.iter().find(|&&s| s == 0 || s > d) {
            return Err(Error::Dimension(format!(
                "tick {t} has bin {s}, model expects bins in 1..={d}"
            )));
        }
    }
    Ok(())
}

pub fn latent_names(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("z{i}")).collect()
}

pub(crate) fn normalize(row: &mut [f64]) -> f64 {
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|x| *x /= s);
    }
    s
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_model_is_valid() {
        let m = HmmModel::uniform(3, 2, 4);
        m.validate().unwrap();
        assert_eq!((m.num_states(), m.num_sensors(), m.num_bins()), (3, 2, 4));
    }

    #[test]
    fn invalid_rows_rejected() {
        let mut m = HmmModel::uniform(2, 1, 2);
        m.theta[1] = vec![0.25, 0.25];
        assert!(matches!(m.validate(), Err(Error::Invariant(_))));
        let mut m = HmmModel::uniform(2, 1, 2);
        m.phi[0][0] = vec![1.5, -0.5];
        assert!(m.validate().is_err());
    }

    #[test]
    fn observation_checks() {
        let m = HmmModel::uniform(2, 2, 3);
        assert!(m.check_observations(&[vec![1, 3]]).is_ok());
        assert!(m.check_observations(&[vec![0, 1]]).is_err());
        assert!(m.check_observations(&[vec![4, 1]]).is_err());
        assert!(m.check_observations(&[vec![1]]).is_err());
    }
}
