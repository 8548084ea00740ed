//! Forward filtering, likelihood and forward-backward posteriors.
//!
//! All recursions keep a normalized forward vector and accumulate the log of
//! the per-tick normalizers, so sequences of 10^5 ticks do not underflow.

use super::{argmax, HmmModel};
use crate::error::{Error, Result};

/// Scaled forward pass.
struct Forward {
    /// Normalized filtered distribution per tick.
    alpha: Vec<Vec<f64>>,
    /// Emission likelihoods rescaled by `exp(-max_b log e_t(b))`.
    scaled_emission: Vec<Vec<f64>>,
    /// Normalizer of each tick in the rescaled units.
    norm: Vec<f64>,
    log_likelihood: f64,
}

fn forward(model: &HmmModel, obs: &[Vec<usize>]) -> Result<Forward> {
    model.check_observations(obs)?;
    let m = model.num_states();
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(obs.len());
    let mut scaled_emission = Vec::with_capacity(obs.len());
    let mut norm = Vec::with_capacity(obs.len());
    let mut log_likelihood = 0.0;
    let mut le = vec![0.0; m];
    for (t, row) in obs.iter().enumerate() {
        let pred: Vec<f64> = match alpha.last() {
            None => model.pi.clone(),
            Some(prev) => (0..m)
                .map(|b| (0..m).map(|a| prev[a] * model.theta[a][b]).sum())
                .collect(),
        };
        model.log_emission(row, &mut le);
        let shift = le.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::ZeroLikelihood { t });
        }
        let e: Vec<f64> = le.iter().map(|&l| (l - shift).exp()).collect();
        let mut a: Vec<f64> = pred.iter().zip(&e).map(|(p, e)| p * e).collect();
        let c = super::normalize(&mut a);
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::ZeroLikelihood { t });
        }
        log_likelihood += c.ln() + shift;
        alpha.push(a);
        scaled_emission.push(e);
        norm.push(c);
    }
    Ok(Forward {
        alpha,
        scaled_emission,
        norm,
        log_likelihood,
    })
}

/// Result of MAP filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// `argmax_b Pr(B_t = b | s_1..s_t)` per tick, ties to the lowest index.
    pub states: Vec<usize>,
    /// `T x m` filtered marginals.
    pub marginals: Vec<Vec<f64>>,
}

/// Online MAP filtering: each prediction uses only observations up to its tick.
pub fn filter_predict(model: &HmmModel, obs: &[Vec<usize>]) -> Result<FilterOutput> {
    let fwd = forward(model, obs)?;
    Ok(FilterOutput {
        states: fwd.alpha.iter().map(|a| argmax(a)).collect(),
        marginals: fwd.alpha,
    })
}

/// `ln Pr(s_1..s_T)` by the forward algorithm.
pub fn log_likelihood(model: &HmmModel, obs: &[Vec<usize>]) -> Result<f64> {
    Ok(forward(model, obs)?.log_likelihood)
}

/// Smoothed posteriors of one sequence.
#[derive(Debug, Clone)]
pub struct Posteriors {
    /// `Pr(B_t = b | s_1..s_T)`, `T x m`.
    pub gamma: Vec<Vec<f64>>,
    /// `sum_t Pr(B_t = a, B_{t+1} = b | s_1..s_T)`, `m x m`.
    pub xi_sum: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

pub fn forward_backward(model: &HmmModel, obs: &[Vec<usize>]) -> Result<Posteriors> {
    let m = model.num_states();
    let tlen = obs.len();
    let fwd = forward(model, obs)?;
    let mut gamma = fwd.alpha.clone();
    let mut xi_sum = vec![vec![0.0; m]; m];
    if tlen == 0 {
        return Ok(Posteriors {
            gamma,
            xi_sum,
            log_likelihood: 0.0,
        });
    }
    let mut beta = vec![1.0; m];
    for t in (0..tlen - 1).rev() {
        let e = &fwd.scaled_emission[t + 1];
        let c = fwd.norm[t + 1];
        let w: Vec<f64> = (0..m).map(|b| e[b] * beta[b] / c).collect();
        let a = &fwd.alpha[t];
        for i in 0..m {
            for j in 0..m {
                xi_sum[i][j] += a[i] * model.theta[i][j] * w[j];
            }
        }
        beta = (0..m)
            .map(|i| (0..m).map(|j| model.theta[i][j] * w[j]).sum())
            .collect();
        for (g, b) in gamma[t].iter_mut().zip(&beta) {
            *g *= b;
        }
        // absorb rounding drift
        super::normalize(&mut gamma[t]);
    }
    Ok(Posteriors {
        gamma,
        xi_sum,
        log_likelihood: fwd.log_likelihood,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(m: usize, i: usize) -> Vec<f64> {
        (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn single_step_bayes() {
        let model = HmmModel::new(
            vec!["A".into(), "B".into()],
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5]; 2],
            vec![vec![vec![0.9, 0.1]], vec![vec![0.2, 0.8]]],
        )
        .unwrap();
        let out = filter_predict(&model, &[vec![1]]).unwrap();
        assert_eq!(out.states, vec![0]);
        assert!((out.marginals[0][0] - 0.9 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn deterministic_model_reproduces_states() {
        // 0 -> 1 -> 2 -> 0 cycle, state b always emits bin b+1
        let m = 3;
        let model = HmmModel::new(
            vec!["a".into(), "b".into(), "c".into()],
            one_hot(m, 0),
            (0..m).map(|b| one_hot(m, (b + 1) % m)).collect(),
            (0..m).map(|b| vec![one_hot(m, b)]).collect(),
        )
        .unwrap();
        let states: Vec<usize> = (0..9).map(|t| t % 3).collect();
        let obs: Vec<Vec<usize>> = states.iter().map(|&b| vec![b + 1]).collect();
        let out = filter_predict(&model, &obs).unwrap();
        assert_eq!(out.states, states);
        assert!(log_likelihood(&model, &obs).unwrap().abs() < 1e-12);
    }

    #[test]
    fn impossible_observation_names_tick() {
        let model = HmmModel::new(
            vec!["a".into(), "b".into()],
            vec![1.0, 0.0],
            vec![one_hot(2, 0), one_hot(2, 1)],
            vec![vec![one_hot(2, 0)], vec![one_hot(2, 1)]],
        )
        .unwrap();
        let err = filter_predict(&model, &[vec![1], vec![1], vec![2]]).unwrap_err();
        assert!(matches!(err, Error::ZeroLikelihood { t: 2 }));
    }

    #[test]
    fn single_state_likelihood() {
        let model = HmmModel::new(
            vec!["a".into()],
            vec![1.0],
            vec![vec![1.0]],
            vec![vec![vec![0.2, 0.8], vec![0.6, 0.4]]],
        )
        .unwrap();
        let obs = vec![vec![1, 2], vec![2, 1], vec![2, 2]];
        let expected = 0.2f64.ln() + 0.4f64.ln() + 0.8f64.ln() + 0.6f64.ln() + 0.8f64.ln() + 0.4f64.ln();
        assert!((log_likelihood(&model, &obs).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_likelihood() {
        let model = HmmModel::uniform(3, 1, 5);
        let ll = log_likelihood(&model, &[vec![2], vec![4]]).unwrap();
        assert!((ll - 2.0 * (1.0f64 / 5.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn posteriors_are_distributions() {
        let model = HmmModel::new(
            vec!["a".into(), "b".into()],
            vec![0.3, 0.7],
            vec![vec![0.8, 0.2], vec![0.1, 0.9]],
            vec![vec![vec![0.6, 0.4]], vec![vec![0.3, 0.7]]],
        )
        .unwrap();
        let obs = vec![vec![1], vec![2], vec![2], vec![1]];
        let post = forward_backward(&model, &obs).unwrap();
        for g in &post.gamma {
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let total: f64 = post.xi_sum.iter().flatten().sum();
        assert!((total - 3.0).abs() < 1e-12);
    }
}
