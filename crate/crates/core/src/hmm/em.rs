//! Maximum likelihood learning from unlabeled sequences by EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_observations, forward_backward, latent_names, HmmModel};
use crate::error::{Error, Result};

pub const DEFAULT_RESTARTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub num_states: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once an iteration improves the log-likelihood by less than
    /// `tol * |log-likelihood|`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            num_states: 2,
            restarts: DEFAULT_RESTARTS,
            max_iters: 300,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: HmmModel,
    pub log_likelihood: f64,
    /// Training log-likelihood of the winning restart, one entry per parameter
    /// set visited (initial draw first).
    pub trace: Vec<f64>,
    /// Final log-likelihood of every restart, in restart order.
    pub restart_log_likelihoods: Vec<f64>,
}

fn dirichlet_ones<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    super::normalize(&mut v);
    v
}

fn random_model<R: Rng>(rng: &mut R, m: usize, n: usize, d: usize) -> HmmModel {
    HmmModel {
        state_names: latent_names(m),
        pi: dirichlet_ones(rng, m),
        theta: (0..m).map(|_| dirichlet_ones(rng, m)).collect(),
        phi: (0..m)
            .map(|_| (0..n).map(|_| dirichlet_ones(rng, d)).collect())
            .collect(),
    }
}

/// One EM iteration. Returns the updated model and the log-likelihood of the
/// model that was passed in.
pub fn em_step(model: &HmmModel, data: &[Vec<Vec<usize>>]) -> Result<(HmmModel, f64)> {
    let m = model.num_states();
    let n = model.num_sensors();
    let d = model.num_bins();
    let posts = data
        .par_iter()
        .map(|obs| forward_backward(model, obs))
        .collect::<Result<Vec<_>>>()?;

    let mut e0 = vec![0.0; m];
    let mut trans = vec![vec![0.0; m]; m];
    let mut emit = vec![vec![vec![0.0; d]; n]; m];
    let mut ll = 0.0;
    let mut used = 0usize;
    for (obs, post) in data.iter().zip(&posts) {
        ll += post.log_likelihood;
        let Some(g0) = post.gamma.first() else { continue };
        used += 1;
        for b in 0..m {
            e0[b] += g0[b];
            for b2 in 0..m {
                trans[b][b2] += post.xi_sum[b][b2];
            }
        }
        for (row, g) in obs.iter().zip(&post.gamma) {
            for b in 0..m {
                for (k, &s) in row.iter().enumerate() {
                    emit[b][k][s - 1] += g[b];
                }
            }
        }
    }
    let mut next = model.clone();
    if used > 0 {
        next.pi = e0.iter().map(|x| x / used as f64).collect();
        super::normalize(&mut next.pi);
    }
    for b in 0..m {
        // a state without expected mass keeps its previous rows
        if trans[b].iter().sum::<f64>() > 0.0 {
            next.theta[b] = trans[b].clone();
            super::normalize(&mut next.theta[b]);
        }
        for k in 0..n {
            if emit[b][k].iter().sum::<f64>() > 0.0 {
                next.phi[b][k] = emit[b][k].clone();
                super::normalize(&mut next.phi[b][k]);
            }
        }
    }
    Ok((next, ll))
}

/// Runs EM from `init` until convergence. Returns the final model, its
/// log-likelihood and the per-iteration trace.
fn run_from(
    init: HmmModel,
    data: &[Vec<Vec<usize>>],
    max_iters: usize,
    tol: f64,
) -> Result<(HmmModel, f64, Vec<f64>)> {
    let mut model = init;
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        let (next, ll) = em_step(&model, data)?;
        let converged = trace
            .last()
            .is_some_and(|&prev: &f64| ll - prev < tol * prev.abs());
        trace.push(ll);
        if converged {
            return Ok((model, ll, trace));
        }
        model = next;
    }
    let ll: f64 = data
        .iter()
        .map(|obs| super::log_likelihood(&model, obs))
        .sum::<Result<f64>>()?;
    trace.push(ll);
    Ok((model, ll, trace))
}

/// EM with random restarts; keeps the restart with the highest likelihood.
///
/// Each restart draws its initial tables from symmetric Dirichlet(1)
/// distributions using its own ChaCha stream, so the result does not depend on
/// thread scheduling.
pub fn fit_em(data: &[Vec<Vec<usize>>], bins: usize, opts: &EmOptions) -> Result<EmFit> {
    if opts.num_states == 0 {
        return Err(Error::InvalidArgument("EM needs at least one latent state".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("EM needs at least one restart".into()));
    }
    let n = data
        .iter()
        .find_map(|s| s.first().map(Vec::len))
        .ok_or_else(|| Error::InvalidArgument("EM needs a non-empty dataset".into()))?;
    for obs in data {
        check_observations(obs, n, bins)?;
    }

    let runs = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            let init = random_model(&mut rng, opts.num_states, n, bins);
            run_from(init, data, opts.max_iters, opts.tol)
        })
        .collect::<Result<Vec<_>>>()?;

    let restart_log_likelihoods: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let best = (0..runs.len())
        .reduce(|a, b| if runs[b].1 > runs[a].1 { b } else { a })
        .expect("at least one restart");
    let (model, log_likelihood, trace) = runs.into_iter().nth(best).expect("best index in range");
    log::debug!("EM restarts: {restart_log_likelihoods:?}, best {best}");
    Ok(EmFit {
        model,
        log_likelihood,
        trace,
        restart_log_likelihoods,
    })
}
