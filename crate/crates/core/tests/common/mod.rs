//! Brute-force reference computations shared by the integration tests.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use walker_activity::crf::{feature_vector, Relevance, ThresholdBank};
use walker_activity::hmm::{latent_names, HmmModel};

/// Every label path of length `len` over `m` labels.
pub fn all_paths(m: usize, len: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![Vec::new()];
    for _ in 0..len {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..m).map(move |b| {
                    let mut q = p.clone();
                    q.push(b);
                    q
                })
            })
            .collect();
    }
    paths
}

/// Joint probability of a state path and the observations.
pub fn hmm_joint(model: &HmmModel, path: &[usize], obs: &[Vec<usize>]) -> f64 {
    let mut p = 1.0;
    for (t, (&b, row)) in path.iter().zip(obs).enumerate() {
        p *= if t == 0 { model.pi[b] } else { model.theta[path[t - 1]][b] };
        for (k, &s) in row.iter().enumerate() {
            p *= model.phi[b][k][s - 1];
        }
    }
    p
}

/// Filtered marginals `Pr(B_t | s_1..s_t)` and `ln Pr(s_1..s_T)` by summing
/// over every path prefix.
pub fn hmm_enumerate(model: &HmmModel, obs: &[Vec<usize>]) -> (Vec<Vec<f64>>, f64) {
    let m = model.num_states();
    let mut filtered = Vec::with_capacity(obs.len());
    for t in 0..obs.len() {
        let mut row = vec![0.0; m];
        for path in all_paths(m, t + 1) {
            row[path[t]] += hmm_joint(model, &path, &obs[..=t]);
        }
        let z: f64 = row.iter().sum();
        filtered.push(row.iter().map(|x| x / z).collect());
    }
    let total: f64 = all_paths(m, obs.len())
        .iter()
        .map(|p| hmm_joint(model, p, obs))
        .sum();
    (filtered, total.ln())
}

pub fn random_simplex(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn random_hmm(rng: &mut ChaCha8Rng, m: usize, n: usize, d: usize) -> HmmModel {
    HmmModel::new(
        latent_names(m),
        random_simplex(rng, m),
        (0..m).map(|_| random_simplex(rng, m)).collect(),
        (0..m)
            .map(|_| (0..n).map(|_| random_simplex(rng, d)).collect())
            .collect(),
    )
    .expect("random tables are stochastic")
}

pub fn random_obs(rng: &mut ChaCha8Rng, len: usize, n: usize, d: usize) -> Vec<Vec<usize>> {
    (0..len)
        .map(|_| (0..n).map(|_| rng.random_range(1..=d)).collect())
        .collect()
}

pub fn random_bank(rng: &mut ChaCha8Rng, m: usize, n: usize) -> ThresholdBank {
    let triples = m * (m - 1) * n;
    ThresholdBank {
        num_labels: m,
        num_features: n,
        thresholds: (0..triples).map(|_| rng.random_range(-1.0..1.0)).collect(),
        relevance: vec![Relevance::Relevant; triples],
    }
}

/// Unnormalized CRF log score straight from the indicator features.
pub fn crf_path_score(weights: &[f64], bank: &ThresholdBank, values: &[Vec<f64>], path: &[usize]) -> f64 {
    let nu = weights[weights.len() - 1];
    let mut s = 0.0;
    for (t, (&b, row)) in path.iter().zip(values).enumerate() {
        s += feature_vector(row, b, bank).iter().map(|&i| weights[i]).sum::<f64>();
        if t > 0 && path[t - 1] == b {
            s += nu;
        }
    }
    s
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// `(log Z, best path, best score)` by scoring every path.
pub fn crf_enumerate(weights: &[f64], bank: &ThresholdBank, values: &[Vec<f64>]) -> (f64, Vec<usize>, f64) {
    let paths = all_paths(bank.num_labels, values.len());
    let scores: Vec<f64> = paths
        .iter()
        .map(|p| crf_path_score(weights, bank, values, p))
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    (log_sum_exp(&scores), paths[best].clone(), scores[best])
}
