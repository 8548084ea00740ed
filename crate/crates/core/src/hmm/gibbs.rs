//! Collapsed Gibbs sampling of hidden behaviour sequences.
//!
//! The initial, transition and emission parameters carry independent
//! symmetric Dirichlet priors and are integrated out; the chain state is the
//! assignment of every tick plus the Dirichlet posterior counts implied by it.
//! Counts always include the pseudocounts, so `alpha[b][b2] = alpha0 + #(b -> b2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{check_observations, latent_names, HmmModel};
use crate::error::{Error, Result};

/// Dirichlet pseudocounts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsHyper {
    /// Transition pseudocount.
    pub alpha0: f64,
    /// Emission pseudocount.
    pub beta0: f64,
    /// Initial-state pseudocount.
    pub gamma0: f64,
}

impl Default for GibbsHyper {
    fn default() -> Self {
        GibbsHyper {
            alpha0: 1.0,
            beta0: 1.0,
            gamma0: 1.0,
        }
    }
}

impl GibbsHyper {
    pub fn validate(&self) -> Result<()> {
        if self.alpha0 > 0.0 && self.beta0 > 0.0 && self.gamma0 > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "Dirichlet pseudocounts must be positive, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GibbsState {
    pub assignments: Vec<Vec<usize>>,
    /// `m x m` transition counts.
    pub alpha: Vec<Vec<f64>>,
    /// `m x n x D` emission counts.
    pub beta: Vec<Vec<Vec<f64>>>,
    /// Initial-state counts.
    pub gamma: Vec<f64>,
    pub rng_seed: u64,
    hyper: GibbsHyper,
    /// Number of outgoing transitions from each state.
    out_degree: Vec<f64>,
    /// Ticks assigned to each state.
    occupancy: Vec<f64>,
    num_bins: usize,
    rng: ChaCha8Rng,
}

impl GibbsState {
    /// Uniformly random initial assignments.
    pub fn random(
        data: &[Vec<Vec<usize>>],
        num_states: usize,
        bins: usize,
        hyper: GibbsHyper,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let assignments = data
            .iter()
            .map(|obs| (0..obs.len()).map(|_| rng.random_range(0..num_states.max(1))).collect())
            .collect();
        let mut state = Self::from_assignments(data, assignments, num_states, bins, hyper, seed)?;
        state.rng = rng;
        Ok(state)
    }

    pub fn from_assignments(
        data: &[Vec<Vec<usize>>],
        assignments: Vec<Vec<usize>>,
        num_states: usize,
        bins: usize,
        hyper: GibbsHyper,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if num_states == 0 {
            return Err(Error::InvalidArgument("need at least one latent state".into()));
        }
        let n = sensor_count(data)?;
        let m = num_states;
        if assignments.len() != data.len() {
            return Err(Error::LengthMismatch("one assignment sequence per data sequence".into()));
        }
        let mut state = GibbsState {
            alpha: vec![vec![hyper.alpha0; m]; m],
            beta: vec![vec![vec![hyper.beta0; bins]; n]; m],
            gamma: vec![hyper.gamma0; m],
            out_degree: vec![0.0; m],
            occupancy: vec![0.0; m],
            num_bins: bins,
            rng_seed: seed,
            hyper,
            rng: ChaCha8Rng::seed_from_u64(seed),
            assignments: Vec::new(),
        };
        for (obs, z) in data.iter().zip(&assignments) {
            check_observations(obs, n, bins)?;
            if obs.len() != z.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} assignments for {} ticks",
                    z.len(),
                    obs.len()
                )));
            }
            if z.iter().any(|&b| b >= m) {
                return Err(Error::InvalidArgument("assignment out of range".into()));
            }
            for t in 0..z.len() {
                state.add_emission(z[t], &obs[t], 1.0);
                if t == 0 {
                    state.gamma[z[0]] += 1.0;
                } else {
                    state.add_transition(z[t - 1], z[t], 1.0);
                }
            }
        }
        state.assignments = assignments;
        Ok(state)
    }

    pub fn num_states(&self) -> usize {
        self.gamma.len()
    }

    pub fn hyper(&self) -> GibbsHyper {
        self.hyper
    }

    fn add_transition(&mut self, from: usize, to: usize, w: f64) {
        self.alpha[from][to] += w;
        self.out_degree[from] += w;
    }

    fn add_emission(&mut self, b: usize, row: &[usize], w: f64) {
        for (k, &s) in row.iter().enumerate() {
            self.beta[b][k][s - 1] += w;
        }
        self.occupancy[b] += w;
    }

    /// Adds (`w = 1`) or removes (`w = -1`) every count that involves tick `t`.
    fn touch(&mut self, obs: &[Vec<usize>], seq: usize, t: usize, w: f64) {
        let z = &self.assignments[seq];
        let (b, prev, next) = (z[t], t.checked_sub(1).map(|p| z[p]), z.get(t + 1).copied());
        match prev {
            None => self.gamma[b] += w,
            Some(p) => self.add_transition(p, b, w),
        }
        if let Some(nx) = next {
            self.add_transition(b, nx, w);
        }
        self.add_emission(b, &obs[t], w);
    }

    /// Conditional of tick `t` given everything else, with `t` already removed
    /// from the counts.
    fn conditional_removed(&self, obs: &[Vec<usize>], seq: usize, t: usize) -> Vec<f64> {
        let m = self.num_states();
        let z = &self.assignments[seq];
        let prev = t.checked_sub(1).map(|p| z[p]);
        let next = z.get(t + 1).copied();
        let gamma_total: f64 = self.gamma.iter().sum();
        let bins = self.num_bins as f64;
        let mut logp: Vec<f64> = (0..m)
            .map(|b| {
                let mut lp = match prev {
                    None => (self.gamma[b] / gamma_total).ln(),
                    Some(p) => {
                        (self.alpha[p][b] / (self.out_degree[p] + m as f64 * self.hyper.alpha0)).ln()
                    }
                };
                if let Some(nx) = next {
                    // prev -> b was just counted when prev == b
                    let same = f64::from(u8::from(prev == Some(b)));
                    let hit = same * f64::from(u8::from(b == nx));
                    lp += ((self.alpha[b][nx] + hit)
                        / (self.out_degree[b] + m as f64 * self.hyper.alpha0 + same))
                        .ln();
                }
                let denom = self.occupancy[b] + bins * self.hyper.beta0;
                for (k, &s) in obs[t].iter().enumerate() {
                    lp += (self.beta[b][k][s - 1] / denom).ln();
                }
                lp
            })
            .collect();
        let mx = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        logp.iter_mut().for_each(|x| *x = (*x - mx).exp());
        super::normalize(&mut logp);
        logp
    }

    /// `ln Pr(B, s)` computed from the current counts.
    pub fn log_marginal(&self) -> f64 {
        let h = self.hyper;
        let m = self.num_states();
        let d = self.num_bins;
        let mut total = dirichlet_block(&self.gamma, h.gamma0);
        for row in &self.alpha {
            total += dirichlet_block(row, h.alpha0);
        }
        for per_sensor in &self.beta {
            for row in per_sensor {
                total += dirichlet_block(row, h.beta0);
            }
        }
        debug_assert_eq!(self.gamma.len(), m);
        debug_assert!(self.beta.iter().flatten().all(|r| r.len() == d));
        total
    }

    /// Recomputes every count from the assignments and compares.
    pub fn check_counts(&self, data: &[Vec<Vec<usize>>]) -> Result<()> {
        let fresh = GibbsState::from_assignments(
            data,
            self.assignments.clone(),
            self.num_states(),
            self.num_bins,
            self.hyper,
            self.rng_seed,
        )?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        let ok = fresh.gamma.iter().zip(&self.gamma).all(|(a, b)| close(*a, *b))
            && fresh
                .alpha
                .iter()
                .flatten()
                .zip(self.alpha.iter().flatten())
                .all(|(a, b)| close(*a, *b))
            && fresh
                .beta
                .iter()
                .flatten()
                .flatten()
                .zip(self.beta.iter().flatten().flatten())
                .all(|(a, b)| close(*a, *b));
        if ok {
            Ok(())
        } else {
            Err(Error::Invariant("Gibbs counts drifted from the assignments".into()))
        }
    }

    /// Point estimate from the Dirichlet posterior means of the current counts.
    pub fn posterior_mean_model(&self) -> HmmModel {
        let norm = |row: &[f64]| {
            let s: f64 = row.iter().sum();
            row.iter().map(|x| x / s).collect::<Vec<_>>()
        };
        HmmModel {
            state_names: latent_names(self.num_states()),
            pi: norm(&self.gamma),
            theta: self.alpha.iter().map(|r| norm(r)).collect(),
            phi: self
                .beta
                .iter()
                .map(|per_sensor| per_sensor.iter().map(|r| norm(r)).collect())
                .collect(),
        }
    }
}

/// `ln [Gamma(K c0) / Gamma(c0)^K] + sum ln Gamma(c_i) - ln Gamma(sum c_i)` for
/// posterior counts `c` with prior pseudocount `c0`.
fn dirichlet_block(counts: &[f64], prior: f64) -> f64 {
    let k = counts.len() as f64;
    let post_total: f64 = counts.iter().sum();
    ln_gamma(k * prior) - k * ln_gamma(prior) + counts.iter().map(|&c| ln_gamma(c)).sum::<f64>()
        - ln_gamma(post_total)
}

fn sensor_count(data: &[Vec<Vec<usize>>]) -> Result<usize> {
    data.iter()
        .find_map(|s| s.first().map(Vec::len))
        .ok_or_else(|| Error::InvalidArgument("Gibbs sampling needs a non-empty dataset".into()))
}

/// Exact `ln Pr(B_1..T, s_1..T)` with all parameters integrated out.
///
/// This is the product of Dirichlet-multinomial marginals for the initial
/// state, every transition row and every (state, sensor) emission row,
/// including their prior normalizers.
pub fn gibbs_log_marginal(
    assignments: &[Vec<usize>],
    data: &[Vec<Vec<usize>>],
    num_states: usize,
    bins: usize,
    hyper: &GibbsHyper,
) -> Result<f64> {
    let state =
        GibbsState::from_assignments(data, assignments.to_vec(), num_states, bins, *hyper, 0)?;
    Ok(state.log_marginal())
}

/// Full conditional of `B_t` in sequence `seq`; `state` is left unchanged.
pub fn gibbs_conditional(
    state: &mut GibbsState,
    data: &[Vec<Vec<usize>>],
    seq: usize,
    t: usize,
) -> Vec<f64> {
    state.touch(&data[seq], seq, t, -1.0);
    let p = state.conditional_removed(&data[seq], seq, t);
    state.touch(&data[seq], seq, t, 1.0);
    p
}

/// One systematic-scan sweep over every tick of every sequence.
pub fn gibbs_sweep(state: &mut GibbsState, data: &[Vec<Vec<usize>>]) {
    for seq in 0..data.len() {
        let obs = &data[seq];
        for t in 0..obs.len() {
            state.touch(obs, seq, t, -1.0);
            let p = state.conditional_removed(obs, seq, t);
            let u: f64 = state.rng.random();
            let mut acc = 0.0;
            let mut pick = p.len() - 1;
            for (b, &pb) in p.iter().enumerate() {
                acc += pb;
                if u < acc {
                    pick = b;
                    break;
                }
            }
            state.assignments[seq][t] = pick;
            state.touch(obs, seq, t, 1.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsOptions {
    pub num_states: usize,
    pub hyper: GibbsHyper,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        GibbsOptions {
            num_states: 2,
            hyper: GibbsHyper::default(),
            sweeps: 200,
            burn_in: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GibbsFit {
    pub model: HmmModel,
    /// `ln Pr(B, s)` after each sweep.
    pub trace: Vec<f64>,
    pub state: GibbsState,
}

/// Runs the sampler and returns the posterior-mean model of the final
/// assignment. Prediction with the result goes through filtering.
pub fn fit_gibbs(data: &[Vec<Vec<usize>>], bins: usize, opts: &GibbsOptions) -> Result<GibbsFit> {
    if opts.sweeps <= opts.burn_in {
        return Err(Error::InvalidArgument(format!(
            "sweeps ({}) must exceed burn-in ({})",
            opts.sweeps, opts.burn_in
        )));
    }
    let mut state = GibbsState::random(data, opts.num_states, bins, opts.hyper, opts.seed)?;
    let mut trace = Vec::with_capacity(opts.sweeps);
    for _ in 0..opts.sweeps {
        gibbs_sweep(&mut state, data);
        trace.push(state.log_marginal());
    }
    Ok(GibbsFit {
        model: state.posterior_mean_model(),
        trace,
        state,
    })
}
