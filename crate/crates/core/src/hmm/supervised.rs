use serde::{Deserialize, Serialize};

use super::{check_observations, HmmModel};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::types::LabelSet;

/// Persistence used by the fixed transition model.
pub const DEFAULT_TAU: f64 = 4000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tau", rename_all = "lowercase")]
pub enum TransitionMode {
    /// Smoothed transition counts.
    Learned,
    /// Each behaviour is `tau` times more likely to persist than to switch to
    /// any particular other behaviour.
    Persistence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    /// Marginal label frequency over all ticks.
    Learned,
    /// Frequency of the first label of each sequence.
    InitialState,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisedOptions {
    pub transitions: TransitionMode,
    pub prior: PriorMode,
    /// Pseudocount added to every transition, emission and prior count.
    pub pseudocount: f64,
}

impl Default for SupervisedOptions {
    fn default() -> Self {
        SupervisedOptions {
            transitions: TransitionMode::Persistence(DEFAULT_TAU),
            prior: PriorMode::Uniform,
            pseudocount: 1.0,
        }
    }
}

/// One labeled training sequence: discretized observations and state indices.
#[derive(Debug, Clone, Copy)]
pub struct LabeledObs<'a> {
    pub obs: &'a [Vec<usize>],
    pub states: &'a [usize],
}

/// `tau / (m + tau - 1)` on the diagonal, `1 / (m + tau - 1)` elsewhere.
pub fn persistence_transitions(m: usize, tau: f64) -> Result<Vec<Vec<f64>>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let denom = m as f64 + tau - 1.0;
    let stay = tau / denom;
    let leave = 1.0 / denom;
    Ok((0..m)
        .map(|b| (0..m).map(|b2| if b == b2 { stay } else { leave }).collect())
        .collect())
}

fn smoothed(counts: &[f64], eps: f64, what: &dyn Fn() -> String) -> Result<Vec<f64>> {
    let total: f64 = counts.iter().sum::<f64>() + eps * counts.len() as f64;
    if total <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{} has no training counts; use a positive pseudocount",
            what()
        )));
    }
    Ok(counts.iter().map(|c| (c + eps) / total).collect())
}

/// Maximum likelihood estimates by counting labeled data.
pub fn fit_supervised(
    data: &[LabeledObs<'_>],
    state_names: Vec<String>,
    bins: usize,
    opts: &SupervisedOptions,
) -> Result<HmmModel> {
    let m = state_names.len();
    let eps = opts.pseudocount;
    if m == 0 || bins == 0 {
        return Err(Error::InvalidArgument("need at least one state and one bin".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("pseudocount must be >= 0, got {eps}")));
    }
    let n = data
        .iter()
        .find_map(|d| d.obs.first().map(Vec::len))
        .ok_or_else(|| Error::InvalidArgument("no labeled training ticks".into()))?;

    let mut trans = vec![vec![0.0; m]; m];
    let mut occupancy = vec![0.0; m];
    let mut first = vec![0.0; m];
    let mut emit = vec![vec![vec![0.0; bins]; n]; m];
    for seq in data {
        if seq.obs.len() != seq.states.len() {
            return Err(Error::LengthMismatch(format!(
                "{} observations for {} labels",
                seq.obs.len(),
                seq.states.len()
            )));
        }
        check_observations(seq.obs, n, bins)?;
        if let Some(&b) = seq.states.iter().find(|&&b| b >= m) {
            return Err(Error::InvalidArgument(format!("state index {b} out of range")));
        }
        if let Some(&b0) = seq.states.first() {
            first[b0] += 1.0;
        }
        for w in seq.states.windows(2) {
            trans[w[0]][w[1]] += 1.0;
        }
        for (row, &b) in seq.obs.iter().zip(seq.states) {
            occupancy[b] += 1.0;
            for (k, &s) in row.iter().enumerate() {
                emit[b][k][s - 1] += 1.0;
            }
        }
    }

    let theta = match opts.transitions {
        TransitionMode::Persistence(tau) => persistence_transitions(m, tau)?,
        TransitionMode::Learned => trans
            .iter()
            .enumerate()
            .map(|(b, row)| smoothed(row, eps, &|| format!("transition row {}", state_names[b])))
            .collect::<Result<_>>()?,
    };
    let pi = match opts.prior {
        PriorMode::Uniform => vec![1.0 / m as f64; m],
        PriorMode::Learned => smoothed(&occupancy, eps, &|| "prior".into())?,
        PriorMode::InitialState => smoothed(&first, eps, &|| "initial-state prior".into())?,
    };
    let phi = emit
        .iter()
        .enumerate()
        .map(|(b, per_sensor)| {
            per_sensor
                .iter()
                .enumerate()
                .map(|(k, row)| {
                    smoothed(row, eps, &|| format!("emission row ({}, sensor {k})", state_names[b]))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    HmmModel::new(state_names, pi, theta, phi)
}

/// Supervised fit on discretized, labeled feature sequences.
pub fn fit_supervised_features(
    seqs: &[FeatureSequence],
    label_set: &LabelSet,
    bins: usize,
    opts: &SupervisedOptions,
) -> Result<HmmModel> {
    let encoded = seqs
        .iter()
        .map(|s| {
            let labels = s
                .labels
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("sequence {} is unlabeled", s.participant_id)))?;
            let obs = s
                .discretized
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("sequence {} is not discretized", s.participant_id)))?;
            Ok((obs, label_set.encode(labels)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let data: Vec<LabeledObs<'_>> = encoded
        .iter()
        .map(|(obs, states)| LabeledObs { obs, states })
        .collect();
    fit_supervised(&data, label_set.codes(), bins, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn learned(eps: f64) -> SupervisedOptions {
        SupervisedOptions {
            transitions: TransitionMode::Learned,
            prior: PriorMode::Learned,
            pseudocount: eps,
        }
    }

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn transition_counts() {
        // A A B B B
        let states = [0, 0, 1, 1, 1];
        let obs = vec![vec![1]; 5];
        let model = fit_supervised(&[LabeledObs { obs: &obs, states: &states }], names(2), 1, &learned(0.0)).unwrap();
        assert_eq!(model.theta[0], vec![0.5, 0.5]);
        assert_eq!(model.theta[1], vec![0.0, 1.0]);
        assert_eq!(model.pi, vec![0.4, 0.6]);
    }

    #[test]
    fn emission_counts() {
        // A A B with bins 1 2 2
        let states = [0, 0, 1];
        let obs = vec![vec![1], vec![2], vec![2]];
        let opts = SupervisedOptions {
            transitions: TransitionMode::Persistence(2.0),
            ..learned(0.0)
        };
        let model = fit_supervised(&[LabeledObs { obs: &obs, states: &states }], names(2), 2, &opts).unwrap();
        assert_eq!(model.phi[0][0], vec![0.5, 0.5]);
        assert_eq!(model.phi[1][0], vec![0.0, 1.0]);
    }

    #[test]
    fn persistence_rows() {
        let t = persistence_transitions(13, 4000.0).unwrap();
        assert!((t[0][0] - 0.997_009).abs() < 5e-7);
        assert!((t[0][1] - 0.000_249).abs() < 5e-7);
        assert_eq!(t[3][3], 4000.0 / 4012.0);
        assert_eq!(t[3][4], 1.0 / 4012.0);
        assert!(persistence_transitions(3, 0.0).is_err());
    }

    #[test]
    fn unseen_state_needs_smoothing() {
        let states = [0, 0];
        let obs = vec![vec![1]; 2];
        let data = [LabeledObs { obs: &obs, states: &states }];
        assert!(fit_supervised(&data, names(2), 2, &learned(0.0)).is_err());
        let model = fit_supervised(&data, names(2), 2, &learned(1.0)).unwrap();
        assert_eq!(model.theta[1], vec![0.5, 0.5]);
        assert_eq!(model.phi[1][0], vec![0.5, 0.5]);
        // (2 + 1) / (2 + 2)
        assert_eq!(model.pi[0], 0.75);
    }

    #[test]
    fn prior_modes() {
        let s1 = [1, 0, 0];
        let s2 = [1, 1];
        let o1 = vec![vec![1]; 3];
        let o2 = vec![vec![1]; 2];
        let data = [LabeledObs { obs: &o1, states: &s1 }, LabeledObs { obs: &o2, states: &s2 }];
        let mut opts = learned(0.0);
        opts.prior = PriorMode::InitialState;
        let m = fit_supervised(&data, names(2), 1, &opts).unwrap();
        assert_eq!(m.pi, vec![0.0, 1.0]);
        opts.prior = PriorMode::Uniform;
        let m = fit_supervised(&data, names(2), 1, &opts).unwrap();
        assert_eq!(m.pi, vec![0.5, 0.5]);
    }
}
