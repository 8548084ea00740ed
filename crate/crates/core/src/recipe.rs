//! End-to-end training and prediction: raw recordings to features, features
//! to a model file, model file to behaviour labels.

use serde::{Deserialize, Serialize};

use crate::crf::{self, train_crf, viterbi_decode, CrfConfig, TraceRow};
use crate::error::{Error, Result};
use crate::eval::FoldRecipe;
use crate::features::{build_features, Calibration, Discretizer, FeatureMode, FeatureSequence, LoadRange, DEFAULT_BINS};
use crate::hmm::{
    self, filter_predict, fit_em, fit_gibbs, fit_supervised_features, match_states, EmOptions, GibbsHyper,
    GibbsOptions, PriorMode, SupervisedOptions, TransitionMode, DEFAULT_RESTARTS, DEFAULT_TAU,
};
use crate::persist::{ModelFile, Pipeline};
use crate::types::{Behaviour, LabelSet, RawSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    /// Supervised HMM from label counts.
    HmmMl,
    /// Unsupervised HMM by EM with random restarts.
    HmmEm,
    /// Unsupervised HMM by collapsed Gibbs sampling.
    HmmGibbs,
    /// Linear-chain CRF.
    Crf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TransitionChoice {
    /// Smoothed transition counts.
    Learned,
    /// Fixed self-transition odds `tau`.
    Persistence,
}

/// Every setting of a training run. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Recipe {
    pub family: ModelFamily,
    pub feature_mode: FeatureMode,
    pub ticks_per_meter: f64,
    /// Equal-frequency bins per feature (HMMs).
    pub bins: usize,
    pub transitions: TransitionChoice,
    pub tau: f64,
    pub prior: PriorMode,
    /// Pseudocount for supervised counting.
    pub epsilon: f64,
    /// Latent states for EM and Gibbs; defaults to the label count.
    pub num_states: Option<usize>,
    pub restarts: usize,
    pub em_max_iters: usize,
    pub em_tol: f64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub sigma2: f64,
    pub cg_iters: usize,
    pub seed: u64,
}

impl Default for Recipe {
    fn default() -> Self {
        let em = EmOptions::default();
        let gibbs = GibbsOptions::default();
        Recipe {
            family: ModelFamily::HmmMl,
            feature_mode: FeatureMode::Cop,
            ticks_per_meter: 1.0,
            bins: DEFAULT_BINS,
            transitions: TransitionChoice::Persistence,
            tau: DEFAULT_TAU,
            prior: PriorMode::Uniform,
            epsilon: 1.0,
            num_states: None,
            restarts: DEFAULT_RESTARTS,
            em_max_iters: em.max_iters,
            em_tol: em.tol,
            sweeps: gibbs.sweeps,
            burn_in: gibbs.burn_in,
            sigma2: crf::DEFAULT_SIGMA2,
            cg_iters: crf::DEFAULT_CG_ITERS,
            seed: 0,
        }
    }
}

/// Per-run training diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostics {
    None,
    /// Log-likelihood per iteration of the best restart, and every restart's
    /// final value.
    Em { trace: Vec<f64>, restarts: Vec<f64> },
    /// Log joint probability after each sweep.
    Gibbs { trace: Vec<f64> },
    Crf { trace: Vec<TraceRow> },
}

impl Diagnostics {
    /// CSV rendering, or `None` when there is nothing to report.
    pub fn to_csv(&self) -> Option<String> {
        let mut out = String::new();
        match self {
            Diagnostics::None => return None,
            Diagnostics::Em { trace, restarts } => {
                out.push_str("kind,index,log_likelihood\n");
                for (i, v) in trace.iter().enumerate() {
                    out.push_str(&format!("iteration,{i},{v:?}\n"));
                }
                for (i, v) in restarts.iter().enumerate() {
                    out.push_str(&format!("restart,{i},{v:?}\n"));
                }
            }
            Diagnostics::Gibbs { trace } => {
                out.push_str("sweep,log_joint\n");
                for (i, v) in trace.iter().enumerate() {
                    out.push_str(&format!("{},{v:?}\n", i + 1));
                }
            }
            Diagnostics::Crf { trace } => {
                out.push_str("iteration,objective,grad_norm\n");
                for r in trace {
                    out.push_str(&format!("{},{:?},{:?}\n", r.iteration, r.value, r.grad_norm));
                }
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub file: ModelFile,
    pub diagnostics: Diagnostics,
}

/// Labels produced by a model; unsupervised HMMs trained without labels
/// can only name their latent states.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Behaviours(Vec<Behaviour>),
    Latent(Vec<usize>),
}

impl Recipe {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.bins < 2 {
            return bad(format!("bins must be >= 2, got {}", self.bins));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.sigma2 > 0.0) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !(self.ticks_per_meter > 0.0) {
            return bad(format!("ticks_per_meter must be positive, got {}", self.ticks_per_meter));
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1".into());
        }
        if self.sweeps <= self.burn_in {
            return bad(format!("sweeps ({}) must exceed burn-in ({})", self.sweeps, self.burn_in));
        }
        if self.num_states == Some(0) {
            return bad("num_states must be >= 1".into());
        }
        Ok(())
    }

    /// Calibration for one participant. Load ranges are per participant and
    /// come from that participant's runs in `training`; a participant with
    /// no training runs is normalized by each recording's own range.
    pub fn calibration(&self, participant: &str, training: &[&RawSequence]) -> Calibration {
        Calibration {
            ticks_per_meter: self.ticks_per_meter,
            load_range: match self.feature_mode {
                FeatureMode::Nl => LoadRange::observe(
                    training.iter().copied().filter(|r| r.participant_id == participant),
                ),
                FeatureMode::Cop => None,
            },
        }
    }

    /// Features of `raws`, calibrated against `training`.
    pub fn featurize(&self, raws: &[&RawSequence], training: &[&RawSequence]) -> Result<Vec<FeatureSequence>> {
        raws.iter()
            .map(|r| build_features(r, self.feature_mode, &self.calibration(&r.participant_id, training)))
            .collect()
    }

    fn pipeline(&self, label_set: &LabelSet) -> Pipeline {
        Pipeline {
            feature_mode: self.feature_mode,
            ticks_per_meter: self.ticks_per_meter,
            label_set: label_set.clone(),
            discretizer: None,
            state_mapping: None,
        }
    }

    /// Fits the configured model family on feature sequences.
    pub fn train(&self, data: &[FeatureSequence], label_set: &LabelSet) -> Result<Trained> {
        self.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidArgument("no training sequences".into()));
        }
        let mut pipeline = self.pipeline(label_set);
        if self.family == ModelFamily::Crf {
            let fit = train_crf(
                data,
                label_set,
                &CrfConfig {
                    sigma2: self.sigma2,
                    max_iters: self.cg_iters,
                    ..CrfConfig::default()
                },
            )?;
            return Ok(Trained {
                file: ModelFile::Crf {
                    model: fit.model,
                    pipeline: Some(pipeline),
                },
                diagnostics: Diagnostics::Crf { trace: fit.trace },
            });
        }

        let disc = Discretizer::fit(data, self.bins)?;
        let data = data.iter().map(|s| disc.apply(s)).collect::<Result<Vec<_>>>()?;
        pipeline.discretizer = Some((&disc).into());
        let obs: Vec<Vec<Vec<usize>>> = data
            .iter()
            .map(|s| s.discretized.clone().expect("discretizer fills observations"))
            .collect();
        let num_states = self.num_states.unwrap_or(label_set.len());
        let (model, diagnostics) = match self.family {
            ModelFamily::HmmMl => {
                let opts = SupervisedOptions {
                    transitions: match self.transitions {
                        TransitionChoice::Learned => TransitionMode::Learned,
                        TransitionChoice::Persistence => TransitionMode::Persistence(self.tau),
                    },
                    prior: self.prior,
                    pseudocount: self.epsilon,
                };
                (fit_supervised_features(&data, label_set, self.bins, &opts)?, Diagnostics::None)
            }
            ModelFamily::HmmEm => {
                let fit = fit_em(
                    &obs,
                    self.bins,
                    &EmOptions {
                        num_states,
                        restarts: self.restarts,
                        max_iters: self.em_max_iters,
                        tol: self.em_tol,
                        seed: self.seed,
                    },
                )?;
                let diag = Diagnostics::Em {
                    trace: fit.trace,
                    restarts: fit.restart_log_likelihoods,
                };
                (fit.model, diag)
            }
            ModelFamily::HmmGibbs => {
                let fit = fit_gibbs(
                    &obs,
                    self.bins,
                    &GibbsOptions {
                        num_states,
                        hyper: GibbsHyper::default(),
                        sweeps: self.sweeps,
                        burn_in: self.burn_in,
                        seed: self.seed,
                    },
                )?;
                (fit.model, Diagnostics::Gibbs { trace: fit.trace })
            }
            ModelFamily::Crf => unreachable!("handled above"),
        };
        if matches!(self.family, ModelFamily::HmmEm | ModelFamily::HmmGibbs) {
            let labels: Option<Vec<Vec<Behaviour>>> = data.iter().map(|s| s.labels.clone()).collect();
            if let Some(labels) = labels {
                let latent = obs
                    .iter()
                    .map(|o| Ok(filter_predict(&model, o)?.states))
                    .collect::<Result<Vec<_>>>()?;
                pipeline.state_mapping = Some(match_states(&latent, &labels, num_states, label_set)?);
            } else {
                log::warn!("training data is unlabeled; latent states stay unnamed");
            }
        }
        Ok(Trained {
            file: ModelFile::Hmm {
                model,
                pipeline: Some(pipeline),
            },
            diagnostics,
        })
    }
}

/// Labels one feature sequence: HMMs by online filtering, CRFs by Viterbi.
pub fn predict(file: &ModelFile, seq: &FeatureSequence) -> Result<Prediction> {
    let pipeline = file
        .pipeline()
        .ok_or_else(|| Error::InvalidArgument("model file carries no pipeline".into()))?;
    let expected = pipeline.feature_mode.feature_names();
    if seq.feature_names != expected {
        return Err(Error::Dimension(format!(
            "features `{}` do not match the model's `{}`",
            seq.feature_names.join(","),
            expected.join(",")
        )));
    }
    match file {
        ModelFile::Crf { model, .. } => Ok(Prediction::Behaviours(viterbi_decode(model, seq)?)),
        ModelFile::Hmm { model, .. } => {
            let disc: Discretizer = pipeline
                .discretizer
                .clone()
                .ok_or_else(|| Error::InvalidArgument("HMM pipeline has no discretizer".into()))?
                .into();
            let obs = disc.apply(seq)?.discretized.expect("discretizer fills observations");
            let states = hmm::filter_predict(model, &obs)?.states;
            match &pipeline.state_mapping {
                Some(map) => Ok(Prediction::Behaviours(hmm::apply_mapping(&states, map))),
                None if model.num_states() == pipeline.label_set.len()
                    && model.state_names == pipeline.label_set.codes() =>
                {
                    Ok(Prediction::Behaviours(pipeline.label_set.decode(&states)?))
                }
                None => Ok(Prediction::Latent(states)),
            }
        }
    }
}

impl FoldRecipe for Recipe {
    fn fit_predict(
        &self,
        train: &[&RawSequence],
        test: &[&RawSequence],
        label_set: &LabelSet,
    ) -> Result<Vec<Vec<Behaviour>>> {
        let train_feats = self.featurize(train, train)?;
        let trained = self.train(&train_feats, label_set)?;
        self.featurize(test, train)?
            .iter()
            .map(|s| match predict(&trained.file, s)? {
                Prediction::Behaviours(b) => Ok(b),
                Prediction::Latent(_) => Err(Error::InvalidArgument("model produced unnamed states".into())),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{simulate_course, Course, CourseScript, EmissionTable};

    fn runs(n: u64) -> Vec<RawSequence> {
        let table = EmissionTable::canonical();
        (0..n)
            .map(|p| {
                let script = CourseScript::for_participant(Course::Exp1, p, 0, 1.0, 9);
                simulate_course(&script, &table, &format!("p{p}")).unwrap()
            })
            .collect()
    }

    #[test]
    fn defaults() {
        let r = Recipe::default();
        assert_eq!((r.bins, r.tau, r.sigma2, r.restarts, r.cg_iters), (20, 4000.0, 1.0, 20, 100));
        let back: Recipe = serde_json::from_str("{\"family\":\"crf\"}").unwrap();
        assert_eq!(back.family, ModelFamily::Crf);
        assert_eq!(back.bins, 20);
        assert!(serde_json::from_str::<Recipe>("{\"bogus\":1}").is_err());
    }

    #[test]
    fn supervised_round_trip_predicts_behaviours() {
        let raws = runs(2);
        let refs: Vec<&RawSequence> = raws.iter().collect();
        let recipe = Recipe::default();
        let feats = recipe.featurize(&refs, &refs).unwrap();
        let trained = recipe.train(&feats, &LabelSet::experiment1()).unwrap();
        let reloaded = ModelFile::from_json(&trained.file.to_json().unwrap()).unwrap();
        let p = predict(&reloaded, &feats[0]).unwrap();
        assert!(matches!(p, Prediction::Behaviours(ref b) if b.len() == feats[0].len()));
        assert_eq!(predict(&trained.file, &feats[0]).unwrap(), p);
    }

    #[test]
    fn unlabeled_em_keeps_latent_states() {
        let raws = runs(1);
        let recipe = Recipe {
            family: ModelFamily::HmmEm,
            restarts: 2,
            em_max_iters: 5,
            num_states: Some(3),
            ..Recipe::default()
        };
        let mut feats = recipe.featurize(&[&raws[0]], &[]).unwrap();
        feats[0].labels = None;
        let trained = recipe.train(&feats, &LabelSet::experiment1()).unwrap();
        assert!(matches!(trained.diagnostics, Diagnostics::Em { .. }));
        assert!(matches!(predict(&trained.file, &feats[0]).unwrap(), Prediction::Latent(_)));
    }
}
