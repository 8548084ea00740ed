//! Synthetic data: sampling from an HMM, and a scripted walker-course
//! simulator standing in for real recordings.
//!
//! The simulator draws every channel as baseline + behaviour offset + an
//! optional sinusoidal fluctuation + Gaussian noise, clamped to 16 bits.
//! Offsets live in an editable JSON table (`data/emission_table.json` is the
//! canonical one). The shapes follow the qualitative sensor expectations of
//! each behaviour: no load and no motion when not touching the walker, load
//! fluctuations while standing, encoder counting up or down when walking
//! forward or backward, very high load while sitting on the walker, a heavier
//! side when turning or resting, sustained tilt on ramps and vertical jolts on
//! curbs.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::HmmModel;
use crate::types::{channel, Behaviour, LabelSet, RawSequence, SensorFrame};

const CANONICAL_TABLE: &str = include_str!("../data/emission_table.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluctuationTarget {
    /// All four load cells.
    Load,
    AccelZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fluctuation {
    pub target: FluctuationTarget,
    pub amplitude: f64,
    /// In ticks.
    pub period: f64,
}

/// Per-behaviour offsets from the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviourEmission {
    pub accel: [f64; 3],
    /// `fl, fr, rl, rr`.
    pub load: [f64; 4],
    /// Encoder counts per tick.
    pub velocity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluctuation: Option<Fluctuation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub accel: [f64; 3],
    pub load: [f64; 4],
    pub encoder_start: u16,
}

/// Noise standard deviations at `noise_level = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub accel: f64,
    pub load: f64,
    /// Applied only while the behaviour moves the walker.
    pub velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionTable {
    pub baseline: Baseline,
    pub noise: NoiseScale,
    pub behaviours: BTreeMap<Behaviour, BehaviourEmission>,
}

impl EmissionTable {
    pub fn canonical() -> Self {
        serde_json::from_str(CANONICAL_TABLE).expect("bundled emission table parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: EmissionTable = serde_json::from_str(text)?;
        Ok(t)
    }

    fn get(&self, b: Behaviour) -> Result<&BehaviourEmission> {
        self.behaviours
            .get(&b)
            .ok_or_else(|| Error::InvalidArgument(format!("emission table has no entry for {b}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub behaviour: Behaviour,
    /// In ticks.
    pub duration: usize,
}

/// A course as an ordered list of behaviour segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseScript {
    pub segments: Vec<Segment>,
    pub noise_level: f64,
    pub rng_seed: u64,
    /// Multiplies every load offset; stands in for body weight.
    #[serde(default = "one")]
    pub load_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Course {
    /// Young participants on a flat course with a seat transfer.
    Exp1,
    /// Older walker users; adds ramps, curbs, resting and sitting.
    Exp2,
}

impl Course {
    pub fn label_set(self) -> LabelSet {
        match self {
            Course::Exp1 => LabelSet::experiment1(),
            Course::Exp2 => LabelSet::experiment2(),
        }
    }

    /// Nominal segment order and lengths.
    pub fn nominal_segments(self) -> Vec<Segment> {
        use Behaviour::*;
        let plan: &[(Behaviour, usize)] = match self {
            Course::Exp1 => &[
                (Ntw, 150),
                (St, 200),
                (Wf, 400),
                (Tl, 150),
                (Wf, 300),
                (Tr, 150),
                (Wf, 300),
                (Wb, 200),
                (St, 150),
                (Trs, 250),
                (St, 150),
                (Ntw, 150),
            ],
            Course::Exp2 => &[
                (Ntw, 150),
                (St, 200),
                (Wf, 300),
                (Gur, 250),
                (Wf, 200),
                (Tl, 150),
                (Wf, 200),
                (Gdr, 250),
                (Wf, 150),
                (Guc, 100),
                (Wf, 200),
                (Gdc, 100),
                (Tr, 150),
                (Wb, 200),
                (Rt, 200),
                (Sw, 250),
                (St, 150),
                (Ntw, 150),
            ],
        };
        plan.iter()
            .map(|&(behaviour, duration)| Segment { behaviour, duration })
            .collect()
    }
}

impl CourseScript {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidArgument("course script has no segments".into()));
        }
        if let Some(s) = self.segments.iter().find(|s| s.duration == 0) {
            return Err(Error::InvalidArgument(format!("segment {} has zero duration", s.behaviour)));
        }
        if !(self.noise_level >= 0.0) || !(self.load_scale > 0.0) {
            return Err(Error::InvalidArgument("noise_level must be >= 0 and load_scale > 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Run `run` of participant `participant` on `course`: segment lengths
    /// jittered by up to 20% and a participant-specific load scale in
    /// `[0.85, 1.15]`.
    pub fn for_participant(course: Course, participant: u64, run: u64, noise_level: f64, seed: u64) -> Self {
        let mut prng = ChaCha8Rng::seed_from_u64(seed);
        prng.set_stream(participant);
        let load_scale = prng.random_range(0.85..=1.15);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        rng.set_stream((participant << 16) | run);
        let segments = course
            .nominal_segments()
            .into_iter()
            .map(|s| {
                let f: f64 = rng.random_range(0.8..=1.2);
                Segment {
                    behaviour: s.behaviour,
                    duration: ((s.duration as f64 * f).round() as usize).max(1),
                }
            })
            .collect();
        CourseScript {
            segments,
            noise_level,
            rng_seed: rng.random(),
            load_scale,
        }
    }
}

/// Renders a labeled 8-channel recording at 50 Hz.
pub fn simulate_course(
    script: &CourseScript,
    table: &EmissionTable,
    participant_id: &str,
) -> Result<RawSequence> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(script.rng_seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let gauss = |sd: f64, rng: &mut ChaCha8Rng| {
        if sd > 0.0 {
            sd * std_normal.sample(rng)
        } else {
            0.0
        }
    };
    let noise = |sd: f64| sd * script.noise_level;
    let clamp = |x: f64| x.round().clamp(0.0, f64::from(u16::MAX)) as u16;

    let mut frames = Vec::with_capacity(script.len());
    let mut labels = Vec::with_capacity(script.len());
    let mut position = 0.0f64;
    let base = &table.baseline;
    for seg in &script.segments {
        let e = table.get(seg.behaviour)?;
        for i in 0..seg.duration {
            let wave = e.fluctuation.map(|f| {
                let v = f.amplitude * (2.0 * std::f64::consts::PI * i as f64 / f.period).sin();
                (f.target, v)
            });
            let mut ch = [0u16; 8];
            for a in 0..3 {
                let mut v = base.accel[a] + e.accel[a] + gauss(noise(table.noise.accel), &mut rng);
                if a == 2 {
                    if let Some((FluctuationTarget::AccelZ, w)) = wave {
                        v += w;
                    }
                }
                ch[channel::ACCEL_X + a] = clamp(v);
            }
            for (j, &c) in channel::LOADS.iter().enumerate() {
                let mut v = base.load[j] + script.load_scale * e.load[j] + gauss(noise(table.noise.load), &mut rng);
                if let Some((FluctuationTarget::Load, w)) = wave {
                    v += script.load_scale * w;
                }
                ch[c] = clamp(v);
            }
            if e.velocity != 0.0 {
                position += e.velocity + gauss(noise(table.noise.velocity), &mut rng);
            }
            let counts = position.round() as i64 + i64::from(base.encoder_start);
            ch[channel::ENCODER] = counts.rem_euclid(1 << 16) as u16;
            frames.push(SensorFrame {
                tick: frames.len() as u64,
                channels: ch.to_vec(),
            });
            labels.push(seg.behaviour);
        }
    }
    RawSequence::new(participant_id, frames, Some(labels))
}

/// Draws a state path and 1-based observations from `model`.
pub fn sample_hmm(model: &HmmModel, len: usize, seed: u64) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    model.validate()?;
    let categorical = |p: &[f64]| -> Result<WeightedIndex<f64>> {
        WeightedIndex::new(p).map_err(|e| Error::Invariant(format!("unusable distribution: {e}")))
    };
    let pi = categorical(&model.pi)?;
    let theta: Vec<WeightedIndex<f64>> = model.theta.iter().map(|r| categorical(r)).collect::<Result<_>>()?;
    let phi = model
        .phi
        .iter()
        .map(|per| per.iter().map(|r| categorical(r)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states: Vec<usize> = Vec::with_capacity(len);
    let mut obs = Vec::with_capacity(len);
    for t in 0..len {
        let b: usize = if t == 0 {
            pi.sample(&mut rng)
        } else {
            theta[states[t - 1]].sample(&mut rng)
        };
        states.push(b);
        obs.push(phi[b].iter().map(|d| d.sample(&mut rng) + 1).collect());
    }
    Ok((states, obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::latent_names;

    fn seg(behaviour: Behaviour, duration: usize) -> Segment {
        Segment { behaviour, duration }
    }

    fn script(segments: Vec<Segment>, noise_level: f64) -> CourseScript {
        CourseScript {
            segments,
            noise_level,
            rng_seed: 11,
            load_scale: 1.0,
        }
    }

    fn mean_total_load(raw: &RawSequence, from: usize, to: usize) -> f64 {
        raw.frames[from..to]
            .iter()
            .map(|f| channel::LOADS.iter().map(|&c| f64::from(f.channels[c])).sum::<f64>())
            .sum::<f64>()
            / (to - from) as f64
    }

    #[test]
    fn canonical_table_covers_all_behaviours() {
        let t = EmissionTable::canonical();
        for b in Behaviour::ALL {
            assert!(t.behaviours.contains_key(&b), "{b}");
        }
    }

    #[test]
    fn not_touching_is_idle() {
        let t = EmissionTable::canonical();
        let raw = simulate_course(&script(vec![seg(Behaviour::Ntw, 300)], 1.0), &t, "p").unwrap();
        let enc = raw.channel(channel::ENCODER);
        assert!(enc.iter().all(|&e| e == enc[0]));
        for &c in &channel::LOADS {
            let mean = raw.channel(c).iter().map(|&v| f64::from(v)).sum::<f64>() / 300.0;
            assert!((mean - 500.0).abs() < 60.0, "{mean}");
        }
    }

    #[test]
    fn sitting_outweighs_walking() {
        let t = EmissionTable::canonical();
        let raw = simulate_course(
            &script(vec![seg(Behaviour::Wf, 200), seg(Behaviour::Sw, 200)], 1.0),
            &t,
            "p",
        )
        .unwrap();
        assert!(mean_total_load(&raw, 200, 400) > mean_total_load(&raw, 0, 200));
    }

    #[test]
    fn walking_backward_counts_down() {
        let t = EmissionTable::canonical();
        let raw = simulate_course(&script(vec![seg(Behaviour::Wb, 100)], 0.0), &t, "p").unwrap();
        let enc = raw.channel(channel::ENCODER);
        assert!(enc.windows(2).all(|w| (w[1].wrapping_sub(w[0]) as i16) < 0));
    }

    #[test]
    fn noiseless_is_piecewise_deterministic() {
        let t = EmissionTable::canonical();
        let raw = simulate_course(&script(vec![seg(Behaviour::Rt, 30), seg(Behaviour::Wf, 30)], 0.0), &t, "p").unwrap();
        assert!(raw.frames[..30].windows(2).all(|w| w[0].channels[..7] == w[1].channels[..7]));
        assert!(raw.frames[31..].windows(2).all(|w| w[0].channels[..7] == w[1].channels[..7]));
        assert_ne!(raw.frames[0].channels, raw.frames[59].channels);
    }

    #[test]
    fn same_seed_same_output() {
        let t = EmissionTable::canonical();
        let s = CourseScript::for_participant(Course::Exp2, 3, 0, 1.0, 42);
        let a = simulate_course(&s, &t, "p3").unwrap();
        let b = simulate_course(&s, &t, "p3").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels.as_ref().unwrap().len(), s.len());
    }

    #[test]
    fn script_json_round_trip() {
        let s = CourseScript::for_participant(Course::Exp1, 0, 1, 0.5, 7);
        let text = serde_json::to_string(&s).unwrap();
        let back: CourseScript = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<CourseScript>(
            r#"{"segments":[{"behaviour":"WF","duration":3}],"noise_level":1.0,"rng_seed":1}"#
        )
        .is_ok());
    }

    #[test]
    fn one_hot_model_is_deterministic() {
        let model = HmmModel::new(
            latent_names(2),
            vec![1.0, 0.0],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
        )
        .unwrap();
        let (z, s) = sample_hmm(&model, 4, 1).unwrap();
        assert_eq!(z, vec![0, 1, 0, 1]);
        assert_eq!(s, vec![vec![2], vec![1], vec![2], vec![1]]);
    }

    #[test]
    fn transition_frequencies_converge() {
        let theta = vec![vec![0.9, 0.1], vec![0.3, 0.7]];
        let model = HmmModel::new(
            latent_names(2),
            vec![0.5, 0.5],
            theta.clone(),
            vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
        )
        .unwrap();
        let (z, _) = sample_hmm(&model, 100_000, 5).unwrap();
        let mut counts = [[0.0f64; 2]; 2];
        for w in z.windows(2) {
            counts[w[0]][w[1]] += 1.0;
        }
        for a in 0..2 {
            let row: f64 = counts[a].iter().sum();
            for b in 0..2 {
                assert!((counts[a][b] / row - theta[a][b]).abs() < 0.01);
            }
        }
    }
}
