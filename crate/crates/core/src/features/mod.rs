//! Feature extraction from raw walker recordings.
//!
//! Two feature sets are supported: normalized loads ([`FeatureMode::Nl`]) and
//! center of pressure ([`FeatureMode::Cop`]). Both carry the raw accelerometer
//! axes and the walker speed derived from the wheel encoder.

mod discretize;

pub use discretize::{Discretizer, DEFAULT_BINS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{channel, Behaviour, RawSequence, SAMPLE_HZ};

/// Per-tick real-valued features, optionally discretized and labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub participant_id: String,
    pub feature_names: Vec<String>,
    /// `T x n`, one row per tick.
    pub values: Vec<Vec<f64>>,
    /// `T x n` bin indices in `1..=D`.
    pub discretized: Option<Vec<Vec<usize>>>,
    pub labels: Option<Vec<Behaviour>>,
}

impl FeatureSequence {
    pub fn new(
        participant_id: impl Into<String>,
        feature_names: Vec<String>,
        values: Vec<Vec<f64>>,
        labels: Option<Vec<Behaviour>>,
    ) -> Result<Self> {
        let n = feature_names.len();
        if let Some((t, row)) = values.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Dimension(format!(
                "row {t} has {} values for {n} features",
                row.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != values.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} labels for {} ticks",
                    l.len(),
                    values.len()
                )));
            }
        }
        Ok(FeatureSequence {
            participant_id: participant_id.into(),
            feature_names,
            values,
            discretized: None,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |r| r[k])
    }
}

/// Which load representation to derive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Four min-max normalized load cells.
    Nl,
    /// Frontal and sagittal center of pressure plus total load.
    Cop,
}

impl FeatureMode {
    pub fn feature_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            FeatureMode::Nl => &[
                "accel_x", "accel_y", "accel_z", "speed", "nl_fl", "nl_fr", "nl_rl", "nl_rr",
            ],
            FeatureMode::Cop => &[
                "accel_x",
                "accel_y",
                "accel_z",
                "speed",
                "cop_frontal",
                "cop_sagittal",
                "total_load",
            ],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

/// Observed min/max of each load cell, in `fl, fr, rl, rr` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadRange {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

impl LoadRange {
    /// Per-cell extremes over all frames of the given sequences.
    pub fn observe<'a>(seqs: impl IntoIterator<Item = &'a RawSequence>) -> Option<Self> {
        let mut min = [f64::INFINITY; 4];
        let mut max = [f64::NEG_INFINITY; 4];
        let mut any = false;
        for s in seqs {
            for f in &s.frames {
                any = true;
                for (i, &c) in channel::LOADS.iter().enumerate() {
                    let v = f64::from(f.channels[c]);
                    min[i] = min[i].min(v);
                    max[i] = max[i].max(v);
                }
            }
        }
        any.then_some(LoadRange { min, max })
    }
}

/// Calibration applied while building features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Encoder counts per meter of travel.
    pub ticks_per_meter: f64,
    /// Load range used by the normalized-load features. When absent the
    /// sequence's own range is used.
    pub load_range: Option<LoadRange>,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            ticks_per_meter: 1.0,
            load_range: None,
        }
    }
}

/// Min-max normalization clamped to `[0, 1]`.
pub fn normalize_load(value: f64, min: f64, max: f64) -> Result<f64> {
    if max <= min {
        return Err(Error::DegenerateRange { min, max });
    }
    Ok(((value - min) / (max - min)).clamp(0.0, 1.0))
}

/// Center of pressure from the four wheel loads.
///
/// Returns `(frontal, sagittal, total)` where frontal is left minus right and
/// sagittal is rear minus front, both divided by the total load. Zero total
/// load yields `(0, 0, 0)`.
pub fn compute_cop(fl: f64, fr: f64, rl: f64, rr: f64) -> (f64, f64, f64) {
    let total = fl + fr + rl + rr;
    if total <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let frontal = ((fl + rl) - (fr + rr)) / total;
    let sagittal = ((rl + rr) - (fl + fr)) / total;
    (frontal, sagittal, total)
}

/// Signed walker speed in m/s from successive encoder counts.
///
/// Differences are taken modulo 2^16 so a counter rollover reads as a small
/// step rather than a jump of ±65535.
pub fn compute_speed(encoder: &[u16], ticks_per_meter: f64) -> Result<Vec<f64>> {
    if !(ticks_per_meter > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ticks_per_meter must be positive, got {ticks_per_meter}"
        )));
    }
    let mut out = Vec::with_capacity(encoder.len());
    if encoder.is_empty() {
        return Ok(out);
    }
    out.push(0.0);
    for w in encoder.windows(2) {
        let step = w[1].wrapping_sub(w[0]) as i16;
        out.push(f64::from(step) / ticks_per_meter * SAMPLE_HZ);
    }
    Ok(out)
}

/// Derives the chosen feature set from a canonical 8-channel recording.
pub fn build_features(
    raw: &RawSequence,
    mode: FeatureMode,
    calib: &Calibration,
) -> Result<FeatureSequence> {
    if raw.num_channels() != crate::types::CANONICAL_CHANNELS.len() && !raw.is_empty() {
        return Err(Error::Dimension(format!(
            "expected the canonical 8-channel layout, got {} channels",
            raw.num_channels()
        )));
    }
    let speed = compute_speed(&raw.channel(channel::ENCODER), calib.ticks_per_meter)?;
    let range = match (mode, calib.load_range) {
        (FeatureMode::Nl, Some(r)) => Some(r),
        (FeatureMode::Nl, None) => LoadRange::observe([raw]),
        (FeatureMode::Cop, _) => None,
    };

    let mut values = Vec::with_capacity(raw.len());
    for (f, &v) in raw.frames.iter().zip(&speed) {
        let c = &f.channels;
        let mut row = vec![
            f64::from(c[channel::ACCEL_X]),
            f64::from(c[channel::ACCEL_Y]),
            f64::from(c[channel::ACCEL_Z]),
            v,
        ];
        let loads = channel::LOADS.map(|i| f64::from(c[i]));
        match mode {
            FeatureMode::Nl => {
                let r = range.expect("load range is set for NL mode");
                for i in 0..4 {
                    row.push(normalize_load(loads[i], r.min[i], r.max[i])?);
                }
            }
            FeatureMode::Cop => {
                let (fr, sg, tot) = compute_cop(loads[0], loads[1], loads[2], loads[3]);
                row.extend([fr, sg, tot]);
            }
        }
        values.push(row);
    }
    FeatureSequence::new(
        raw.participant_id.clone(),
        mode.feature_names(),
        values,
        raw.labels.clone(),
    )
}
