//! Domain types: behaviour labels, label sets and raw sensor sequences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest value a raw 16-bit channel can report.
pub const MAX_RAW: u16 = u16::MAX;

/// Sampling rate of the walker's sensor board.
pub const SAMPLE_HZ: f64 = 50.0;

/// Activity of the walker user at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Behaviour {
    /// Not touching the walker.
    #[serde(rename = "NTW")]
    Ntw,
    /// Stop / standing.
    #[serde(rename = "ST")]
    St,
    /// Walking forward.
    #[serde(rename = "WF")]
    Wf,
    /// Turn left.
    #[serde(rename = "TL")]
    Tl,
    /// Turn right.
    #[serde(rename = "TR")]
    Tr,
    /// Walking backwards.
    #[serde(rename = "WB")]
    Wb,
    /// Transfer (sit to stand or stand to sit).
    #[serde(rename = "TRS")]
    Trs,
    /// Going up a ramp.
    #[serde(rename = "GUR")]
    Gur,
    /// Going down a ramp.
    #[serde(rename = "GDR")]
    Gdr,
    /// Sitting on the walker.
    #[serde(rename = "SW")]
    Sw,
    /// Reaching task.
    #[serde(rename = "RT")]
    Rt,
    /// Going up a curb.
    #[serde(rename = "GUC")]
    Guc,
    /// Going down a curb.
    #[serde(rename = "GDC")]
    Gdc,
}

impl Behaviour {
    pub const ALL: [Behaviour; 13] = [
        Behaviour::Ntw,
        Behaviour::St,
        Behaviour::Wf,
        Behaviour::Tl,
        Behaviour::Tr,
        Behaviour::Wb,
        Behaviour::Trs,
        Behaviour::Gur,
        Behaviour::Gdr,
        Behaviour::Sw,
        Behaviour::Rt,
        Behaviour::Guc,
        Behaviour::Gdc,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Behaviour::Ntw => "NTW",
            Behaviour::St => "ST",
            Behaviour::Wf => "WF",
            Behaviour::Tl => "TL",
            Behaviour::Tr => "TR",
            Behaviour::Wb => "WB",
            Behaviour::Trs => "TRS",
            Behaviour::Gur => "GUR",
            Behaviour::Gdr => "GDR",
            Behaviour::Sw => "SW",
            Behaviour::Rt => "RT",
            Behaviour::Guc => "GUC",
            Behaviour::Gdc => "GDC",
        }
    }
}

impl fmt::Display for Behaviour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Behaviour {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Behaviour::ALL
            .iter()
            .copied()
            .find(|b| b.code() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Ordered set of behaviours used by one experiment.
///
/// The order matters: it fixes state indices and breaks ties in decoding and
/// state matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Behaviour>", into = "Vec<Behaviour>")]
pub struct LabelSet {
    members: Vec<Behaviour>,
}

impl LabelSet {
    pub fn new(members: Vec<Behaviour>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a label set needs at least 2 behaviours, got {}",
                members.len()
            )));
        }
        for (i, b) in members.iter().enumerate() {
            if members[..i].contains(b) {
                return Err(Error::InvalidArgument(format!("duplicate behaviour {b}")));
            }
        }
        Ok(LabelSet { members })
    }

    /// The seven behaviours of the young-subject course.
    pub fn experiment1() -> Self {
        use Behaviour::*;
        LabelSet {
            members: vec![Ntw, St, Wf, Tl, Tr, Wb, Trs],
        }
    }

    /// The twelve behaviours reported for the older-adult course.
    pub fn experiment2() -> Self {
        use Behaviour::*;
        LabelSet {
            members: vec![Ntw, St, Wf, Tl, Tr, Wb, Rt, Sw, Gur, Gdr, Guc, Gdc],
        }
    }

    /// All thirteen behaviours.
    pub fn full() -> Self {
        LabelSet {
            members: Behaviour::ALL.to_vec(),
        }
    }

    pub fn members(&self) -> &[Behaviour] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn index_of(&self, b: Behaviour) -> Option<usize> {
        self.members.iter().position(|&x| x == b)
    }

    pub fn get(&self, i: usize) -> Option<Behaviour> {
        self.members.get(i).copied()
    }

    pub fn contains(&self, b: Behaviour) -> bool {
        self.index_of(b).is_some()
    }

    /// Maps a label sequence to state indices, failing on non-members.
    pub fn encode(&self, labels: &[Behaviour]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|&b| {
                self.index_of(b)
                    .ok_or_else(|| Error::UnknownLabel(b.code().to_string()))
            })
            .collect()
    }

    pub fn decode(&self, states: &[usize]) -> Result<Vec<Behaviour>> {
        states
            .iter()
            .map(|&i| {
                self.get(i)
                    .ok_or_else(|| Error::InvalidArgument(format!("state index {i} out of range")))
            })
            .collect()
    }

    pub fn codes(&self) -> Vec<String> {
        self.members.iter().map(|b| b.code().to_string()).collect()
    }
}

impl TryFrom<Vec<Behaviour>> for LabelSet {
    type Error = Error;

    fn try_from(members: Vec<Behaviour>) -> Result<Self> {
        LabelSet::new(members)
    }
}

impl From<LabelSet> for Vec<Behaviour> {
    fn from(set: LabelSet) -> Self {
        set.members
    }
}

impl FromStr for LabelSet {
    type Err = Error;

    /// Parses `exp1`, `exp2`, `full` or a comma-separated list of codes.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exp1" => Ok(LabelSet::experiment1()),
            "exp2" => Ok(LabelSet::experiment2()),
            "full" | "all" => Ok(LabelSet::full()),
            _ => LabelSet::new(
                s.split(',')
                    .map(|c| c.trim().parse())
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }
}

/// Canonical raw channel order.
pub const CANONICAL_CHANNELS: [&str; 8] = [
    "accel_x", "accel_y", "accel_z", "load_fl", "load_fr", "load_rl", "load_rr", "encoder",
];

pub mod channel {
    pub const ACCEL_X: usize = 0;
    pub const ACCEL_Y: usize = 1;
    pub const ACCEL_Z: usize = 2;
    pub const LOAD_FL: usize = 3;
    pub const LOAD_FR: usize = 4;
    pub const LOAD_RL: usize = 5;
    pub const LOAD_RR: usize = 6;
    pub const ENCODER: usize = 7;
    pub const LOADS: [usize; 4] = [LOAD_FL, LOAD_FR, LOAD_RL, LOAD_RR];
}

/// Names of the raw channels in a CSV file, in column order after `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub channels: Vec<String>,
}

impl ChannelLayout {
    pub fn canonical() -> Self {
        ChannelLayout {
            channels: CANONICAL_CHANNELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn is_canonical(&self) -> bool {
        *self == ChannelLayout::canonical()
    }
}

impl Default for ChannelLayout {
    fn default() -> Self {
        ChannelLayout::canonical()
    }
}

/// One 20 ms sample of every raw channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub tick: u64,
    pub channels: Vec<u16>,
}

/// A recording of one participant's course run.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSequence {
    pub participant_id: String,
    pub frames: Vec<SensorFrame>,
    pub labels: Option<Vec<Behaviour>>,
}

impl RawSequence {
    pub fn new(
        participant_id: impl Into<String>,
        frames: Vec<SensorFrame>,
        labels: Option<Vec<Behaviour>>,
    ) -> Result<Self> {
        let seq = RawSequence {
            participant_id: participant_id.into(),
            frames,
            labels,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(first) = self.frames.first() {
            let n = first.channels.len();
            for (i, w) in self.frames.windows(2).enumerate() {
                if w[1].tick != w[0].tick + 1 {
                    return Err(Error::Invariant(format!(
                        "ticks must increase by 1: frame {} has tick {} after {}",
                        i + 1,
                        w[1].tick,
                        w[0].tick
                    )));
                }
            }
            if let Some(f) = self.frames.iter().find(|f| f.channels.len() != n) {
                return Err(Error::Dimension(format!(
                    "tick {} has {} channels, expected {n}",
                    f.tick,
                    f.channels.len()
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.frames.len() || labels.is_empty() {
                return Err(Error::LengthMismatch(format!(
                    "{} labels for {} frames",
                    labels.len(),
                    self.frames.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.frames.first().map_or(0, |f| f.channels.len())
    }

    /// Values of one channel over time.
    pub fn channel(&self, idx: usize) -> Vec<u16> {
        self.frames.iter().map(|f| f.channels[idx]).collect()
    }
}

/// Sequences sharing one layout and one label set.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    pub label_set: LabelSet,
    pub sequences: Vec<S>,
}

impl Dataset<RawSequence> {
    pub fn new(label_set: LabelSet, sequences: Vec<RawSequence>) -> Result<Self> {
        let n = sequences.first().map(RawSequence::num_channels);
        for s in &sequences {
            if Some(s.num_channels()) != n {
                return Err(Error::Dimension(format!(
                    "sequence of participant {} has {} channels, expected {}",
                    s.participant_id,
                    s.num_channels(),
                    n.unwrap_or(0)
                )));
            }
            if let Some(labels) = &s.labels {
                if let Some(b) = labels.iter().find(|b| !label_set.contains(**b)) {
                    return Err(Error::UnknownLabel(b.code().to_string()));
                }
            }
        }
        Ok(Dataset {
            label_set,
            sequences,
        })
    }

    /// Participant ids in order of first appearance.
    pub fn participants(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.sequences {
            if !out.contains(&s.participant_id) {
                out.push(s.participant_id.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn behaviour_codes_round_trip() {
        assert_eq!(Behaviour::ALL.len(), 13);
        for b in Behaviour::ALL {
            assert_eq!(b.code().parse::<Behaviour>().unwrap(), b);
        }
        assert!(matches!("XX".parse::<Behaviour>(), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn label_set_rules() {
        assert_eq!(LabelSet::experiment1().len(), 7);
        assert_eq!(LabelSet::experiment2().len(), 12);
        assert!(LabelSet::new(vec![Behaviour::Wf]).is_err());
        assert!(LabelSet::new(vec![Behaviour::Wf, Behaviour::Wf]).is_err());
        let s: LabelSet = "WF,ST".parse().unwrap();
        assert_eq!(s.index_of(Behaviour::St), Some(1));
        assert_eq!("exp2".parse::<LabelSet>().unwrap(), LabelSet::experiment2());
    }

    #[test]
    fn raw_sequence_requires_consecutive_ticks() {
        let f = |t| SensorFrame {
            tick: t,
            channels: vec![0; 8],
        };
        assert!(RawSequence::new("p", vec![f(0), f(1)], None).is_ok());
        assert!(RawSequence::new("p", vec![f(0), f(2)], None).is_err());
        assert!(RawSequence::new("p", vec![f(0)], Some(vec![])).is_err());
    }
}
