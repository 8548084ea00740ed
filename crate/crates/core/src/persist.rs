//! Versioned JSON model files.
//!
//! Every real number is written as a decimal string holding the shortest
//! representation that parses back to the same `f64`, so a save/load cycle is
//! bit-exact. The top-level object looks like
//!
//! ```json
//! { "format_version": 1, "kind": "hmm", "model": { ... }, "pipeline": { ... } }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crf::CrfModel;
use crate::error::{Error, Result};
use crate::features::{Discretizer, FeatureMode};
use crate::hmm::HmmModel;
use crate::types::{Behaviour, LabelSet};

pub const FORMAT_VERSION: u32 = 1;

/// Serde adapters storing floats as decimal strings.
pub mod decimal {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn encode(x: f64) -> String {
        format!("{x:?}")
    }

    pub fn decode<E: serde::de::Error>(s: &str) -> Result<f64, E> {
        s.parse::<f64>()
            .map_err(|_| E::custom(format!("`{s}` is not a decimal number")))
    }

    pub mod scalar {
        use super::*;

        pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
            s.serialize_str(&encode(*x))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            let s = String::deserialize(d)?;
            decode(&s)
        }
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(x: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(x.iter().map(|v| encode(*v)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<String>::deserialize(d)?
                .iter()
                .map(|s| decode(s))
                .collect()
        }
    }

    pub mod mat {
        use super::*;

        pub fn serialize<S: Serializer>(x: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(
                x.iter()
                    .map(|row| row.iter().map(|v| encode(*v)).collect::<Vec<_>>()),
            )
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            Vec::<Vec<String>>::deserialize(d)?
                .iter()
                .map(|row| row.iter().map(|s| decode(s)).collect())
                .collect()
        }
    }

    pub mod cube {
        use super::*;

        pub fn serialize<S: Serializer>(x: &[Vec<Vec<f64>>], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(x.iter().map(|m| {
                m.iter()
                    .map(|row| row.iter().map(|v| encode(*v)).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            }))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<Vec<Vec<Vec<f64>>>, D::Error> {
            let raw = Vec::<Vec<Vec<String>>>::deserialize(d)?;
            raw.iter()
                .map(|m| {
                    m.iter()
                        .map(|row| row.iter().map(|s| decode(s)).collect())
                        .collect()
                })
                .collect::<Result<_, _>>()
                .map_err(|e: D::Error| D::Error::custom(e))
        }
    }
}

/// How features are built from raw recordings before the model sees them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub feature_mode: FeatureMode,
    #[serde(with = "decimal::scalar")]
    pub ticks_per_meter: f64,
    pub label_set: LabelSet,
    /// Present for HMMs: maps real features to bins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretizer: Option<DiscretizerFile>,
    /// Present for unsupervised HMMs: behaviour matched to each latent state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_mapping: Option<Vec<Behaviour>>,
}

/// [`Discretizer`] with decimal-string edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizerFile {
    pub bins: usize,
    #[serde(with = "decimal::mat")]
    pub edges: Vec<Vec<f64>>,
}

impl From<&Discretizer> for DiscretizerFile {
    fn from(d: &Discretizer) -> Self {
        DiscretizerFile {
            bins: d.bins,
            edges: d.edges.clone(),
        }
    }
}

impl From<DiscretizerFile> for Discretizer {
    fn from(d: DiscretizerFile) -> Self {
        Discretizer {
            bins: d.bins,
            edges: d.edges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Hmm {
        model: HmmModel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pipeline: Option<Pipeline>,
    },
    Crf {
        model: CrfModel,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pipeline: Option<Pipeline>,
    },
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    #[serde(flatten)]
    body: serde_json::Value,
}

impl ModelFile {
    pub fn validate(&self) -> Result<()> {
        let pipeline = match self {
            ModelFile::Hmm { model, pipeline } => {
                model.validate()?;
                pipeline
            }
            ModelFile::Crf { model, pipeline } => {
                model.validate()?;
                pipeline
            }
        };
        if let Some(p) = pipeline {
            if let Some(d) = &p.discretizer {
                Discretizer::from(d.clone()).validate()?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let env = Envelope {
            format_version: FORMAT_VERSION,
            body: serde_json::to_value(self)?,
        };
        Ok(serde_json::to_string_pretty(&env)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text)?;
        if env.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: env.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(env.body)?;
        file.validate()?;
        Ok(file)
    }

    pub fn pipeline(&self) -> Option<&Pipeline> {
        match self {
            ModelFile::Hmm { pipeline, .. } | ModelFile::Crf { pipeline, .. } => pipeline.as_ref(),
        }
    }
}

pub fn save_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = file.to_json()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_hmm_round_trip() {
        let file = ModelFile::Hmm {
            model: HmmModel::uniform(2, 1, 3),
            pipeline: None,
        };
        let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn corrupted_row_rejected() {
        let file = ModelFile::Hmm {
            model: HmmModel::uniform(2, 1, 2),
            pipeline: None,
        };
        let text = file.to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["model"]["theta"][0] = serde_json::json!(["0.25", "0.25"]);
        let err = ModelFile::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)), "{err}");
    }

    #[test]
    fn version_checked() {
        let file = ModelFile::Hmm {
            model: HmmModel::uniform(2, 1, 2),
            pipeline: None,
        };
        let text = file.to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(matches!(
            ModelFile::from_json(&text),
            Err(Error::VersionMismatch { found: 7, .. })
        ));
    }

    proptest! {
        #[test]
        fn random_hmm_round_trips_bit_exactly(
            raw in proptest::collection::vec(0.001f64..1.0, 3 * 3 + 3 + 3 * 2 * 4),
        ) {
            let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
            // renormalizing may leave rows off by an ulp; that is within tolerance
            let pi = norm(&raw[0..3]);
            let theta = (0..3).map(|i| norm(&raw[3 + 3 * i..6 + 3 * i])).collect();
            let phi = (0..3)
                .map(|b| (0..2).map(|k| norm(&raw[12 + 8 * b + 4 * k..16 + 8 * b + 4 * k])).collect())
                .collect();
            let model = HmmModel::new(crate::hmm::latent_names(3), pi, theta, phi).unwrap();
            let file = ModelFile::Hmm { model, pipeline: None };
            let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, file);
        }
    }
}
