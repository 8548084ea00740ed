//! Activity recognition for instrumented rollating walkers.
//!
//! Raw eight-channel recordings are turned into per-tick feature vectors,
//! then labeled with one of thirteen behaviours by a hidden Markov model
//! (supervised counting, EM or collapsed Gibbs sampling) or by a
//! linear-chain conditional random field with threshold features.

pub mod crf;
pub mod error;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod io;
pub mod persist;
pub mod recipe;
pub mod simgen;
pub mod types;

pub use error::{Error, Result};
pub use types::{Behaviour, LabelSet, RawSequence, SensorFrame};
