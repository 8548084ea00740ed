use super::{CrfModel, PreparedSequence};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::types::Behaviour;

/// Most probable label indices. Ties resolve to the lowest label index, both
/// in the backpointers and in the final argmax.
pub fn viterbi_states(weights: &[f64], seq: &PreparedSequence) -> Vec<usize> {
    let nu = *weights.last().expect("weights end with nu");
    let psi = seq.state_scores(weights);
    let tlen = psi.len();
    if tlen == 0 {
        return Vec::new();
    }
    let m = psi[0].len();
    let mut delta = psi[0].clone();
    let mut back = vec![vec![0usize; m]; tlen];
    for t in 1..tlen {
        let mut next = vec![0.0; m];
        for b in 0..m {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (a, &d) in delta.iter().enumerate() {
                let s = d + if a == b { nu } else { 0.0 };
                if s > best {
                    best = s;
                    arg = a;
                }
            }
            next[b] = best + psi[t][b];
            back[t][b] = arg;
        }
        delta = next;
    }
    let mut cur = crate::hmm::argmax(&delta);
    let mut path = vec![0; tlen];
    for t in (0..tlen).rev() {
        path[t] = cur;
        cur = back[t][cur];
    }
    path
}

/// Decodes a feature sequence into behaviours.
pub fn viterbi_decode(model: &CrfModel, seq: &FeatureSequence) -> Result<Vec<Behaviour>> {
    if seq.feature_names.len() != model.feature_names.len() {
        return Err(Error::Dimension(format!(
            "sequence has {} features, model expects {}",
            seq.feature_names.len(),
            model.feature_names.len()
        )));
    }
    let prepared = PreparedSequence::new(&seq.values, None, &model.bank)?;
    let states = viterbi_states(&model.weights(), &prepared);
    model.label_set.decode(&states)
}
