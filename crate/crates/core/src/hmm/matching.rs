use crate::error::{Error, Result};
use crate::types::{Behaviour, LabelSet};

/// Associates each latent state with the behaviour it co-occurs with most.
///
/// Ties go to the behaviour listed first in `label_set`. A latent state that is
/// never predicted maps to the most frequent reference behaviour overall.
pub fn match_states(
    latent: &[Vec<usize>],
    reference: &[Vec<Behaviour>],
    num_latent: usize,
    label_set: &LabelSet,
) -> Result<Vec<Behaviour>> {
    if latent.len() != reference.len() {
        return Err(Error::LengthMismatch(format!(
            "{} latent sequences for {} reference sequences",
            latent.len(),
            reference.len()
        )));
    }
    let m = label_set.len();
    let mut counts = vec![vec![0usize; m]; num_latent];
    let mut totals = vec![0usize; m];
    for (z, r) in latent.iter().zip(reference) {
        if z.len() != r.len() {
            return Err(Error::LengthMismatch(format!(
                "{} latent states for {} reference labels",
                z.len(),
                r.len()
            )));
        }
        for (&s, &b) in z.iter().zip(r) {
            let bi = label_set
                .index_of(b)
                .ok_or_else(|| Error::UnknownLabel(b.code().to_string()))?;
            if s >= num_latent {
                return Err(Error::InvalidArgument(format!("latent state {s} out of range")));
            }
            counts[s][bi] += 1;
            totals[bi] += 1;
        }
    }
    let first_max = |row: &[usize]| {
        let mut best = 0;
        for (i, &c) in row.iter().enumerate() {
            if c > row[best] {
                best = i;
            }
        }
        best
    };
    let fallback = first_max(&totals);
    Ok(counts
        .iter()
        .map(|row| {
            let idx = if row.iter().all(|&c| c == 0) {
                fallback
            } else {
                first_max(row)
            };
            label_set.members()[idx]
        })
        .collect())
}

/// Replaces latent indices by their matched behaviours.
pub fn apply_mapping(latent: &[usize], mapping: &[Behaviour]) -> Vec<Behaviour> {
    latent.iter().map(|&s| mapping[s]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Behaviour::*;

    #[test]
    fn majority_vote() {
        let set = LabelSet::experiment1();
        let map = match_states(&[vec![0, 0, 1]], &[vec![Wf, Wf, St]], 2, &set).unwrap();
        assert_eq!(map, vec![Wf, St]);
    }

    #[test]
    fn ties_follow_label_order() {
        let set = LabelSet::experiment1(); // ST before WF
        let map = match_states(&[vec![0, 0]], &[vec![Wf, St]], 1, &set).unwrap();
        assert_eq!(map, vec![St]);
    }

    #[test]
    fn unused_state_falls_back_to_most_frequent() {
        let set = LabelSet::experiment1();
        let map = match_states(&[vec![0, 0, 0]], &[vec![Tl, Wf, Wf]], 3, &set).unwrap();
        assert_eq!(map, vec![Wf, Wf, Wf]);
    }

    #[test]
    fn more_latent_states_than_behaviours() {
        let set = LabelSet::experiment1();
        let z: Vec<usize> = (0..110).map(|t| t % 11).collect();
        let r: Vec<Behaviour> = (0..110).map(|t| set.members()[(t * 3) % 7]).collect();
        let map = match_states(&[z], &[r], 11, &set).unwrap();
        assert_eq!(map.len(), 11);
        let mut distinct = map.clone();
        distinct.sort();
        distinct.dedup();
        assert!(distinct.len() <= 7);
    }

    #[test]
    fn permutation_invariance() {
        let set = LabelSet::experiment1();
        let z = vec![0, 1, 2, 2, 1, 0, 0];
        let r = vec![Wf, St, Tl, Tl, St, Wf, Ntw];
        let base = match_states(std::slice::from_ref(&z), std::slice::from_ref(&r), 3, &set).unwrap();
        let perm = [2, 0, 1];
        let zp: Vec<usize> = z.iter().map(|&s| perm[s]).collect();
        let permuted = match_states(&[zp], &[r], 3, &set).unwrap();
        for s in 0..3 {
            assert_eq!(base[s], permuted[perm[s]]);
        }
    }
}
