use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Behaviour, LabelSet};

fn check_lengths<T>(actual: &[T], predicted: &[T]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch(format!(
            "{} actual labels, {} predicted",
            actual.len(),
            predicted.len()
        )));
    }
    Ok(())
}

/// Whether `actual[t]` occurs in `predicted[t - x ..= t + x]`.
fn hit<T: PartialEq>(actual: &[T], predicted: &[T], t: usize, window: usize) -> bool {
    let lo = t.saturating_sub(window);
    let hi = (t + window).min(predicted.len() - 1);
    predicted[lo..=hi].contains(&actual[t])
}

/// Fraction of ticks whose true label appears in the prediction within
/// `window` ticks on either side. A window of 0 is plain accuracy.
pub fn windowed_accuracy<T: PartialEq>(actual: &[T], predicted: &[T], window: usize) -> Result<f64> {
    check_lengths(actual, predicted)?;
    if actual.is_empty() {
        return Ok(0.0);
    }
    let correct = (0..actual.len())
        .filter(|&t| hit(actual, predicted, t, window))
        .count();
    Ok(correct as f64 / actual.len() as f64)
}

/// `m x m` counts indexed `[actual][predicted]`. A tick matched within the
/// window lands on the diagonal; otherwise it is attributed to the
/// prediction at the same tick.
pub fn windowed_confusion(
    actual: &[Behaviour],
    predicted: &[Behaviour],
    window: usize,
    label_set: &LabelSet,
) -> Result<Vec<Vec<u64>>> {
    check_lengths(actual, predicted)?;
    let a = label_set.encode(actual)?;
    let p = label_set.encode(predicted)?;
    let m = label_set.len();
    let mut conf = vec![vec![0u64; m]; m];
    for t in 0..a.len() {
        let col = if hit(&a, &p, t, window) { a[t] } else { p[t] };
        conf[a[t]][col] += 1;
    }
    Ok(conf)
}

/// Transition counts: actual (AT), predicted (PT) and correctly predicted
/// (CPT) behaviour changes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCounts {
    pub at: u64,
    pub pt: u64,
    pub cpt: u64,
}

impl TransitionCounts {
    /// `CPT / AT`, reported as "precision". 0 when there are no actual transitions.
    pub fn cpt_over_at(&self) -> f64 {
        ratio(self.cpt, self.at)
    }

    /// `CPT / PT`, reported as "recall". 0 when there are no predicted transitions.
    pub fn cpt_over_pt(&self) -> f64 {
        ratio(self.cpt, self.pt)
    }

    fn add(&mut self, other: TransitionCounts) {
        self.at += other.at;
        self.pt += other.pt;
        self.cpt += other.cpt;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Counts transitions and matches predicted ones to actual ones.
///
/// A predicted change `a -> b` at tick `t` is correct when an actual change
/// `a -> b` happens at some `t'` with `|t - t'| <= window`. Each actual change
/// is matched at most once, earliest first. With `window = 0` this is
/// `CPT = sum_t [p_t != p_{t-1} and a_t = p_t and a_{t-1} = p_{t-1}]`.
pub fn transition_metrics<T: PartialEq + Copy>(
    actual: &[T],
    predicted: &[T],
    window: usize,
) -> Result<TransitionCounts> {
    check_lengths(actual, predicted)?;
    let changes = |xs: &[T]| -> Vec<(usize, T, T)> {
        (1..xs.len())
            .filter(|&t| xs[t] != xs[t - 1])
            .map(|t| (t, xs[t - 1], xs[t]))
            .collect()
    };
    let act = changes(actual);
    let pred = changes(predicted);
    let mut used = vec![false; act.len()];
    let mut cpt = 0;
    for &(t, from, to) in &pred {
        let lo = t.saturating_sub(window);
        let start = act.partition_point(|&(ta, _, _)| ta < lo);
        for (i, &(ta, f, g)) in act.iter().enumerate().skip(start) {
            if ta > t + window {
                break;
            }
            if !used[i] && f == from && g == to {
                used[i] = true;
                cpt += 1;
                break;
            }
        }
    }
    Ok(TransitionCounts {
        at: act.len() as u64,
        pt: pred.len() as u64,
        cpt,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviourAccuracy {
    pub behaviour: Behaviour,
    pub ticks: u64,
    /// Percentage of this behaviour's ticks counted correct; absent when the
    /// behaviour never occurs.
    pub accuracy_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRatios {
    /// Printed as "precision" in reports.
    pub cpt_over_at: f64,
    /// Printed as "recall" in reports.
    pub cpt_over_pt: f64,
}

/// Metrics of one or more labeled sequences at one window size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub window: usize,
    pub label_set: LabelSet,
    pub ticks: u64,
    /// Fraction of ticks counted correct.
    pub accuracy: f64,
    pub per_behaviour: Vec<BehaviourAccuracy>,
    pub confusion: Vec<Vec<u64>>,
    pub transition_counts: TransitionCounts,
    pub ratios: TransitionRatios,
}

impl EvalReport {
    /// Pools several (actual, predicted) sequence pairs. Windows never span
    /// two sequences.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a [Behaviour], &'a [Behaviour])>,
        window: usize,
        label_set: &LabelSet,
    ) -> Result<Self> {
        let m = label_set.len();
        let mut confusion = vec![vec![0u64; m]; m];
        let mut counts = TransitionCounts::default();
        for (a, p) in pairs {
            let c = windowed_confusion(a, p, window, label_set)?;
            for (row, add) in confusion.iter_mut().zip(&c) {
                for (x, y) in row.iter_mut().zip(add) {
                    *x += y;
                }
            }
            counts.add(transition_metrics(a, p, window)?);
        }
        Ok(Self::from_counts(window, label_set.clone(), confusion, counts))
    }

    fn from_counts(
        window: usize,
        label_set: LabelSet,
        confusion: Vec<Vec<u64>>,
        counts: TransitionCounts,
    ) -> Self {
        let ticks: u64 = confusion.iter().flatten().sum();
        let diag: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let per_behaviour = label_set
            .members()
            .iter()
            .enumerate()
            .map(|(i, &behaviour)| {
                let row: u64 = confusion[i].iter().sum();
                BehaviourAccuracy {
                    behaviour,
                    ticks: row,
                    accuracy_pct: (row > 0).then(|| 100.0 * confusion[i][i] as f64 / row as f64),
                }
            })
            .collect();
        EvalReport {
            window,
            label_set,
            ticks,
            accuracy: ratio(diag, ticks),
            per_behaviour,
            confusion,
            ratios: TransitionRatios {
                cpt_over_at: counts.cpt_over_at(),
                cpt_over_pt: counts.cpt_over_pt(),
            },
            transition_counts: counts,
        }
    }

    /// Sums the counts of reports computed at the same window.
    pub fn pool<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> Result<Self> {
        let mut it = reports.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("nothing to pool".into()))?;
        let mut confusion = first.confusion.clone();
        let mut counts = first.transition_counts;
        for r in it {
            if r.window != first.window || r.label_set != first.label_set {
                return Err(Error::InvalidArgument(
                    "pooled reports must share window and label set".into(),
                ));
            }
            for (row, add) in confusion.iter_mut().zip(&r.confusion) {
                for (x, y) in row.iter_mut().zip(add) {
                    *x += y;
                }
            }
            counts.add(r.transition_counts);
        }
        Ok(Self::from_counts(first.window, first.label_set.clone(), confusion, counts))
    }
}
