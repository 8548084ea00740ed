//! Windowed accuracy, confusion matrices, transition metrics and
//! leave-one-participant-out cross-validation.
//!
//! The transition ratios follow the original naming: `CPT / AT` is called
//! precision and `CPT / PT` recall, the reverse of the usual convention.
//! Structured output keeps the unambiguous names `cpt_over_at` and
//! `cpt_over_pt`.

mod metrics;

pub use metrics::{
    transition_metrics, windowed_accuracy, windowed_confusion, BehaviourAccuracy, EvalReport,
    TransitionCounts, TransitionRatios,
};

use std::io::Write;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Behaviour, Dataset, LabelSet, RawSequence};

/// Window used for confusion matrices unless stated otherwise.
pub const DEFAULT_WINDOW: usize = 25;

/// Windows 0, 5, ..., 50.
pub fn default_window_grid() -> Vec<usize> {
    (0..=50).step_by(5).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Train on the other participants plus the held-out participant's
    /// earlier runs; test on the held-out participant's last run.
    Exp1,
    /// Train on the other participants only; test on all of the held-out
    /// participant's runs.
    Exp2,
}

/// Anything that can be trained on raw recordings and then label others.
pub trait FoldRecipe: Sync {
    fn fit_predict(
        &self,
        train: &[&RawSequence],
        test: &[&RawSequence],
        label_set: &LabelSet,
    ) -> Result<Vec<Vec<Behaviour>>>;
}

/// One held-out participant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub participant: String,
    /// Indices into the dataset's sequence list.
    pub train_sequences: Vec<usize>,
    pub test_sequences: Vec<usize>,
    /// One report per window of the grid.
    pub reports: Vec<EvalReport>,
    #[serde(skip)]
    pub predictions: Vec<Vec<Behaviour>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub protocol: Protocol,
    pub window_grid: Vec<usize>,
    pub folds: Vec<FoldReport>,
    /// Counts summed over folds, one per window.
    pub pooled: Vec<EvalReport>,
}

/// Train/test split of every fold, in participant order.
pub fn fold_splits(dataset: &Dataset<RawSequence>, protocol: Protocol) -> Result<Vec<(String, Vec<usize>, Vec<usize>)>> {
    let participants = dataset.participants();
    if participants.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 2 participants, found {}",
            participants.len()
        )));
    }
    let mut splits = Vec::with_capacity(participants.len());
    for p in participants {
        let own: Vec<usize> = (0..dataset.sequences.len())
            .filter(|&i| dataset.sequences[i].participant_id == p)
            .collect();
        let others = (0..dataset.sequences.len()).filter(|i| !own.contains(i));
        let (train, test) = match protocol {
            Protocol::Exp2 => (others.collect(), own),
            Protocol::Exp1 => {
                if own.len() < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "participant {p} has a single run; the exp1 protocol needs at least 2"
                    )));
                }
                let (last, earlier) = own.split_last().expect("at least two runs");
                let mut train: Vec<usize> = others.chain(earlier.iter().copied()).collect();
                train.sort_unstable();
                (train, vec![*last])
            }
        };
        splits.push((p, train, test));
    }
    Ok(splits)
}

/// Leave-one-participant-out cross-validation. Folds run in parallel; every
/// fold refits all data-dependent preprocessing inside `recipe`.
pub fn loocv(
    dataset: &Dataset<RawSequence>,
    recipe: &dyn FoldRecipe,
    protocol: Protocol,
    window_grid: &[usize],
) -> Result<CrossvalReport> {
    if window_grid.is_empty() {
        return Err(Error::InvalidArgument("empty window grid".into()));
    }
    if let Some(s) = dataset.sequences.iter().find(|s| s.labels.is_none()) {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs labels; a run of {} has none",
            s.participant_id
        )));
    }
    let splits = fold_splits(dataset, protocol)?;
    let folds = splits
        .into_par_iter()
        .map(|(participant, train, test)| {
            let train_refs: Vec<&RawSequence> = train.iter().map(|&i| &dataset.sequences[i]).collect();
            let test_refs: Vec<&RawSequence> = test.iter().map(|&i| &dataset.sequences[i]).collect();
            log::info!("fold {participant}: {} training runs, {} test runs", train.len(), test.len());
            let predictions = recipe.fit_predict(&train_refs, &test_refs, &dataset.label_set)?;
            if predictions.len() != test_refs.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} predictions for {} test runs",
                    predictions.len(),
                    test_refs.len()
                )));
            }
            let reports = window_grid
                .iter()
                .map(|&x| {
                    let pairs = test_refs
                        .iter()
                        .zip(&predictions)
                        .map(|(s, p)| (s.labels.as_deref().expect("checked above"), p.as_slice()));
                    EvalReport::from_pairs(pairs, x, &dataset.label_set)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FoldReport {
                participant,
                train_sequences: train,
                test_sequences: test,
                reports,
                predictions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = (0..window_grid.len())
        .map(|w| EvalReport::pool(folds.iter().map(|f| &f.reports[w])))
        .collect::<Result<Vec<_>>>()?;
    Ok(CrossvalReport {
        protocol,
        window_grid: window_grid.to_vec(),
        folds,
        pooled,
    })
}

/// Evaluates one or more sequence pairs over a window grid.
pub fn window_sweep(
    pairs: &[(&[Behaviour], &[Behaviour])],
    window_grid: &[usize],
    label_set: &LabelSet,
) -> Result<Vec<EvalReport>> {
    window_grid
        .iter()
        .map(|&x| EvalReport::from_pairs(pairs.iter().copied(), x, label_set))
        .collect()
}

/// Confusion matrix as CSV: one row per actual behaviour, one column per
/// predicted behaviour.
pub fn write_confusion_csv<W: Write>(w: W, report: &EvalReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let codes = report.label_set.codes();
    let mut header = vec!["actual".to_string()];
    header.extend(codes.iter().cloned());
    out.write_record(&header)?;
    for (code, row) in codes.iter().zip(&report.confusion) {
        let mut rec = vec![code.clone()];
        rec.extend(row.iter().map(u64::to_string));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<confusion csv>", e))?;
    Ok(())
}

/// Accuracy and transition ratios per window.
pub fn write_window_sweep_csv<W: Write>(w: W, reports: &[EvalReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["window", "accuracy", "cpt_over_at", "cpt_over_pt"])?;
    for r in reports {
        out.write_record([
            r.window.to_string(),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.ratios.cpt_over_at),
            format!("{:.6}", r.ratios.cpt_over_pt),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<window sweep csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Behaviour::*, SensorFrame};

    fn run(pid: &str, label: Behaviour, len: usize) -> RawSequence {
        let frames = (0..len)
            .map(|t| SensorFrame {
                tick: t as u64,
                channels: vec![0; 8],
            })
            .collect();
        RawSequence::new(pid, frames, Some(vec![label; len])).unwrap()
    }

    fn dataset(runs_each: usize) -> Dataset<RawSequence> {
        let mut seqs = Vec::new();
        for p in ["a", "b", "c"] {
            for r in 0..runs_each {
                seqs.push(run(p, if r == 0 { Wf } else { St }, 4 + r));
            }
        }
        Dataset::new(LabelSet::new(vec![Wf, St]).unwrap(), seqs).unwrap()
    }

    struct Constant(Behaviour);

    impl FoldRecipe for Constant {
        fn fit_predict(&self, _: &[&RawSequence], test: &[&RawSequence], _: &LabelSet) -> Result<Vec<Vec<Behaviour>>> {
            Ok(test.iter().map(|s| vec![self.0; s.len()]).collect())
        }
    }

    #[test]
    fn grid_default() {
        assert_eq!(default_window_grid(), vec![0, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50]);
    }

    #[test]
    fn one_fold_per_participant() {
        let ds = dataset(2);
        for protocol in [Protocol::Exp1, Protocol::Exp2] {
            let splits = fold_splits(&ds, protocol).unwrap();
            assert_eq!(splits.len(), 3);
            for (_, train, test) in &splits {
                assert!(test.iter().all(|t| !train.contains(t)));
            }
        }
        let exp1 = fold_splits(&ds, Protocol::Exp1).unwrap();
        assert_eq!(exp1[0].1, vec![0, 2, 3, 4, 5]);
        assert_eq!(exp1[0].2, vec![1]);
        assert!(fold_splits(&dataset(1), Protocol::Exp1).is_err());
    }

    #[test]
    fn pooled_accuracy_is_tick_weighted() {
        let ds = dataset(2);
        let rep = loocv(&ds, &Constant(Wf), Protocol::Exp2, &[0, 5]).unwrap();
        // every participant: 4 WF ticks right, 5 ST ticks wrong
        assert!((rep.pooled[0].accuracy - 12.0 / 27.0).abs() < 1e-12);
        let weighted: f64 = rep.folds.iter().map(|f| f.reports[0].accuracy * f.reports[0].ticks as f64).sum::<f64>()
            / rep.folds.iter().map(|f| f.reports[0].ticks as f64).sum::<f64>();
        assert!((weighted - rep.pooled[0].accuracy).abs() < 1e-12);
    }

    #[test]
    fn csv_layouts() {
        let set = LabelSet::new(vec![Wf, St]).unwrap();
        let a = [Wf, St];
        let reports = window_sweep(&[(&a[..], &a[..])], &[0, 5], &set).unwrap();
        let mut buf = Vec::new();
        write_window_sweep_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("window,accuracy,cpt_over_at,cpt_over_pt\n0,1.000000,1.000000,1.000000\n"));
        let mut buf = Vec::new();
        write_confusion_csv(&mut buf, &reports[0]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "actual,WF,ST\nWF,1,0\nST,0,1\n");
    }
}
