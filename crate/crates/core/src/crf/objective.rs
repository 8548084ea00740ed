//! Penalized negative log-likelihood and its gradient.
//!
//! For a fixed label `b` and feature `k`, the `m - 1` thresholds of the
//! triples `(b, ., k)` split the real line into `m` cells, and the summed
//! weight of those triples depends only on the cell holding `s_t^k`. Each
//! tick is therefore stored as one cell index per `(b, k)`, which makes a
//! score evaluation `O(m n)` per tick instead of `O(m^2 n)`. The single
//! persistence weight likewise lets the forward and backward recursions run
//! in `O(m)` per tick.

use rayon::prelude::*;

use super::ThresholdBank;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::types::LabelSet;

/// A sequence reduced to the threshold comparisons the model needs.
#[derive(Debug, Clone)]
pub struct PreparedSequence {
    /// `T x m x n` cell indices: how many thresholds of `(b, ., k)` the
    /// observation exceeds.
    cells: Vec<u8>,
    /// `m x n` lists of triple indices sorted by threshold.
    order: Vec<Vec<usize>>,
    num_labels: usize,
    num_features: usize,
    len: usize,
    pub labels: Option<Vec<usize>>,
}

impl PreparedSequence {
    pub fn new(values: &[Vec<f64>], labels: Option<Vec<usize>>, bank: &ThresholdBank) -> Result<Self> {
        let (m, n) = (bank.num_labels, bank.num_features);
        if m > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!("{m} labels is more than supported")));
        }
        if let Some(l) = &labels {
            if l.len() != values.len() {
                return Err(Error::LengthMismatch(format!(
                    "{} labels for {} ticks",
                    l.len(),
                    values.len()
                )));
            }
            if l.iter().any(|&b| b >= m) {
                return Err(Error::InvalidArgument("label index out of range".into()));
            }
        }
        let mut order = Vec::with_capacity(m * n);
        for b in 0..m {
            for k in 0..n {
                let mut tris: Vec<usize> = (0..m).filter(|&x| x != b).map(|b2| bank.triple(b, b2, k)).collect();
                tris.sort_by(|&x, &y| bank.thresholds[x].total_cmp(&bank.thresholds[y]));
                order.push(tris);
            }
        }
        let mut cells = Vec::with_capacity(values.len() * m * n);
        for row in values {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "observation has {} features, model expects {n}",
                    row.len()
                )));
            }
            for b in 0..m {
                for (k, &x) in row.iter().enumerate() {
                    let tris = &order[b * n + k];
                    let c = tris.partition_point(|&tri| x > bank.thresholds[tri]);
                    cells.push(c as u8);
                }
            }
        }
        Ok(PreparedSequence {
            cells,
            order,
            num_labels: m,
            num_features: n,
            len: values.len(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn cell(&self, t: usize, b: usize, k: usize) -> usize {
        self.cells[(t * self.num_labels + b) * self.num_features + k] as usize
    }

    /// `table[(b * n + k) * m + c]`: summed weight of the `(b, ., k)` triples
    /// for an observation in cell `c`.
    fn cell_table(&self, weights: &[f64]) -> Vec<f64> {
        let m = self.num_labels;
        let mut table = vec![0.0; self.order.len() * m];
        for (bk, tris) in self.order.iter().enumerate() {
            // cell c: the first c triples (by threshold) are exceeded
            let mut acc: f64 = tris.iter().map(|&tri| weights[2 * tri + 1]).sum();
            table[bk * m] = acc;
            for (c, &tri) in tris.iter().enumerate() {
                acc += weights[2 * tri] - weights[2 * tri + 1];
                table[bk * m + c + 1] = acc;
            }
        }
        table
    }

    /// Per-tick state scores `psi[t][b] = mu . f(s_t, b)`.
    pub fn state_scores(&self, weights: &[f64]) -> Vec<Vec<f64>> {
        let table = self.cell_table(weights);
        let (m, n) = (self.num_labels, self.num_features);
        (0..self.len)
            .map(|t| {
                (0..m)
                    .map(|b| (0..n).map(|k| table[(b * n + k) * m + self.cell(t, b, k)]).sum())
                    .collect()
            })
            .collect()
    }

    /// Adds `mass[t][b]` to the weights active for label `b` at tick `t`.
    fn scatter(&self, mass: &[Vec<f64>], grad: &mut [f64]) {
        let (m, n) = (self.num_labels, self.num_features);
        let mut per_cell = vec![0.0; self.order.len() * m];
        for (t, row) in mass.iter().enumerate() {
            for (b, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    for k in 0..n {
                        per_cell[(b * n + k) * m + self.cell(t, b, k)] += p;
                    }
                }
            }
        }
        for (bk, tris) in self.order.iter().enumerate() {
            let cells = &per_cell[bk * m..(bk + 1) * m];
            // triple of rank r is exceeded in cells c > r
            let mut above: f64 = cells.iter().sum::<f64>() - cells[0];
            let mut below = cells[0];
            for (r, &tri) in tris.iter().enumerate() {
                grad[2 * tri] += above;
                grad[2 * tri + 1] += below;
                above -= cells[r + 1];
                below += cells[r + 1];
            }
        }
    }
}

/// `rest[b] = sum_{a != b} x[a]` without cancellation.
fn leave_one_out(x: &[f64], rest: &mut [f64]) {
    let mut prefix = 0.0;
    for (b, r) in rest.iter_mut().enumerate() {
        *r = prefix;
        prefix += x[b];
    }
    let mut suffix = 0.0;
    for b in (0..x.len()).rev() {
        rest[b] += suffix;
        suffix += x[b];
    }
}

/// Persistence mixing: `sum_a x[a] exp(nu [a = b])` for every `b`, returned
/// divided by `exp(shift)` together with `shift`, so nothing overflows.
fn persist_mix(x: &[f64], nu: f64, out: &mut [f64]) -> f64 {
    leave_one_out(x, out);
    let (same, other, shift) = if nu >= 0.0 {
        (1.0, (-nu).exp(), nu)
    } else {
        (nu.exp(), 1.0, 0.0)
    };
    for (o, &xb) in out.iter_mut().zip(x) {
        *o = other * *o + same * xb;
    }
    shift
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Normalized forward messages and `log Z`.
fn forward(psi: &[Vec<f64>], nu: f64) -> (Vec<Vec<f64>>, f64) {
    let m = psi.first().map_or(0, Vec::len);
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(psi.len());
    let mut log_z = 0.0;
    let mut mix = vec![0.0; m];
    for (t, row) in psi.iter().enumerate() {
        let top = max_of(row);
        let mut a: Vec<f64> = row.iter().map(|x| (x - top).exp()).collect();
        log_z += top;
        if t > 0 {
            log_z += persist_mix(&alpha[t - 1], nu, &mut mix);
            a.iter_mut().zip(&mix).for_each(|(x, w)| *x *= w);
        }
        let s: f64 = a.iter().sum();
        a.iter_mut().for_each(|x| *x /= s);
        log_z += s.ln();
        alpha.push(a);
    }
    (alpha, log_z)
}

/// `log Z` of one sequence under stacked weights `[mu..., nu]`.
pub fn log_partition(weights: &[f64], seq: &PreparedSequence) -> f64 {
    let nu = *weights.last().expect("weights end with nu");
    if seq.is_empty() {
        return 0.0;
    }
    forward(&seq.state_scores(weights), nu).1
}

/// Unnormalized log score of a label sequence.
pub fn sequence_score(weights: &[f64], seq: &PreparedSequence, labels: &[usize]) -> f64 {
    let nu = *weights.last().expect("weights end with nu");
    let psi = seq.state_scores(weights);
    let mut s: f64 = labels.iter().enumerate().map(|(t, &b)| psi[t][b]).sum();
    s += labels.windows(2).filter(|w| w[0] == w[1]).count() as f64 * nu;
    s
}

/// Negative log-likelihood of one labeled sequence, without the prior, and
/// its gradient accumulated into `grad`.
fn sequence_nll(weights: &[f64], seq: &PreparedSequence, grad: &mut [f64]) -> f64 {
    let labels = seq.labels.as_deref().expect("training sequences are labeled");
    let tlen = seq.len();
    if tlen == 0 {
        return 0.0;
    }
    let m = seq.num_labels;
    let nu_idx = weights.len() - 1;
    let nu = weights[nu_idx];
    let psi = seq.state_scores(weights);
    let (alpha, log_z) = forward(&psi, nu);

    // marginals = expected state counts minus the observed ones
    let mut mass = vec![vec![0.0; m]; tlen];
    let mut beta = vec![1.0 / m as f64; m];
    let mut u = vec![0.0; m];
    let mut mix = vec![0.0; m];
    let mut rest = vec![0.0; m];
    let (same, other) = if nu >= 0.0 { (1.0, (-nu).exp()) } else { (nu.exp(), 1.0) };
    for t in (0..tlen).rev() {
        let mut s = 0.0;
        for b in 0..m {
            mass[t][b] = alpha[t][b] * beta[b];
            s += mass[t][b];
        }
        mass[t].iter_mut().for_each(|x| *x /= s);
        if t > 0 {
            let top = max_of(&psi[t]);
            for b in 0..m {
                u[b] = (psi[t][b] - top).exp() * beta[b];
            }
            // Pr(y_{t-1} = y_t) from the pairwise marginals
            let prev = &alpha[t - 1];
            leave_one_out(prev, &mut rest);
            let mut same_mass = 0.0;
            let mut total = 0.0;
            for b in 0..m {
                same_mass += same * prev[b] * u[b];
                total += u[b] * (other * rest[b] + same * prev[b]);
            }
            grad[nu_idx] += same_mass / total;
            persist_mix(&u, nu, &mut mix);
            let s: f64 = mix.iter().sum();
            for b in 0..m {
                beta[b] = mix[b] / s;
            }
        }
    }

    let mut gold = 0.0;
    for (t, &b) in labels.iter().enumerate() {
        gold += psi[t][b];
        mass[t][b] -= 1.0;
    }
    seq.scatter(&mass, grad);
    let persists = labels.windows(2).filter(|w| w[0] == w[1]).count() as f64;
    gold += nu * persists;
    grad[nu_idx] -= persists;
    log_z - gold
}

/// Training objective over a fixed set of prepared sequences.
#[derive(Debug, Clone)]
pub struct CrfObjective {
    seqs: Vec<PreparedSequence>,
    num_weights: usize,
    sigma2: f64,
}

impl CrfObjective {
    pub fn new(
        bank: &ThresholdBank,
        data: &[FeatureSequence],
        label_set: &LabelSet,
        sigma2: f64,
    ) -> Result<Self> {
        let seqs = data
            .iter()
            .map(|s| {
                let labels = s
                    .labels
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument(format!("sequence {} is unlabeled", s.participant_id)))?;
                PreparedSequence::new(&s.values, Some(label_set.encode(labels)?), bank)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_prepared(seqs, bank.num_weights(), sigma2))
    }

    pub fn from_prepared(seqs: Vec<PreparedSequence>, num_weights: usize, sigma2: f64) -> Self {
        CrfObjective {
            seqs,
            num_weights,
            sigma2,
        }
    }

    pub fn num_weights(&self) -> usize {
        self.num_weights
    }

    /// `L(lambda)` and its gradient. Sequences are processed in parallel and
    /// reduced in input order, so the result does not depend on scheduling.
    pub fn value_and_gradient(&self, weights: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(weights.len(), self.num_weights, "weight vector length");
        let parts: Vec<(f64, Vec<f64>)> = self
            .seqs
            .par_iter()
            .map(|s| {
                let mut g = vec![0.0; weights.len()];
                let v = sequence_nll(weights, s, &mut g);
                (v, g)
            })
            .collect();
        let mut value: f64 = weights.iter().map(|w| w * w).sum::<f64>() / (2.0 * self.sigma2);
        let mut grad: Vec<f64> = weights.iter().map(|w| w / self.sigma2).collect();
        for (v, g) in parts {
            value += v;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        (value, grad)
    }
}

/// `L(lambda)` and gradient for labeled feature sequences.
pub fn nll_and_gradient(
    weights: &[f64],
    data: &[FeatureSequence],
    bank: &ThresholdBank,
    label_set: &LabelSet,
    sigma2: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 must be positive, got {sigma2}")));
    }
    if weights.len() != bank.num_weights() {
        return Err(Error::Dimension(format!(
            "{} weights, expected {}",
            weights.len(),
            bank.num_weights()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    Ok(CrfObjective::new(bank, data, label_set, sigma2)?.value_and_gradient(weights))
}
