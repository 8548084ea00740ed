//! Nonlinear conjugate gradients (Polak-Ribiere+) with a strong Wolfe line
//! search, following the bracketing/zoom scheme of Nocedal & Wright.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Sufficient decrease constant.
    pub c1: f64,
    /// Curvature constant; below 0.5 as CG requires.
    pub c2: f64,
    pub max_line_evals: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            max_iters: 100,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.1,
            max_line_evals: 40,
        }
    }
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn step(x: &[f64], d: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    grad: Vec<f64>,
}

/// Minimizer of the cubic through two points with values and slopes,
/// safeguarded into the inner 80% of the interval.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = 0.5 * (a + b);
    let cand = if disc >= 0.0 {
        let d2 = (b - a).signum() * disc.sqrt();
        b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2)
    } else {
        mid
    };
    let (l, h) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (h - l);
    if cand.is_finite() && cand > l + margin && cand < h - margin {
        cand
    } else {
        mid
    }
}

/// Strong Wolfe line search along descent direction `d`.
fn line_search<F>(
    f: &mut F,
    x: &[f64],
    d: &[f64],
    f0: f64,
    slope0: f64,
    alpha0: f64,
    opts: &CgOptions,
) -> Option<Point>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut evals = 0;
    let mut eval = |alpha: f64, evals: &mut usize| {
        *evals += 1;
        let (value, grad) = f(&step(x, d, alpha));
        let slope = dot(&grad, d);
        Point {
            alpha,
            value,
            slope,
            grad,
        }
    };
    let armijo = |p: &Point| p.value <= f0 + opts.c1 * p.alpha * slope0;
    let curvature = |p: &Point| p.slope.abs() <= -opts.c2 * slope0;

    let mut prev = Point {
        alpha: 0.0,
        value: f0,
        slope: slope0,
        grad: Vec::new(),
    };
    let mut alpha = alpha0;
    let (mut lo, mut hi);
    loop {
        let cur = eval(alpha, &mut evals);
        if !cur.value.is_finite() {
            // overshoot into overflow: shrink
            alpha = 0.5 * (prev.alpha + alpha);
            if evals >= opts.max_line_evals {
                return None;
            }
            continue;
        }
        if !armijo(&cur) || (evals > 1 && cur.value >= prev.value) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        if evals >= opts.max_line_evals {
            return None;
        }
        alpha *= 2.0;
        prev = cur;
    }
    // zoom
    while evals < opts.max_line_evals {
        if hi.grad.is_empty() && hi.alpha == 0.0 && lo.alpha == 0.0 {
            return None;
        }
        let a = interpolate(&lo, &hi);
        let cur = eval(a, &mut evals);
        if !armijo(&cur) || cur.value >= lo.value {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
    }
    // accept the best sufficient-decrease point found
    (lo.alpha > 0.0 && armijo(&lo)).then_some(lo)
}

/// Backtracking along the negative gradient until the Armijo condition holds.
fn steepest_descent_fallback<F>(f: &mut F, x: &[f64], g: &[f64], f0: f64, alpha0: f64, c1: f64) -> Option<Point>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d: Vec<f64> = g.iter().map(|v| -v).collect();
    let slope0 = -dot(g, g);
    let mut alpha = alpha0;
    for _ in 0..60 {
        let (value, grad) = f(&step(x, &d, alpha));
        if value.is_finite() && value <= f0 + c1 * alpha * slope0 {
            return Some(Point {
                alpha,
                value,
                slope: dot(&grad, &d),
                grad,
            });
        }
        alpha *= 0.5;
    }
    None
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient.
pub fn minimize_cg<F>(mut f: F, x0: Vec<f64>, opts: &CgOptions) -> CgResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut value, mut grad) = f(&x);
    let mut trace = vec![TraceRow {
        iteration: 0,
        value,
        grad_norm: norm(&grad),
    }];
    let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut last_alpha = 0.0;
    let mut last_slope = 0.0;

    for iter in 1..=opts.max_iters {
        let gnorm = norm(&grad);
        if gnorm < opts.grad_tol {
            break;
        }
        let mut slope = dot(&grad, &d);
        if slope >= 0.0 {
            d = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        let alpha0 = if last_alpha > 0.0 {
            (last_alpha * last_slope / slope).min(1e6)
        } else {
            (1.0 / gnorm).min(1.0)
        };
        let accepted = match line_search(&mut f, &x, &d, value, slope, alpha0, opts) {
            Some(p) => p,
            None => {
                log::warn!("line search failed at iteration {iter}; taking a steepest-descent step");
                match steepest_descent_fallback(&mut f, &x, &grad, value, alpha0.max(1e-8), opts.c1) {
                    Some(p) => {
                        d = grad.iter().map(|g| -g).collect();
                        p
                    }
                    None => break,
                }
            }
        };
        x = step(&x, &d, accepted.alpha);
        let new_grad = accepted.grad;
        // Polak-Ribiere+ with Powell restarts
        let gg = dot(&grad, &grad);
        let overlap = dot(&new_grad, &grad);
        let mut beta = ((dot(&new_grad, &new_grad) - overlap) / gg).max(0.0);
        if overlap.abs() >= 0.2 * dot(&new_grad, &new_grad) {
            beta = 0.0;
        }
        last_alpha = accepted.alpha;
        last_slope = slope;
        d = new_grad
            .iter()
            .zip(&d)
            .map(|(g, di)| -g + beta * di)
            .collect();
        value = accepted.value;
        grad = new_grad;
        trace.push(TraceRow {
            iteration: iter,
            value,
            grad_norm: norm(&grad),
        });
    }
    CgResult {
        x,
        value,
        grad,
        trace,
    }
}
