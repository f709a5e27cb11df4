//! Small statistics helpers shared by the estimators and sweeps.

use serde::{Deserialize, Serialize};

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Default number of combined standard errors a dip must clear.
pub const DEFAULT_GATE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Monotone,
    NonMonotone,
}

impl Shape {
    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Monotone => "monotone",
            Shape::NonMonotone => "non_monotone",
        }
    }
}

fn clears(a: (f64, f64), b: (f64, f64), gate: f64) -> bool {
    a.0 - b.0 >= gate * (a.1 * a.1 + b.1 * b.1).sqrt()
}

/// Index of an interior point that lies at least `gate` combined standard
/// errors below some earlier point and below some later point.
///
/// `curve` holds `(mean, stderr)` in grid order.
pub fn interior_minimum(curve: &[(f64, f64)], gate: f64) -> Option<usize> {
    let n = curve.len();
    let mut found: Option<usize> = None;
    for i in 1..n.saturating_sub(1) {
        let before = curve[..i].iter().any(|&p| clears(p, curve[i], gate));
        let after = curve[i + 1..].iter().any(|&p| clears(p, curve[i], gate));
        if before && after && found.is_none_or(|f| curve[i].0 < curve[f].0) {
            found = Some(i);
        }
    }
    found
}

pub fn classify(curve: &[(f64, f64)], gate: f64) -> Shape {
    if interior_minimum(curve, gate).is_some() {
        Shape::NonMonotone
    } else {
        Shape::Monotone
    }
}

/// True when no later point exceeds an earlier one by `gate` combined
/// standard errors.
pub fn is_nonincreasing(curve: &[(f64, f64)], gate: f64) -> bool {
    curve
        .iter()
        .enumerate()
        .all(|(i, &a)| curve[i + 1..].iter().all(|&b| !clears(b, a, gate)))
}

/// Index of the smallest mean, first on ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `n` points log-spaced from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
