//! Extreme-value objects for the best of `k` candidates.
//!
//! With the teacher as reward, the selected candidate minimizes `(z + sqrt(lambda))^2`
//! over `k` draws, a minimum of non-central chi-squared variables with one
//! degree of freedom. In the sign convention `v = -(z + sqrt(lambda))^2 <= 0`
//! this is a maximum with finite right endpoint `v_F = 0`, whose limit law is
//! Weibull with shape 1/2 and norming constant `c_k = pi/(2 k^2) e^lambda`.

use libm::erf;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::stats::mean_stderr;

const MC_CHUNK: usize = 1024;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::domain(format!(
            "noncentrality must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

/// `P(chi^2_1(lambda) < x)` for `x >= 0`.
pub fn chisq1_lower(x: f64, lambda: f64) -> f64 {
    let (a, b) = (x.sqrt(), lambda.sqrt());
    0.5 * (erf((a + b) / std::f64::consts::SQRT_2) + erf((a - b) / std::f64::consts::SQRT_2))
}

/// CDF of `v = -chi^2_1(lambda)`:
/// `F(v) = 1 - (erf((sqrt(-v) - sqrt(lambda))/sqrt 2) + erf((sqrt(lambda) + sqrt(-v))/sqrt 2)) / 2`.
pub fn chisq1_cdf(v: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(v <= 0.0) {
        return Err(Error::domain(format!("v must be <= 0, got {v}")));
    }
    Ok(1.0 - chisq1_lower(-v, lambda))
}

/// Density of `v` on `v < 0`: `e^{(v - lambda)/2} cosh(sqrt(-lambda v)) / sqrt(2 pi (-v))`.
pub fn chisq1_density(v: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(v < 0.0) {
        return Err(Error::domain(format!("density needs v < 0, got {v}")));
    }
    let x = -v;
    Ok(((v - lambda) / 2.0).exp() * (lambda * x).sqrt().cosh()
        / (2.0 * std::f64::consts::PI * x).sqrt())
}

/// Generalized inverse `F^{<-}(p) = inf { v : F(v) >= p }`, by bisection.
pub fn chisq1_quantile(p: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain(format!(
            "probability must lie in (0, 1], got {p}"
        )));
    }
    // F(v) >= p  <=>  P(chi^2 < -v) <= 1 - p; solve on x = -v.
    let target = 1.0 - p;
    if target == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0 + lambda;
    while chisq1_lower(hi, lambda) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chisq1_lower(mid, lambda) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(-0.5 * (lo + hi))
}

/// `c_k = pi / (2 k^2) e^lambda`.
pub fn weibull_norming(lambda: f64, k: usize) -> Result<f64> {
    check_lambda(lambda)?;
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    Ok(std::f64::consts::PI / (2.0 * (k * k) as f64) * lambda.exp())
}

/// Exact quantile gap `v_F - F^{<-}(1 - 1/k)`, the quantity `c_k` approximates.
pub fn quantile_gap(lambda: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    Ok(-chisq1_quantile(1.0 - 1.0 / k as f64, lambda)?)
}

/// `n_mc` independent minima of `(z + sqrt(lambda))^2` over `k` standard normal draws.
pub fn min_chisq_samples(lambda: f64, k: usize, n_mc: usize, seed: u64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if k == 0 || n_mc == 0 {
        return Err(Error::domain("k and n_mc must be >= 1"));
    }
    let shift = lambda.sqrt();
    let n_chunks = n_mc.div_ceil(MC_CHUNK);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, Purpose::Extreme, c as u64);
            let len = MC_CHUNK.min(n_mc - c * MC_CHUNK);
            (0..len)
                .map(|_| {
                    let mut best = f64::INFINITY;
                    for _ in 0..k {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let e = z + shift;
                        best = best.min(e * e);
                    }
                    best
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Mean and standard error of the minimum of `k` draws, `E[-v_max]`.
pub fn min_chisq_mc(lambda: f64, k: usize, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    Ok(mean_stderr(&min_chisq_samples(lambda, k, n_mc, seed)?))
}

/// `(v_F - v) phi(v) / (1 - F(v))`; tends to the Weibull shape 1/2 as `v -> 0-`.
pub fn von_mises_index(v: f64, lambda: f64) -> Result<f64> {
    let tail = chisq1_lower(-v, lambda);
    Ok(-v * chisq1_density(v, lambda)? / tail)
}

/// Slope of the auxiliary function `a(v) = (1 - F(v)) / phi(v)` at `v < 0`.
///
/// A Gumbel domain of attraction needs `a'(v) -> 0` at the endpoint; here it
/// tends to `-2`.
pub fn gumbel_auxiliary_slope(v: f64, lambda: f64) -> Result<f64> {
    if !(v < 0.0) {
        return Err(Error::domain(format!("need v < 0, got {v}")));
    }
    let a = |v: f64| -> Result<f64> { Ok(chisq1_lower(-v, lambda) / chisq1_density(v, lambda)?) };
    let h = 1e-4 * v.abs();
    Ok((a(v + h)? - a(v - h)?) / (2.0 * h))
}

/// Kolmogorov distance between the samples scaled by `scale` and the
/// Weibull law `1 - exp(-sqrt(x))`, restricted to `x <= upper`.
pub fn weibull_ks_distance(samples: &[f64], scale: f64, upper: f64) -> f64 {
    let mut xs: Vec<f64> = samples.iter().map(|v| v / scale).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let limit = |x: f64| 1.0 - (-x.sqrt()).exp();
    let mut worst: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        if x > upper {
            break;
        }
        let g = limit(x);
        worst = worst
            .max((i as f64 / n - g).abs())
            .max(((i + 1) as f64 / n - g).abs());
    }
    worst
}
