//! Closed-form predictions for the generalization error.
//!
//! High temperature, with `t = T / (2 s^2)`:
//!
//! ```text
//! delta(x) ~ Delta_T^2 + s^2 + sum_{l=1..3} (-1)^l C_l / t^l prod_{i=1..l} (1 - i/k)
//! C_l      = 2 Delta_T Delta_R + s^2 + (l - 1) Delta_R^2
//! ```
//!
//! Zero temperature with the teacher as reward, large `k`:
//! `delta(x) ~ (pi / k^2) s^2 exp(Delta_T^2 / s^2)`.

use std::f64::consts::PI;

use crate::det_equiv::{solve_ridge, DetEquiv};
use crate::error::{Error, Result};
use crate::gen_error::TestPoint;
use crate::model::{ModelConfig, WeightVector};

/// Below this `t` the truncated high-temperature series is flagged as unreliable.
pub const SERIES_MIN_T: f64 = 5.0;

/// Margin for the small-epistemic-variance regime of the refined best-of-k law.
pub const REFINED_REGIME_MARGIN: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesTerms {
    pub delta_t: f64,
    pub delta_r: f64,
    pub s2: f64,
    pub t: f64,
    pub c: [f64; 3],
}

fn coefficients(delta_t: f64, delta_r: f64, s2: f64) -> [f64; 3] {
    let c1 = 2.0 * delta_t * delta_r + s2;
    [c1, c1 + delta_r * delta_r, c1 + 2.0 * delta_r * delta_r]
}

impl SeriesTerms {
    pub fn new(delta_t: f64, delta_r: f64, s2: f64, temperature: f64) -> Result<Self> {
        if !(s2 > 0.0) {
            return Err(Error::domain(format!("s^2 must be positive, got {s2}")));
        }
        if !(temperature >= 0.0) {
            return Err(Error::domain(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        Ok(SeriesTerms {
            delta_t,
            delta_r,
            s2,
            t: temperature / (2.0 * s2),
            c: coefficients(delta_t, delta_r, s2),
        })
    }

    /// Terms averaged over test points: `C_l` and `s^2` are averaged, `t` uses
    /// the averaged `s^2`, and `delta_t` is the root-mean-square offset so that
    /// `delta_t^2 + s2` is the averaged `k = 1` error. `delta_r` is the RMS
    /// reward offset and does not by itself reproduce the averaged `C_l`.
    pub fn averaged(points: &[TestPoint], reward: usize, temperature: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("no test points"));
        }
        let n = points.len() as f64;
        let mut c = [0.0; 3];
        let (mut s2, mut dt2, mut dr2) = (0.0, 0.0, 0.0);
        for p in points {
            let dr = *p
                .delta_r
                .get(reward)
                .ok_or_else(|| Error::domain(format!("no reward target {reward}")))?;
            for (acc, v) in c.iter_mut().zip(coefficients(p.delta_t, dr, p.s2)) {
                *acc += v / n;
            }
            s2 += p.s2 / n;
            dt2 += p.delta_t * p.delta_t / n;
            dr2 += dr * dr / n;
        }
        let mut st = SeriesTerms::new(dt2.sqrt(), dr2.sqrt(), s2, temperature)?;
        st.c = c;
        Ok(st)
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        SeriesTerms {
            t: temperature / (2.0 * self.s2),
            ..*self
        }
    }

    pub fn is_reliable(&self) -> bool {
        self.t >= SERIES_MIN_T
    }
}

fn falling_product(k: usize, l: usize) -> f64 {
    (1..=l).map(|i| 1.0 - i as f64 / k as f64).product()
}

pub fn high_t_delta_x(st: &SeriesTerms, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    let mut value = st.delta_t * st.delta_t + st.s2;
    let mut sign = -1.0;
    for l in 1..=3 {
        value += sign * st.c[l - 1] / st.t.powi(l as i32) * falling_product(k, l);
        sign = -sign;
    }
    Ok(value)
}

/// Size of the third-order term, `|C_3 / t^3 prod (1 - i/k)|`.
pub fn third_order_magnitude(st: &SeriesTerms, k: usize) -> f64 {
    (st.c[2] / st.t.powi(3) * falling_product(k, 3)).abs()
}

/// Series averaged over test points, each with its own `t(x) = T / (2 s^2(x))`.
pub fn high_t_delta(
    points: &[TestPoint],
    reward: usize,
    temperature: f64,
    k: usize,
) -> Result<f64> {
    let mut acc = 0.0;
    for p in points {
        let st = SeriesTerms::new(p.delta_t, p.delta_r[reward], p.s2, temperature)?;
        acc += high_t_delta_x(&st, k)?;
    }
    Ok(acc / points.len() as f64)
}

pub fn best_of_k_delta_x(s2: f64, delta_t: f64, k: usize) -> Result<f64> {
    if !(s2 > 0.0) {
        return Err(Error::domain(format!("s^2 must be positive, got {s2}")));
    }
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    Ok(PI / (k * k) as f64 * s2 * (delta_t * delta_t / s2).exp())
}

/// Best-of-k law averaged over test points.
pub fn best_of_k_delta(points: &[TestPoint], k: usize) -> Result<f64> {
    let mut acc = 0.0;
    for p in points {
        acc += best_of_k_delta_x(p.s2, p.delta_t, k)?;
    }
    Ok(acc / points.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinedBestOfK {
    pub value: f64,
    /// `(gamma^2/d) Tr(B_R Sigma) <= margin * sigma^2`.
    pub in_regime: bool,
}

/// `(pi sigma^2 / k^2) (1 - 2 u^T Sigma u / (sigma^2 d))^{-1/2}` with `u = B_R w`.
pub fn refined_best_of_k_delta(
    config: &ModelConfig,
    de: &DetEquiv,
    w: &WeightVector,
    k: usize,
) -> Result<RefinedBestOfK> {
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    let s2 = config.sigma * config.sigma;
    let d = w.len();
    let ratio = 2.0 * de.shrunk_energy(w) / (s2 * d as f64);
    if !(ratio < 1.0) {
        return Err(Error::domain(format!(
            "2 u^T Sigma u / (sigma^2 d) = {ratio} >= 1"
        )));
    }
    let epistemic = config.gamma * config.gamma * de.trace_b_sigma(d);
    Ok(RefinedBestOfK {
        value: PI * s2 / (k * k) as f64 / (1.0 - ratio).sqrt(),
        in_regime: epistemic <= REFINED_REGIME_MARGIN * s2,
    })
}

/// `w_T + k/(k-2) t B_R w_T`.
pub fn optimal_reward(
    x: &[f64],
    teacher: &WeightVector,
    de: &DetEquiv,
    k: usize,
    t: f64,
) -> Result<WeightVector> {
    if k <= 2 {
        return Err(Error::domain("optimal reward needs k > 2"));
    }
    if x.len() != teacher.len() {
        return Err(Error::Dimension {
            expected: teacher.len(),
            got: x.len(),
        });
    }
    let factor = k as f64 / (k - 2) as f64 * t;
    let u = de.shrunk(teacher);
    WeightVector::new(
        teacher
            .as_slice()
            .iter()
            .zip(&u)
            .map(|(w, u)| w + factor * u)
            .collect(),
    )
}

/// Radial misalignment `c` of the optimal reward under
/// `w_R = (1 + c R/(R + S^2)) w_T`: `c = k/(k-2) t`.
pub fn optimal_radial_c(k: usize, t: f64) -> Result<f64> {
    if k <= 2 {
        return Err(Error::domain("optimal reward needs k > 2"));
    }
    Ok(k as f64 / (k - 2) as f64 * t)
}

/// Number of samples minimizing the series, or `None` when it decreases in `k`.
pub fn optimal_k(st: &SeriesTerms) -> Option<usize> {
    let [c1, c2, _] = st.c;
    if !(c1 > 0.0 && c2 > 0.0) {
        return None;
    }
    let t_star = 3.0 * c2 / c1;
    if st.t >= t_star {
        return None;
    }
    Some((4.0 / 3.0 * t_star / (t_star - st.t)).ceil() as usize)
}

/// Optimal `t = 2 (1 - 2/k) C_2 / C_1`, returned as `T = 2 s^2 t`.
pub fn optimal_temperature(st: &SeriesTerms, k: usize) -> Result<f64> {
    if k <= 2 {
        return Err(Error::domain("optimal temperature needs k > 2"));
    }
    let [c1, c2, _] = st.c;
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::domain(format!(
            "need C_1 > 0 and C_2 > 0, got {c1}, {c2}"
        )));
    }
    Ok(2.0 * st.s2 * 2.0 * (1.0 - 2.0 / k as f64) * c2 / c1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingDerivatives {
    /// d log delta / d log k.
    pub dlogk: f64,
    /// d log delta / d log n.
    pub dlogn: f64,
}

const ALPHA_REL_STEP: f64 = 1e-4;

/// Log-derivatives of the refined best-of-k error in `k` and `n`.
///
/// The alpha-derivative of `u^T Sigma u` is a centered difference through the
/// ridge solver at relative step 1e-4.
pub fn scaling_derivatives(
    config: &ModelConfig,
    de: &DetEquiv,
    w: &WeightVector,
) -> Result<ScalingDerivatives> {
    let s2 = config.sigma * config.sigma;
    let d = w.len() as f64;
    let energy = de.shrunk_energy(w);
    let denom = s2 * d - 2.0 * energy;
    if !(denom > 0.0) {
        return Err(Error::domain(format!(
            "sigma^2 d - 2 u^T Sigma u = {denom} <= 0"
        )));
    }
    let h = ALPHA_REL_STEP * de.alpha;
    let at = |alpha: f64| -> Result<f64> {
        Ok(solve_ridge(alpha, config.sigma, config.gamma, de.spectrum())?.shrunk_energy(w))
    };
    let derivative = (at(de.alpha + h)? - at(de.alpha - h)?) / (2.0 * h);
    Ok(ScalingDerivatives {
        dlogk: -2.0,
        dlogn: -de.alpha * derivative / denom,
    })
}

/// Flat-prior, ample-data limit of `dlogn`: `-2a / (1 - 2a)` with
/// `a = (|w|^2/d) (1/S^2) d^2 sigma^2 / (n^2 gamma^4)`.
pub fn dlogn_closed_form(config: &ModelConfig, w: &WeightVector) -> Result<f64> {
    if config.n == 0 {
        return Err(Error::domain("closed form needs n > 0"));
    }
    let d = config.d as f64;
    let n = config.n as f64;
    let a = (w.norm_squared() / d) / config.variance_scale() * d * d * config.sigma.powi(2)
        / (n * n * config.gamma.powi(4));
    if !(2.0 * a < 1.0) {
        return Err(Error::domain("closed form denominator <= 0"));
    }
    Ok(-2.0 * a / (1.0 - 2.0 * a))
}
