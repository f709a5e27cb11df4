//! Deterministic equivalents for the proportional limit `d, n -> inf`,
//! `alpha = d/n` fixed.
//!
//! The renormalized ridge `R` solves
//!
//! ```text
//! R (1 - alpha m(R)) = R_hat = sigma^2 alpha / gamma^2,   m(R) = (1/d) Tr[Sigma (Sigma + R)^-1]
//! ```
//!
//! and replaces the sample covariance in the predictive:
//! `m(x) = x~^T A_R w_T`, `s^2(x) = sigma^2 + gamma^2 x~^T B_R x~` with
//! `A_R = Sigma (Sigma + R)^-1` and `B_R = I - A_R`.
//!
//! Only diagonal covariances are supported; `spectrum` lists the eigenvalues
//! of `Sigma` (one value means isotropic).

use crate::error::{Error, Result};
use crate::model::{ModelConfig, WeightVector};
use crate::posterior::PredictiveMoments;

/// Margin in the small-noise check `sigma^2 <= margin * sigma_c^2`.
pub const NOISE_VALIDITY_MARGIN: f64 = 0.01;

const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DetEquiv {
    /// Renormalized ridge R.
    pub ridge: f64,
    /// Bare ridge sigma^2 alpha / gamma^2.
    pub bare_ridge: f64,
    pub alpha: f64,
    /// (1/d) Tr A_R; the scalar S^2 / (R + S^2) when isotropic.
    pub a: f64,
    /// (1/d) Tr B_R; the scalar R / (R + S^2) when isotropic.
    pub b: f64,
    /// m_Sigma(R).
    pub m1: f64,
    /// m_Sigma^(2)(R) = (1/d) Tr[Sigma^2 (Sigma + R)^-2].
    pub m2: f64,
    spectrum: Vec<f64>,
}

fn mean_over<F: Fn(f64) -> f64>(spectrum: &[f64], f: F) -> f64 {
    spectrum.iter().map(|&l| f(l)).sum::<f64>() / spectrum.len() as f64
}

fn check_inputs(alpha: f64, sigma: f64, gamma: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::domain(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::domain(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::domain(format!(
            "sigma must be nonnegative, got {sigma}"
        )));
    }
    Ok(())
}

/// `g(R) = R (1 - alpha m(R))`, written to avoid forming `1 - alpha m`.
fn fixed_point_map(r: f64, alpha: f64, spectrum: &[f64]) -> f64 {
    r - alpha * mean_over(spectrum, |l| l * r / (l + r))
}

/// Solves for R by bisection on the increasing map `g`, starting from the
/// bracket `[R_hat, 2 R_hat]` and doubling the upper end until it overshoots.
pub fn solve_ridge(alpha: f64, sigma: f64, gamma: f64, spectrum: &[f64]) -> Result<DetEquiv> {
    check_inputs(alpha, sigma, gamma)?;
    if spectrum.is_empty() || spectrum.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
        return Err(Error::domain(
            "covariance spectrum entries must be positive",
        ));
    }
    let bare = sigma * sigma * alpha / (gamma * gamma);
    let ridge = if bare == 0.0 {
        if alpha >= 1.0 {
            return Err(Error::RidgelessDegenerate { alpha });
        }
        0.0
    } else {
        let g = |r: f64| fixed_point_map(r, alpha, spectrum);
        let mut lo = bare;
        let mut hi = 2.0 * bare;
        let mut doublings = 0;
        while g(hi) <= bare {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > 2100 || !hi.is_finite() {
                return Err(Error::RidgeNotConverged {
                    residual: f64::INFINITY,
                });
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) <= bare {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (g(hi) - bare).abs() < (g(lo) - bare).abs() {
            hi
        } else {
            lo
        }
    };

    let residual = (fixed_point_map(ridge, alpha, spectrum) - bare).abs();
    if residual > RESIDUAL_TOL * bare.max(1.0) {
        return Err(Error::RidgeNotConverged { residual });
    }
    Ok(DetEquiv::from_ridge(ridge, bare, alpha, spectrum))
}

/// Closed-form R for `Sigma = S^2 I`.
pub fn isotropic_ridge(alpha: f64, sigma: f64, gamma: f64, cov_scale: f64) -> Result<f64> {
    check_inputs(alpha, sigma, gamma)?;
    if !(cov_scale.is_finite() && cov_scale > 0.0) {
        return Err(Error::domain(format!(
            "S must be positive, got {cov_scale}"
        )));
    }
    let s2 = cov_scale * cov_scale;
    let r = sigma * sigma * alpha / (gamma * gamma) / s2;
    let b = alpha + r - 1.0;
    let root = (b * b + 4.0 * r).sqrt();
    // Conjugate form when b < 0: same root, no cancellation.
    let scaled = if b >= 0.0 {
        0.5 * (b + root)
    } else if r == 0.0 {
        0.0
    } else {
        2.0 * r / (root - b)
    };
    Ok(s2 * scaled)
}

impl DetEquiv {
    fn from_ridge(ridge: f64, bare_ridge: f64, alpha: f64, spectrum: &[f64]) -> Self {
        let m1 = mean_over(spectrum, |l| l / (l + ridge));
        let m2 = mean_over(spectrum, |l| (l / (l + ridge)).powi(2));
        let b = mean_over(spectrum, |l| ridge / (l + ridge));
        DetEquiv {
            ridge,
            bare_ridge,
            alpha,
            a: 1.0 - b,
            b,
            m1,
            m2,
            spectrum: spectrum.to_vec(),
        }
    }

    /// Solves the fixed point for a model configuration with `Sigma = S^2 I`.
    pub fn for_config(config: &ModelConfig) -> Result<Self> {
        let alpha = config
            .alpha()
            .ok_or_else(|| Error::domain("deterministic equivalent needs n > 0"))?;
        solve_ridge(
            alpha,
            config.sigma,
            config.gamma,
            &[config.variance_scale()],
        )
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    fn eigen(&self, i: usize) -> f64 {
        if self.spectrum.len() == 1 {
            self.spectrum[0]
        } else {
            self.spectrum[i]
        }
    }

    /// i-th diagonal entry of B_R.
    pub fn b_diag(&self, i: usize) -> f64 {
        let l = self.eigen(i);
        self.ridge / (l + self.ridge)
    }

    /// u = B_R w.
    pub fn shrunk(&self, w: &WeightVector) -> Vec<f64> {
        w.as_slice()
            .iter()
            .enumerate()
            .map(|(i, wi)| self.b_diag(i) * wi)
            .collect()
    }

    /// u^T Sigma u with u = B_R w.
    pub fn shrunk_energy(&self, w: &WeightVector) -> f64 {
        self.shrunk(w)
            .iter()
            .enumerate()
            .map(|(i, u)| self.eigen(i) * u * u)
            .sum()
    }

    /// (1/d) Tr(B_R Sigma) over `d` coordinates.
    pub fn trace_b_sigma(&self, d: usize) -> f64 {
        (0..d).map(|i| self.b_diag(i) * self.eigen(i)).sum::<f64>() / d as f64
    }

    /// `m(x) - w . x / sqrt(d) = -x~^T B_R w` for the teacher `w`.
    pub fn mean_offset(&self, x: &[f64], w: &WeightVector) -> f64 {
        let dot: f64 = x
            .iter()
            .zip(w.as_slice())
            .enumerate()
            .map(|(i, (x, w))| self.b_diag(i) * x * w)
            .sum();
        -dot / (x.len() as f64).sqrt()
    }
}

/// Deterministic-equivalent predictive moments at `x`.
pub fn de_moments(
    x: &[f64],
    teacher: &WeightVector,
    de: &DetEquiv,
    config: &ModelConfig,
) -> Result<PredictiveMoments> {
    if x.len() != teacher.len() {
        return Err(Error::Dimension {
            expected: teacher.len(),
            got: x.len(),
        });
    }
    if de.spectrum.len() != 1 && de.spectrum.len() != x.len() {
        return Err(Error::Dimension {
            expected: de.spectrum.len(),
            got: x.len(),
        });
    }
    let d = x.len() as f64;
    let mean = teacher.project(x) + de.mean_offset(x, teacher);
    let quad: f64 = x
        .iter()
        .enumerate()
        .map(|(i, x)| de.b_diag(i) * x * x)
        .sum();
    let variance = config.sigma * config.sigma + config.gamma * config.gamma * quad / d;
    Ok(PredictiveMoments { mean, variance })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseCheck {
    /// Deterministic equivalent of Var(Z(x)), the label-noise part of m(x).
    pub var_z: f64,
    /// sigma_c^2 = (1 - alpha m2) / (alpha m2). The threshold compares a
    /// variance to this dimensionless ratio, exactly as derived.
    pub sigma_c_sq: f64,
    /// `sigma^2 <= NOISE_VALIDITY_MARGIN * sigma_c^2`.
    pub valid: bool,
    pub margin: f64,
}

impl NoiseCheck {
    pub fn sigma_c(&self) -> f64 {
        self.sigma_c_sq.sqrt()
    }
}

pub fn noise_variance_check(de: &DetEquiv, sigma: f64) -> Result<NoiseCheck> {
    let am2 = de.alpha * de.m2;
    if am2 >= 1.0 {
        return Err(Error::NoiseVarianceDiverges(am2));
    }
    let sigma_c_sq = if am2 == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - am2) / am2
    };
    let var_z = sigma * sigma * am2 / (1.0 - am2);
    Ok(NoiseCheck {
        var_z,
        sigma_c_sq,
        valid: sigma * sigma <= NOISE_VALIDITY_MARGIN * sigma_c_sq,
        margin: NOISE_VALIDITY_MARGIN,
    })
}
