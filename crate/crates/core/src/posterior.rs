//! Exact Bayesian linear-regression posterior and its Gaussian predictive.
//!
//! With scaled features `x~ = x / sqrt(d)`:
//!
//! ```text
//! Omega^-1 = (1/sigma^2) sum_i x~_i x~_i^T + (1/gamma^2) I
//! mu       = (1/sigma^2) Omega sum_i y_i x~_i
//! y | x    ~ N(mu . x~, x~^T Omega x~ + sigma^2)
//! ```
//!
//! The precision is factorized once (Cholesky); predictive variances are
//! computed as `|L^-1 x~|^2` rather than through the dense `Omega`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelConfig, WeightVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictiveMoments {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug)]
pub struct Posterior {
    mu: DVector<f64>,
    omega: DMatrix<f64>,
    precision: Cholesky<f64, Dyn>,
    sigma: f64,
}

pub fn fit_posterior(data: &Dataset, config: &ModelConfig) -> Result<Posterior> {
    config.validate()?;
    let d = config.d;
    if data.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: data.dim(),
        });
    }
    if data.inputs.nrows() != data.labels.len() {
        return Err(Error::Dimension {
            expected: data.inputs.nrows(),
            got: data.labels.len(),
        });
    }
    if data
        .inputs
        .iter()
        .chain(data.labels.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("dataset"));
    }
    let n = data.len();
    if n > 0 && config.sigma <= 0.0 {
        return Err(Error::DegenerateLikelihood);
    }

    let prior_precision = 1.0 / (config.gamma * config.gamma);
    let mut precision = DMatrix::identity(d, d) * prior_precision;
    let mut rhs = DVector::zeros(d);
    if n > 0 {
        let noise_precision = 1.0 / (config.sigma * config.sigma);
        let scaled = &data.inputs / (d as f64).sqrt();
        precision += scaled.tr_mul(&scaled) * noise_precision;
        rhs = scaled.tr_mul(&data.labels) * noise_precision;
    }
    symmetrize(&mut precision);

    let chol = Cholesky::new(precision).ok_or(Error::NotPositiveDefinite)?;
    let mu = chol.solve(&rhs);
    let mut omega = chol.inverse();
    symmetrize(&mut omega);

    Ok(Posterior {
        mu,
        omega,
        precision: chol,
        sigma: config.sigma,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

impl Posterior {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean_weights(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `x~^T Omega x~` via the Cholesky factor of the precision.
    pub fn epistemic_variance(&self, x: &[f64]) -> f64 {
        let scaled = DVector::from_iterator(x.len(), x.iter().map(|v| v / (x.len() as f64).sqrt()));
        let l = self.precision.l_dirty();
        let y = l
            .solve_lower_triangular(&scaled)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }

    /// `(mu - w) . x / sqrt(d)`, the predictive mean minus `w`'s projection,
    /// without cancellation against large projections.
    pub fn mean_offset(&self, x: &[f64], w: &WeightVector) -> f64 {
        let dot: f64 = self
            .mu
            .iter()
            .zip(w.as_slice())
            .zip(x)
            .map(|((m, w), x)| (m - w) * x)
            .sum();
        dot / (x.len() as f64).sqrt()
    }

    pub fn predictive_moments(&self, x: &[f64]) -> Result<PredictiveMoments> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mean = self.mu.iter().zip(x).map(|(m, x)| m * x).sum::<f64>() / (x.len() as f64).sqrt();
        let variance = self.epistemic_variance(x) + self.sigma * self.sigma;
        Ok(PredictiveMoments { mean, variance })
    }
}
