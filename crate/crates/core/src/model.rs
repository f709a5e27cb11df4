//! Teacher-student generative model: configuration, teacher weights,
//! training sets and reward weights.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherMode {
    /// Entries i.i.d. N(0, tau^2).
    #[default]
    Sampled,
    /// Sampled, then rescaled so that ||w_T||^2 = d.
    Normalized,
}

impl std::str::FromStr for TeacherMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(TeacherMode::Sampled),
            "normalized" => Ok(TeacherMode::Normalized),
            other => Err(Error::config(format!("unknown teacher_mode {other:?}"))),
        }
    }
}

/// The `(d, n, S, sigma, gamma)` tuple of the teacher-student setup plus the
/// teacher prior. Inputs are `x ~ N(0, S^2 I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "S")]
    pub cov_scale: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub tau: f64,
    pub teacher_mode: TeacherMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 10,
            n: 10_000,
            cov_scale: 1.0,
            sigma: 1e-4,
            gamma: 1e-3,
            tau: 2.0,
            teacher_mode: TeacherMode::Sampled,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("d must be at least 1"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(self.cov_scale) {
            return Err(Error::config(format!(
                "S must be positive, got {}",
                self.cov_scale
            )));
        }
        if !positive(self.gamma) {
            return Err(Error::config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !nonneg(self.sigma) {
            return Err(Error::config(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if !nonneg(self.tau) {
            return Err(Error::config(format!(
                "tau must be nonnegative, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    /// d / n, or `None` for an empty training set.
    pub fn alpha(&self) -> Option<f64> {
        (self.n > 0).then(|| self.d as f64 / self.n as f64)
    }

    /// Input covariance eigenvalue, S^2.
    pub fn variance_scale(&self) -> f64 {
        self.cov_scale * self.cov_scale
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a key-value config file (`d`, `n`, `S`, `sigma`, `gamma`, `tau`,
    /// `teacher_mode`). Missing keys keep their defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(DVector<f64>);

impl WeightVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::config(
                "weight vector must have at least one component",
            ));
        }
        if components.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight vector"));
        }
        Ok(WeightVector(DVector::from_vec(components)))
    }

    pub fn zeros(d: usize) -> Self {
        WeightVector(DVector::zeros(d))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    /// `w . x / sqrt(d)`.
    pub fn project(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.len());
        let dot: f64 = self.0.iter().zip(x).map(|(w, x)| w * x).sum();
        dot / (self.len() as f64).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WeightVector(&self.0 * factor)
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// One row per sample.
    pub inputs: DMatrix<f64>,
    pub labels: DVector<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }
}

/// How the reward weight `w_R` is built from the teacher.
#[derive(Clone, Debug, PartialEq)]
pub enum RewardSpec {
    Explicit(WeightVector),
    /// `w_R = (1 + c R / (R + S^2)) w_T`.
    RadialC {
        c: f64,
    },
    /// `w_R = w_T + c (cos(theta_T + theta), sin(theta_T + theta))`, d = 2 only.
    Polar {
        c: f64,
        theta: f64,
    },
}

impl RewardSpec {
    pub fn aligned() -> Self {
        RewardSpec::RadialC { c: 0.0 }
    }

    /// `(c, theta)` for CSV output; explicit weights report `(NaN, NaN)`.
    pub fn c_theta(&self) -> (f64, f64) {
        match *self {
            RewardSpec::Explicit(_) => (f64::NAN, f64::NAN),
            RewardSpec::RadialC { c } => (c, f64::NAN),
            RewardSpec::Polar { c, theta } => (c, theta),
        }
    }
}

pub fn sample_teacher(config: &ModelConfig, rng: &mut impl Rng) -> WeightVector {
    let mut w: DVector<f64> = DVector::from_fn(config.d, |_, _| {
        config.tau * rng.sample::<f64, _>(StandardNormal)
    });
    if config.teacher_mode == TeacherMode::Normalized {
        let norm_sq = w.norm_squared();
        if norm_sq > 0.0 {
            w *= (config.d as f64 / norm_sq).sqrt();
        }
    }
    WeightVector(w)
}

/// Teacher drawn from the dedicated teacher stream of `seed`.
pub fn teacher_for_seed(config: &ModelConfig, seed: u64) -> WeightVector {
    sample_teacher(config, &mut rng::stream(seed, Purpose::Teacher, 0))
}

/// `n` samples with `x ~ N(0, S^2 I)` and `y = w_T . x / sqrt(d) + eta`.
pub fn generate_dataset(
    config: &ModelConfig,
    teacher: &WeightVector,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    if teacher.len() != config.d {
        return Err(Error::Dimension {
            expected: config.d,
            got: teacher.len(),
        });
    }
    let (n, d) = (config.n, config.d);
    let mut inputs = DMatrix::zeros(n, d);
    let mut labels = DVector::zeros(n);
    let mut row = vec![0.0; d];
    for i in 0..n {
        for v in row.iter_mut() {
            *v = config.cov_scale * rng.sample::<f64, _>(StandardNormal);
        }
        let eta: f64 = config.sigma * rng.sample::<f64, _>(StandardNormal);
        labels[i] = teacher.project(&row) + eta;
        for (j, v) in row.iter().enumerate() {
            inputs[(i, j)] = *v;
        }
    }
    Ok(Dataset { inputs, labels })
}

/// Concrete reward weight. `ridge` is the renormalized ridge R; pass
/// `f64::INFINITY` for an empty training set (B_R = 1).
pub fn resolve_reward(
    spec: &RewardSpec,
    teacher: &WeightVector,
    ridge: f64,
    cov_scale: f64,
) -> Result<WeightVector> {
    match spec {
        RewardSpec::Explicit(w) => {
            if w.len() != teacher.len() {
                return Err(Error::Dimension {
                    expected: teacher.len(),
                    got: w.len(),
                });
            }
            Ok(w.clone())
        }
        RewardSpec::RadialC { c } => {
            if !(ridge >= 0.0) {
                return Err(Error::domain(format!(
                    "ridge must be nonnegative, got {ridge}"
                )));
            }
            if *c == 0.0 {
                return Ok(teacher.clone());
            }
            let shrink = if ridge.is_infinite() {
                1.0
            } else {
                ridge / (ridge + cov_scale * cov_scale)
            };
            Ok(teacher.scaled(1.0 + c * shrink))
        }
        RewardSpec::Polar { c, theta } => {
            if teacher.len() != 2 {
                return Err(Error::Dimension {
                    expected: 2,
                    got: teacher.len(),
                });
            }
            let w = teacher.as_slice();
            let angle = w[1].atan2(w[0]) + theta;
            WeightVector::new(vec![w[0] + c * angle.cos(), w[1] + c * angle.sin()])
        }
    }
}
