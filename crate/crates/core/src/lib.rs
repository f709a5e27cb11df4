//! Bayesian linear regression with reward-weighted inference-time sampling.
//!
//! A teacher `y = w_T . x / sqrt(d) + noise` generates training data, the
//! student is the Bayesian posterior, and at inference `k` candidates are
//! drawn from the predictive and one is selected by a softmax over a
//! (possibly misspecified) quadratic reward. This crate estimates the
//! resulting generalization error by Monte Carlo and evaluates the
//! closed-form asymptotics that predict it.

pub mod det_equiv;
pub mod error;
pub mod evt;
pub mod experiments;
pub mod gen_error;
pub mod judge;
pub mod model;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod table;
pub mod theory;

pub use det_equiv::{
    de_moments, isotropic_ridge, noise_variance_check, solve_ridge, DetEquiv, NoiseCheck,
};
pub use error::{Error, Result};
pub use gen_error::{
    delta, delta_x, estimate_grid, pooled_points, ErrorEstimate, EstimatorMode, GridEstimate,
    Scenario, TestPoint,
};
pub use model::{
    generate_dataset, resolve_reward, sample_teacher, teacher_for_seed, Dataset, ModelConfig,
    RewardSpec, TeacherMode, WeightVector,
};
pub use posterior::{fit_posterior, Posterior, PredictiveMoments};
pub use sampler::{quadratic_reward, reward_weighted_select, softmax_weights, SamplerConfig};
