//! Reward-weighted sampling over `k` candidates drawn from the predictive.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub k: usize,
    /// Softmax temperature; zero selects the best-reward candidate.
    #[serde(rename = "T")]
    pub temperature: f64,
}

impl SamplerConfig {
    pub fn new(k: usize, temperature: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if !(temperature >= 0.0) {
            return Err(Error::config(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        Ok(SamplerConfig { k, temperature })
    }
}

#[inline]
pub fn quadratic_reward(y: f64, mu_r: f64) -> f64 {
    let e = y - mu_r;
    -e * e
}

/// Index of the largest reward, lowest index on ties. NaN never wins.
pub fn argmax_reward(rewards: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &r) in rewards.iter().enumerate() {
        if r.is_nan() || r == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some(b) if rewards[b] >= r => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Softmax of `rewards / T` with max subtraction; one-hot argmax at `T = 0`.
pub fn softmax_weights(rewards: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature >= 0.0) {
        return Err(Error::domain(format!(
            "temperature must be >= 0, got {temperature}"
        )));
    }
    let best = argmax_reward(rewards).ok_or(Error::NoFiniteReward)?;
    let mut weights = vec![0.0; rewards.len()];
    if temperature == 0.0 {
        weights[best] = 1.0;
        return Ok(weights);
    }
    let top = rewards[best];
    if top == f64::INFINITY {
        // Only +inf rewards carry mass; split it evenly between them.
        let count = rewards.iter().filter(|&&r| r == f64::INFINITY).count() as f64;
        for (w, &r) in weights.iter_mut().zip(rewards) {
            if r == f64::INFINITY {
                *w = 1.0 / count;
            }
        }
        return Ok(weights);
    }
    let mut total = 0.0;
    for (w, &r) in weights.iter_mut().zip(rewards) {
        if !r.is_nan() {
            *w = ((r - top) / temperature).exp();
            total += *w;
        }
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Draws one candidate with probability proportional to its softmax weight.
///
/// Returns the index and the selected value.
pub fn reward_weighted_select(
    samples: &[f64],
    mu_r: f64,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<(usize, f64)> {
    if samples.is_empty() {
        return Err(Error::config("need at least one sample"));
    }
    let rewards: Vec<f64> = samples.iter().map(|&y| quadratic_reward(y, mu_r)).collect();
    let weights = softmax_weights(&rewards, temperature)?;
    let idx = if temperature == 0.0 {
        argmax_reward(&rewards).ok_or(Error::NoFiniteReward)?
    } else {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = None;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave `acc` a hair below 1; fall back to the last
        // candidate with positive weight.
        pick.unwrap_or_else(|| weights.iter().rposition(|&w| w > 0.0).unwrap_or(0))
    };
    Ok((idx, samples[idx]))
}

/// Softmax-weighted average of `losses` under quadratic rewards of `samples`.
///
/// This is the conditional expectation of the selected loss given the draws.
pub fn weighted_loss(samples: &[f64], losses: &[f64], mu_r: f64, temperature: f64) -> Result<f64> {
    let rewards: Vec<f64> = samples.iter().map(|&y| quadratic_reward(y, mu_r)).collect();
    let weights = softmax_weights(&rewards, temperature)?;
    Ok(weights.iter().zip(losses).map(|(w, l)| w * l).sum())
}
