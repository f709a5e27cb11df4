//! Monte Carlo estimation of the generalization error
//!
//! ```text
//! delta(x) = E_{y_1..y_k ~ N(m, s^2)} [ sum_i q_i (y_i - mu_T)^2 ],
//! q = softmax(-(y - mu_R)^2 / T),     delta = E_x delta(x).
//! ```
//!
//! Everything is expressed through the offsets `Delta_T = m - mu_T` and
//! `Delta_R = m - mu_R`, so that `y - mu_T = Delta_T + s z` with `z ~ N(0, 1)`.
//!
//! One inner batch draws `k_max` standard normals and reuses them for every
//! reward target, temperature and prefix length `k` of the grid. Running the
//! softmax incrementally over the prefix gives all `k` values in one pass.
//! Each test point owns its inference stream, so results do not depend on
//! how points are scheduled across threads.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::det_equiv::{de_moments, DetEquiv};
use crate::error::{Error, Result};
use crate::model::{
    generate_dataset, resolve_reward, sample_teacher, ModelConfig, RewardSpec, WeightVector,
};
use crate::posterior::{fit_posterior, Posterior, PredictiveMoments};
use crate::rng::{stream, Purpose, StreamRng};
use crate::sampler::SamplerConfig;
use crate::stats::mean_stderr;

pub const DEFAULT_N_OUTER: usize = 2000;
pub const DEFAULT_N_INNER: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    ExactPosterior,
    DetEquiv,
    Judge,
}

impl EstimatorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorMode::ExactPosterior => "exact_posterior",
            EstimatorMode::DetEquiv => "det_equiv",
            EstimatorMode::Judge => "judge",
        }
    }
}

impl std::fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub mode: EstimatorMode,
}

/// Predictive offsets at one test input.
#[derive(Clone, Debug, PartialEq)]
pub struct TestPoint {
    /// m(x) - mu_T(x).
    pub delta_t: f64,
    /// s^2(x).
    pub s2: f64,
    /// m(x) - mu_R(x), one entry per reward target.
    pub delta_r: Vec<f64>,
    /// Index of this point's inference stream.
    pub stream_index: u64,
}

impl TestPoint {
    pub fn new(delta_t: f64, s2: f64, delta_r: Vec<f64>, stream_index: u64) -> Self {
        TestPoint {
            delta_t,
            s2,
            delta_r,
            stream_index,
        }
    }

    pub fn from_moments(m: PredictiveMoments, mu_t: f64, mu_r: &[f64], stream_index: u64) -> Self {
        TestPoint {
            delta_t: m.mean - mu_t,
            s2: m.variance,
            delta_r: mu_r.iter().map(|r| m.mean - r).collect(),
            stream_index,
        }
    }
}

/// `n` inputs from N(0, S^2 I), one per row.
pub fn draw_test_inputs(config: &ModelConfig, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, config.d);
    for i in 0..n {
        for j in 0..config.d {
            out[(i, j)] = config.cov_scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub enum Predictor {
    Exact(Posterior),
    DetEquiv(DetEquiv),
}

/// A teacher together with the predictive it induces.
///
/// `replicate` selects independent teacher, dataset and test-input streams
/// under the same master seed.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ModelConfig,
    pub teacher: WeightVector,
    pub predictor: Predictor,
    /// Renormalized ridge of the configuration (infinite without data).
    pub ridge: f64,
    pub seed: u64,
    pub replicate: u64,
}

fn config_ridge(config: &ModelConfig) -> Result<(f64, Option<DetEquiv>)> {
    match config.alpha() {
        None => Ok((f64::INFINITY, None)),
        Some(_) => {
            let de = DetEquiv::for_config(config)?;
            Ok((de.ridge, Some(de)))
        }
    }
}

impl Scenario {
    pub fn build(
        config: &ModelConfig,
        mode: EstimatorMode,
        seed: u64,
        replicate: u64,
    ) -> Result<Self> {
        config.validate()?;
        let teacher = sample_teacher(config, &mut stream(seed, Purpose::Teacher, replicate));
        Scenario::with_teacher(config, teacher, mode, seed, replicate)
    }

    /// Uses a given teacher; the dataset comes from the data stream of
    /// `(seed, replicate)`.
    pub fn with_teacher(
        config: &ModelConfig,
        teacher: WeightVector,
        mode: EstimatorMode,
        seed: u64,
        replicate: u64,
    ) -> Result<Self> {
        config.validate()?;
        if teacher.len() != config.d {
            return Err(Error::Dimension {
                expected: config.d,
                got: teacher.len(),
            });
        }
        let (ridge, de) = config_ridge(config)?;
        let predictor = match mode {
            EstimatorMode::ExactPosterior => {
                let data = generate_dataset(
                    config,
                    &teacher,
                    &mut stream(seed, Purpose::Data, replicate),
                )?;
                Predictor::Exact(fit_posterior(&data, config)?)
            }
            EstimatorMode::DetEquiv => Predictor::DetEquiv(
                de.ok_or_else(|| Error::domain("deterministic-equivalent mode needs n > 0"))?,
            ),
            EstimatorMode::Judge => {
                return Err(Error::domain("judge mode has no predictive model"));
            }
        };
        Ok(Scenario {
            config: config.clone(),
            teacher,
            predictor,
            ridge,
            seed,
            replicate,
        })
    }

    pub fn mode(&self) -> EstimatorMode {
        match self.predictor {
            Predictor::Exact(_) => EstimatorMode::ExactPosterior,
            Predictor::DetEquiv(_) => EstimatorMode::DetEquiv,
        }
    }

    pub fn reward_weights(&self, specs: &[RewardSpec]) -> Result<Vec<WeightVector>> {
        specs
            .iter()
            .map(|s| resolve_reward(s, &self.teacher, self.ridge, self.config.cov_scale))
            .collect()
    }

    /// Predictive moments and `m - mu_T` at `x`.
    pub fn moments(&self, x: &[f64]) -> Result<(PredictiveMoments, f64)> {
        match &self.predictor {
            Predictor::Exact(post) => {
                let m = post.predictive_moments(x)?;
                Ok((m, post.mean_offset(x, &self.teacher)))
            }
            Predictor::DetEquiv(de) => {
                let m = de_moments(x, &self.teacher, de, &self.config)?;
                Ok((m, de.mean_offset(x, &self.teacher)))
            }
        }
    }

    /// Offsets at `n_outer` fresh test inputs for each reward weight.
    pub fn test_points(&self, rewards: &[WeightVector], n_outer: usize) -> Result<Vec<TestPoint>> {
        let xs = draw_test_inputs(
            &self.config,
            n_outer,
            &mut stream(self.seed, Purpose::TestInputs, self.replicate),
        );
        let gaps: Vec<Vec<f64>> = rewards
            .iter()
            .map(|w| {
                if w.len() != self.config.d {
                    return Err(Error::Dimension {
                        expected: self.config.d,
                        got: w.len(),
                    });
                }
                Ok(w.as_slice()
                    .iter()
                    .zip(self.teacher.as_slice())
                    .map(|(r, t)| r - t)
                    .collect())
            })
            .collect::<Result<_>>()?;
        let sqrt_d = (self.config.d as f64).sqrt();
        let mut points = Vec::with_capacity(n_outer);
        let mut x = vec![0.0; self.config.d];
        for i in 0..n_outer {
            for (j, v) in x.iter_mut().enumerate() {
                *v = xs[(i, j)];
            }
            let (m, delta_t) = self.moments(&x)?;
            // m - mu_R = (m - mu_T) - (w_R - w_T) . x / sqrt(d)
            let delta_r = gaps
                .iter()
                .map(|g| delta_t - g.iter().zip(&x).map(|(g, x)| g * x).sum::<f64>() / sqrt_d)
                .collect();
            points.push(TestPoint::new(
                delta_t,
                m.variance,
                delta_r,
                (self.replicate << 32) | i as u64,
            ));
        }
        Ok(points)
    }
}

/// Test points pooled over `replicates` independent teachers and datasets.
pub fn pooled_points(
    config: &ModelConfig,
    mode: EstimatorMode,
    specs: &[RewardSpec],
    n_outer: usize,
    seed: u64,
    replicates: u64,
) -> Result<Vec<TestPoint>> {
    let mut all = Vec::with_capacity(n_outer * replicates as usize);
    for r in 0..replicates {
        let scenario = Scenario::build(config, mode, seed, r)?;
        let rewards = scenario.reward_weights(specs)?;
        all.extend(scenario.test_points(&rewards, n_outer)?);
    }
    Ok(all)
}

/// Estimates over a (reward target, temperature, k) grid sharing random numbers.
#[derive(Clone, Debug)]
pub struct GridEstimate {
    pub n_rewards: usize,
    pub temperatures: Vec<f64>,
    pub ks: Vec<usize>,
    pub n_inner: usize,
    pub mode: EstimatorMode,
    /// Per-point means, `points x cells`, cells ordered (reward, T, k).
    per_point: Vec<f64>,
    n_points: usize,
}

impl GridEstimate {
    fn n_cells(&self) -> usize {
        self.n_rewards * self.temperatures.len() * self.ks.len()
    }

    pub fn cell(&self, reward: usize, temp: usize, k: usize) -> usize {
        (reward * self.temperatures.len() + temp) * self.ks.len() + k
    }

    pub fn n_outer(&self) -> usize {
        self.n_points
    }

    /// Per-point delta(x) estimates of one cell.
    pub fn point_values(&self, cell: usize) -> Vec<f64> {
        let stride = self.n_cells();
        (0..self.n_points)
            .map(|p| self.per_point[p * stride + cell])
            .collect()
    }

    pub fn estimate(&self, reward: usize, temp: usize, k: usize) -> ErrorEstimate {
        let (mean, stderr) = mean_stderr(&self.point_values(self.cell(reward, temp, k)));
        ErrorEstimate {
            mean,
            stderr,
            n_outer: self.n_points,
            n_inner: self.n_inner,
            mode: self.mode,
        }
    }

    /// Mean and standard error of the difference between two cells, paired
    /// over test points.
    pub fn paired_difference(&self, a: usize, b: usize) -> (f64, f64) {
        let va = self.point_values(a);
        let vb = self.point_values(b);
        let diff: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x - y).collect();
        mean_stderr(&diff)
    }
}

struct PrefixKernel<'a> {
    temperatures: &'a [f64],
    ks: &'a [usize],
    n_rewards: usize,
}

impl PrefixKernel<'_> {
    fn k_max(&self) -> usize {
        *self.ks.last().unwrap()
    }

    /// Batch means and batch second moments for every cell at one point.
    fn run(
        &self,
        p: &TestPoint,
        n_inner: usize,
        rng: &mut StreamRng,
        sum: &mut [f64],
        sumsq: &mut [f64],
    ) {
        let k_max = self.k_max();
        let s = p.s2.sqrt();
        let mut z = vec![0.0; k_max];
        let mut loss = vec![0.0; k_max];
        let mut reward = vec![0.0; k_max];
        let n_t = self.temperatures.len();
        let n_k = self.ks.len();
        for _ in 0..n_inner {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for (l, z) in loss.iter_mut().zip(&z) {
                let e = p.delta_t + s * z;
                *l = e * e;
            }
            for r in 0..self.n_rewards {
                let dr = p.delta_r[r];
                for (q, z) in reward.iter_mut().zip(&z) {
                    let e = dr + s * z;
                    *q = -e * e;
                }
                for (ti, &t) in self.temperatures.iter().enumerate() {
                    let base = (r * n_t + ti) * n_k;
                    let mut record = |j: usize, v: f64| {
                        sum[base + j] += v;
                        sumsq[base + j] += v * v;
                    };
                    let mut next = 0;
                    if t == 0.0 {
                        let mut best = 0;
                        for i in 0..k_max {
                            if reward[i] > reward[best] {
                                best = i;
                            }
                            if i + 1 == self.ks[next] {
                                record(next, loss[best]);
                                next += 1;
                            }
                        }
                    } else {
                        let mut top = f64::NEG_INFINITY;
                        let (mut s0, mut s1) = (0.0, 0.0);
                        for i in 0..k_max {
                            let q = reward[i];
                            if q > top {
                                let f = ((top - q) / t).exp();
                                s0 *= f;
                                s1 *= f;
                                top = q;
                            }
                            let w = ((q - top) / t).exp();
                            s0 += w;
                            s1 += w * loss[i];
                            if i + 1 == self.ks[next] {
                                record(next, s1 / s0);
                                next += 1;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_grid(temperatures: &[f64], ks: &[usize], n_inner: usize) -> Result<()> {
    if ks.is_empty() || temperatures.is_empty() {
        return Err(Error::config("k and temperature grids must be non-empty"));
    }
    if ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(
            "k grid must be strictly increasing and start at >= 1",
        ));
    }
    if temperatures.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::config("temperatures must be >= 0"));
    }
    if n_inner == 0 {
        return Err(Error::config("n_inner must be >= 1"));
    }
    Ok(())
}

/// Monte Carlo delta(x) for every point and grid cell.
///
/// `ks` must be strictly increasing; points may carry any number of reward
/// targets as long as it is the same for all of them.
pub fn estimate_grid(
    points: &[TestPoint],
    temperatures: &[f64],
    ks: &[usize],
    n_inner: usize,
    seed: u64,
    mode: EstimatorMode,
) -> Result<GridEstimate> {
    check_grid(temperatures, ks, n_inner)?;
    let n_rewards = points.first().map_or(0, |p| p.delta_r.len());
    if points.iter().any(|p| p.delta_r.len() != n_rewards) {
        return Err(Error::config(
            "all test points need the same reward targets",
        ));
    }
    if points
        .iter()
        .any(|p| !(p.s2 > 0.0) || !p.delta_t.is_finite())
    {
        return Err(Error::NonFinite("predictive moments"));
    }
    let kernel = PrefixKernel {
        temperatures,
        ks,
        n_rewards,
    };
    let n_cells = n_rewards * temperatures.len() * ks.len();
    let per_point: Vec<Vec<f64>> = points
        .par_iter()
        .map(|p| {
            let mut rng = stream(seed, Purpose::Inference, p.stream_index);
            let mut sum = vec![0.0; n_cells];
            let mut sumsq = vec![0.0; n_cells];
            kernel.run(p, n_inner, &mut rng, &mut sum, &mut sumsq);
            sum.iter().map(|v| v / n_inner as f64).collect()
        })
        .collect();
    Ok(GridEstimate {
        n_rewards,
        temperatures: temperatures.to_vec(),
        ks: ks.to_vec(),
        n_inner,
        mode,
        per_point: per_point.concat(),
        n_points: points.len(),
    })
}

/// delta(x) at a single point: mean and standard error over `n_inner`
/// independent batches of `k` draws from N(m, s^2).
pub fn delta_x(
    moments: PredictiveMoments,
    mu_t: f64,
    mu_r: f64,
    sc: SamplerConfig,
    n_inner: usize,
    rng: &mut StreamRng,
) -> Result<(f64, f64)> {
    check_grid(&[sc.temperature], &[sc.k], n_inner)?;
    if !(moments.variance > 0.0) {
        return Err(Error::domain("predictive variance must be positive"));
    }
    let p = TestPoint::from_moments(moments, mu_t, &[mu_r], 0);
    let kernel = PrefixKernel {
        temperatures: &[sc.temperature],
        ks: &[sc.k],
        n_rewards: 1,
    };
    let mut values = Vec::with_capacity(n_inner);
    for _ in 0..n_inner {
        let (mut s, mut q) = ([0.0], [0.0]);
        kernel.run(&p, 1, rng, &mut s, &mut q);
        values.push(s[0]);
    }
    Ok(mean_stderr(&values))
}

/// Generalization error for one reward and sampler setting, teacher and
/// dataset drawn from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn delta(
    config: &ModelConfig,
    reward: &RewardSpec,
    sc: SamplerConfig,
    n_outer: usize,
    n_inner: usize,
    mode: EstimatorMode,
    seed: u64,
) -> Result<ErrorEstimate> {
    if n_outer == 0 {
        return Err(Error::config("n_outer must be >= 1"));
    }
    let scenario = Scenario::build(config, mode, seed, 0)?;
    let rewards = scenario.reward_weights(std::slice::from_ref(reward))?;
    let points = scenario.test_points(&rewards, n_outer)?;
    let grid = estimate_grid(&points, &[sc.temperature], &[sc.k], n_inner, seed, mode)?;
    Ok(grid.estimate(0, 0, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn rng(i: u64) -> StreamRng {
        stream(99, Purpose::Inference, i)
    }

    fn pm(mean: f64, variance: f64) -> PredictiveMoments {
        PredictiveMoments { mean, variance }
    }

    #[test]
    fn single_draw_is_plain_second_moment() {
        let (m, s2, mu_t) = (0.3, 0.49, -0.4);
        for (i, t) in [0.0, 0.01, 1.0, 100.0].into_iter().enumerate() {
            let sc = SamplerConfig::new(1, t).unwrap();
            let (est, se) = delta_x(pm(m, s2), mu_t, 2.0, sc, 100_000, &mut rng(i as u64)).unwrap();
            let truth = (m - mu_t).powi(2) + s2;
            assert!(
                (est - truth).abs() < 4.0 * se,
                "T={t}: {est} vs {truth} (se {se})"
            );
        }
    }

    #[test]
    fn huge_temperature_is_uniform() {
        let sc = SamplerConfig::new(8, 1e12).unwrap();
        let (est, se) = delta_x(pm(0.5, 1.0), 0.0, -3.0, sc, 50_000, &mut rng(7)).unwrap();
        let truth = 0.25 + 1.0;
        assert!((est - truth).abs() < 4.0 * se, "{est} vs {truth}");
    }

    /// Gauss-Hermite nodes and weights for the weight e^{-x^2} (Golub-Welsch).
    fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut j = DMatrix::zeros(n, n);
        for i in 1..n {
            let b = (i as f64 / 2.0).sqrt();
            j[(i, i - 1)] = b;
            j[(i - 1, i)] = b;
        }
        let eig = SymmetricEigen::new(j);
        let mu0 = std::f64::consts::PI.sqrt();
        let w = (0..n)
            .map(|i| mu0 * eig.eigenvectors[(0, i)].powi(2))
            .collect();
        (eig.eigenvalues.iter().copied().collect(), w)
    }

    #[test]
    fn two_samples_match_quadrature() {
        let (nodes, weights) = gauss_hermite(200);
        // y = sqrt(2) x turns e^{-x^2} into the standard normal density.
        let mut oracle = 0.0;
        for (x1, w1) in nodes.iter().zip(&weights) {
            for (x2, w2) in nodes.iter().zip(&weights) {
                let (y1, y2) = (2f64.sqrt() * x1, 2f64.sqrt() * x2);
                let (a, b) = ((-y1 * y1 / 2.0).exp(), (-y2 * y2 / 2.0).exp());
                oracle += w1 * w2 * (y1 * y1 * a + y2 * y2 * b) / (a + b);
            }
        }
        oracle /= std::f64::consts::PI;
        let sc = SamplerConfig::new(2, 2.0).unwrap();
        let (est, _) = delta_x(pm(0.0, 1.0), 0.0, 0.0, sc, 400_000, &mut rng(3)).unwrap();
        assert!((est - oracle).abs() < 0.01 * oracle, "{est} vs {oracle}");
    }

    #[test]
    fn zero_temperature_picks_best_reward() {
        // With mu_R far below, the smallest draw wins; compare to a direct scan.
        let p = TestPoint::new(0.0, 1.0, vec![5.0], 0);
        let ks = [1, 3, 7];
        let g = estimate_grid(
            std::slice::from_ref(&p),
            &[0.0],
            &ks,
            1,
            11,
            EstimatorMode::DetEquiv,
        )
        .unwrap();
        let mut r = stream(11, Purpose::Inference, 0);
        let z: Vec<f64> = (0..7).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        for (j, &k) in ks.iter().enumerate() {
            let mut best = 0;
            for i in 0..k {
                if -(5.0 + z[i]).powi(2) > -(5.0 + z[best]).powi(2) {
                    best = i;
                }
            }
            assert_eq!(g.point_values(g.cell(0, 0, j))[0], z[best] * z[best]);
        }
    }

    #[test]
    fn prefix_grid_matches_separate_runs() {
        let p = TestPoint::new(0.2, 0.5, vec![-0.1, 0.7], 5);
        let ks = [1, 2, 5, 9];
        let temps = [0.0, 0.3, 4.0];
        let g = estimate_grid(
            std::slice::from_ref(&p),
            &temps,
            &ks,
            3,
            1,
            EstimatorMode::DetEquiv,
        )
        .unwrap();
        let mut r = stream(1, Purpose::Inference, 5);
        let s = 0.5f64.sqrt();
        let mut batches = Vec::new();
        for _ in 0..3 {
            batches.push(
                (0..9)
                    .map(|_| r.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>(),
            );
        }
        for (ri, dr) in [-0.1, 0.7].into_iter().enumerate() {
            for (ti, &t) in temps.iter().enumerate() {
                for (ki, &k) in ks.iter().enumerate() {
                    let mut acc = 0.0;
                    for z in &batches {
                        let ys: Vec<f64> = z[..k].iter().map(|z| s * z).collect();
                        let losses: Vec<f64> = ys.iter().map(|y| (0.2 + y).powi(2)).collect();
                        let shifted: Vec<f64> = ys.iter().map(|y| y + dr).collect();
                        acc += crate::sampler::weighted_loss(&shifted, &losses, 0.0, t).unwrap();
                    }
                    let got = g.point_values(g.cell(ri, ti, ki))[0];
                    let want = acc / 3.0;
                    assert!(
                        (got - want).abs() <= 1e-12 * want.max(1.0),
                        "{got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn prior_predictive_error() {
        let cfg = ModelConfig {
            d: 6,
            n: 0,
            sigma: 0.3,
            gamma: 0.8,
            tau: 0.0,
            ..ModelConfig::default()
        };
        let sc = SamplerConfig::new(4, 1e12).unwrap();
        let est = delta(
            &cfg,
            &RewardSpec::aligned(),
            sc,
            4000,
            20,
            EstimatorMode::ExactPosterior,
            3,
        )
        .unwrap();
        let truth = 0.8f64.powi(2) + 0.09;
        assert!(
            (est.mean - truth).abs() < 4.0 * est.stderr,
            "{est:?} vs {truth}"
        );
    }

    #[test]
    fn estimate_is_deterministic_and_thread_independent() {
        let cfg = ModelConfig {
            d: 5,
            n: 50,
            sigma: 0.1,
            gamma: 1.0,
            ..ModelConfig::default()
        };
        let points = pooled_points(
            &cfg,
            EstimatorMode::ExactPosterior,
            &[RewardSpec::aligned()],
            64,
            4,
            2,
        )
        .unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    estimate_grid(
                        &points,
                        &[0.0, 0.05],
                        &[1, 4, 16],
                        10,
                        4,
                        EstimatorMode::ExactPosterior,
                    )
                    .unwrap()
                })
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.per_point, b.per_point);
        assert_eq!(a.estimate(0, 1, 2), b.estimate(0, 1, 2));
    }

    #[test]
    fn grid_validation() {
        let p = TestPoint::new(0.0, 1.0, vec![0.0], 0);
        let one = std::slice::from_ref(&p);
        let mode = EstimatorMode::DetEquiv;
        assert!(estimate_grid(one, &[1.0], &[2, 2], 1, 0, mode).is_err());
        assert!(estimate_grid(one, &[1.0], &[0, 2], 1, 0, mode).is_err());
        assert!(estimate_grid(one, &[-1.0], &[1], 1, 0, mode).is_err());
        assert!(estimate_grid(one, &[1.0], &[1], 0, 0, mode).is_err());
    }

    #[test]
    fn de_mode_needs_data() {
        let cfg = ModelConfig {
            n: 0,
            ..ModelConfig::default()
        };
        assert!(Scenario::build(&cfg, EstimatorMode::DetEquiv, 0, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn estimates_are_nonnegative(
            dt in -2.0f64..2.0, dr in -2.0f64..2.0, s2 in 0.01f64..4.0, t in 0.0f64..3.0,
        ) {
            let p = TestPoint::new(dt, s2, vec![dr], 0);
            let g = estimate_grid(std::slice::from_ref(&p), &[t], &[1, 3, 10], 5, 0, EstimatorMode::DetEquiv).unwrap();
            for k in 0..3 {
                proptest::prop_assert!(g.estimate(0, 0, k).mean >= 0.0);
            }
        }
    }
}
