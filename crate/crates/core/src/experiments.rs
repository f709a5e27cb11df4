//! Sweep drivers: each runs one family of simulations and returns a CSV table
//! with Monte Carlo estimates next to the matching closed-form predictions.

use serde::Serialize;

use crate::det_equiv::{noise_variance_check, DetEquiv, NOISE_VALIDITY_MARGIN};
use crate::error::{Error, Result};
use crate::gen_error::{estimate_grid, EstimatorMode, GridEstimate, Scenario, TestPoint};
use crate::judge::JudgeRow;
use crate::model::{ModelConfig, RewardSpec, WeightVector};
use crate::stats::{argmin, classify, Shape};
use crate::table::{Cell, Table, JUDGE_COLUMNS};
use crate::theory::{
    best_of_k_delta, dlogn_closed_form, high_t_delta, optimal_k, optimal_radial_c,
    optimal_temperature, refined_best_of_k_delta, scaling_derivatives, SeriesTerms,
};

/// Shared settings of a simulation sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Experiment {
    pub model: ModelConfig,
    pub seed: u64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub mode: EstimatorMode,
    /// Independent teacher and dataset draws pooled into one estimate; 1
    /// conditions on a single teacher and dataset.
    pub replicates: u64,
}

impl Experiment {
    pub fn new(model: ModelConfig, seed: u64) -> Self {
        Experiment {
            model,
            seed,
            n_outer: crate::gen_error::DEFAULT_N_OUTER,
            n_inner: crate::gen_error::DEFAULT_N_INNER,
            mode: EstimatorMode::ExactPosterior,
            replicates: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_outer == 0 || self.n_inner == 0 || self.replicates == 0 {
            return Err(Error::config(
                "n_outer, n_inner and replicates must be >= 1",
            ));
        }
        Ok(())
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        self.validate()?;
        (0..self.replicates)
            .map(|r| Scenario::build(&self.model, self.mode, self.seed, r))
            .collect()
    }

    /// Test points pooled over replicates, plus the teachers they came from.
    pub fn points(&self, specs: &[RewardSpec]) -> Result<(Vec<TestPoint>, Vec<WeightVector>)> {
        let mut points = Vec::new();
        let mut teachers = Vec::new();
        for sc in self.scenarios()? {
            let rewards = sc.reward_weights(specs)?;
            points.extend(sc.test_points(&rewards, self.n_outer)?);
            teachers.push(sc.teacher.clone());
        }
        Ok((points, teachers))
    }

    fn grid(&self, points: &[TestPoint], temps: &[f64], ks: &[usize]) -> Result<GridEstimate> {
        estimate_grid(points, temps, ks, self.n_inner, self.seed, self.mode)
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        mode: &str,
        k: Option<usize>,
        temperature: f64,
        c: f64,
        theta: f64,
        delta: f64,
        stderr: f64,
        simulated: bool,
    ) -> Vec<Cell> {
        let m = &self.model;
        vec![
            mode.into(),
            m.d.into(),
            m.n.into(),
            m.cov_scale.into(),
            m.sigma.into(),
            m.gamma.into(),
            k.into(),
            temperature.into(),
            c.into(),
            theta.into(),
            delta.into(),
            stderr.into(),
            simulated
                .then_some(self.n_outer * self.replicates as usize)
                .into(),
            simulated.then_some(self.n_inner).into(),
            self.seed.into(),
        ]
    }
}

fn sorted_ks(ks: &[usize]) -> Result<Vec<usize>> {
    let mut v = ks.to_vec();
    v.sort_unstable();
    v.dedup();
    if v.first() == Some(&0) || v.is_empty() {
        return Err(Error::config("k grid must be non-empty with k >= 1"));
    }
    Ok(v)
}

fn radial(cs: &[f64]) -> Vec<RewardSpec> {
    cs.iter().map(|&c| RewardSpec::RadialC { c }).collect()
}

fn opt_f64(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// delta against k for each (c, T), with the high-temperature series, the
/// best-of-k law and the predicted optimal k. Theory rows follow the
/// simulated ones with `mode` set to `theory_highT` or `theory_bestofk`.
pub fn sweep_k(exp: &Experiment, cs: &[f64], temps: &[f64], ks: &[usize]) -> Result<Table> {
    let ks = sorted_ks(ks)?;
    let (points, _) = exp.points(&radial(cs))?;
    let grid = exp.grid(&points, temps, &ks)?;
    let mut table = Table::sweep(&["theory_highT", "theory_bestofk", "k_opt", "t_bar"]);
    let mut theory_rows = Vec::new();
    for (ri, &c) in cs.iter().enumerate() {
        for (ti, &t) in temps.iter().enumerate() {
            let st = if t > 0.0 {
                Some(SeriesTerms::averaged(&points, ri, t)?)
            } else {
                None
            };
            let k_opt = st.as_ref().and_then(optimal_k);
            for (ki, &k) in ks.iter().enumerate() {
                let est = grid.estimate(ri, ti, ki);
                let high = if t > 0.0 {
                    high_t_delta(&points, ri, t, k)?
                } else {
                    f64::NAN
                };
                let best = if t == 0.0 && c == 0.0 {
                    best_of_k_delta(&points, k)?
                } else {
                    f64::NAN
                };
                let mut row = exp.row(
                    exp.mode.as_str(),
                    Some(k),
                    t,
                    c,
                    f64::NAN,
                    est.mean,
                    est.stderr,
                    true,
                );
                row.extend([
                    high.into(),
                    best.into(),
                    k_opt.into(),
                    st.map(|s| s.t).into(),
                ]);
                table.push(row)?;
                let (label, value) = if t > 0.0 {
                    ("theory_highT", high)
                } else {
                    ("theory_bestofk", best)
                };
                if !value.is_nan() {
                    let mut row = exp.row(label, Some(k), t, c, f64::NAN, value, f64::NAN, false);
                    row.extend([
                        Cell::Empty,
                        Cell::Empty,
                        k_opt.into(),
                        st.map(|s| s.t).into(),
                    ]);
                    theory_rows.push(row);
                }
            }
        }
    }
    for row in theory_rows {
        table.push(row)?;
    }
    Ok(table)
}

/// delta against T at fixed k, with the predicted optimal temperature from
/// series coefficients averaged over test points.
pub fn sweep_t(exp: &Experiment, k: usize, cs: &[f64], temps: &[f64]) -> Result<Table> {
    if temps.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::config("temperature sweep needs T > 0"));
    }
    let (points, _) = exp.points(&radial(cs))?;
    let grid = exp.grid(&points, temps, &[k])?;
    let mut table = Table::sweep(&["theory_highT", "T_opt", "t_bar"]);
    for (ri, &c) in cs.iter().enumerate() {
        let t_opt = opt_f64(
            SeriesTerms::averaged(&points, ri, 1.0).and_then(|st| optimal_temperature(&st, k)),
        );
        for (ti, &t) in temps.iter().enumerate() {
            let est = grid.estimate(ri, ti, 0);
            let st = SeriesTerms::averaged(&points, ri, t)?;
            let mut row = exp.row(
                exp.mode.as_str(),
                Some(k),
                t,
                c,
                f64::NAN,
                est.mean,
                est.stderr,
                true,
            );
            row.extend([
                high_t_delta(&points, ri, t, k)?.into(),
                t_opt.into(),
                st.t.into(),
            ]);
            table.push(row)?;
        }
    }
    Ok(table)
}

/// delta against the radial misalignment c at fixed k for each T, with the
/// optimal `c = k/(k-2) t` at the averaged `t`.
pub fn sweep_c(exp: &Experiment, k: usize, temps: &[f64], cs: &[f64]) -> Result<Table> {
    let (points, _) = exp.points(&radial(cs))?;
    let grid = exp.grid(&points, temps, &[k])?;
    let mut table = Table::sweep(&["theory_highT", "c_opt", "t_bar"]);
    for (ti, &t) in temps.iter().enumerate() {
        for (ri, &c) in cs.iter().enumerate() {
            let est = grid.estimate(ri, ti, 0);
            let (high, c_opt, t_bar) = if t > 0.0 {
                let st = SeriesTerms::averaged(&points, ri, t)?;
                (
                    high_t_delta(&points, ri, t, k)?,
                    opt_f64(optimal_radial_c(k, st.t)),
                    st.t,
                )
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            let mut row = exp.row(
                exp.mode.as_str(),
                Some(k),
                t,
                c,
                f64::NAN,
                est.mean,
                est.stderr,
                true,
            );
            row.extend([high.into(), c_opt.into(), t_bar.into()]);
            table.push(row)?;
        }
    }
    Ok(table)
}

/// One row per (T, c, theta) cell of a polar reward grid in `d = 2`.
///
/// `k` and `delta` report the smallest simulated error along the k grid;
/// `label` is `non_monotone` when the curve has an interior minimum that
/// clears `gate` combined standard errors on both sides.
pub fn polar_map(
    exp: &Experiment,
    temps: &[f64],
    cs: &[f64],
    thetas: &[f64],
    ks: &[usize],
    gate: f64,
) -> Result<Table> {
    if exp.model.d != 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: exp.model.d,
        });
    }
    let ks = sorted_ks(ks)?;
    let mut specs = Vec::new();
    for &c in cs {
        for &theta in thetas {
            specs.push(RewardSpec::Polar { c, theta });
        }
    }
    let (points, _) = exp.points(&specs)?;
    let grid = exp.grid(&points, temps, &ks)?;
    let mut table = Table::sweep(&["label", "k_opt"]);
    for (ti, &t) in temps.iter().enumerate() {
        for (ri, spec) in specs.iter().enumerate() {
            let (c, theta) = spec.c_theta();
            let curve: Vec<(f64, f64)> = (0..ks.len())
                .map(|ki| {
                    let e = grid.estimate(ri, ti, ki);
                    (e.mean, e.stderr)
                })
                .collect();
            let means: Vec<f64> = curve.iter().map(|p| p.0).collect();
            let best = argmin(&means).ok_or(Error::NonFinite("polar curve"))?;
            let label: Shape = classify(&curve, gate);
            let k_opt = if t > 0.0 {
                optimal_k(&SeriesTerms::averaged(&points, ri, t)?)
            } else {
                None
            };
            let mut row = exp.row(
                exp.mode.as_str(),
                Some(ks[best]),
                t,
                c,
                theta,
                curve[best].0,
                curve[best].1,
                true,
            );
            row.extend([label.as_str().into(), k_opt.into()]);
            table.push(row)?;
        }
    }
    Ok(table)
}

/// Aligned-reward delta over an (n, T, k) grid with the log-derivatives of
/// the refined best-of-k law and its closed-form n-derivative. Derivatives
/// and the refined law are averaged over the replicate teachers.
pub fn tradeoff(exp: &Experiment, ns: &[usize], temps: &[f64], ks: &[usize]) -> Result<Table> {
    let ks = sorted_ks(ks)?;
    let mut table = Table::sweep(&[
        "dlogk",
        "dlogn",
        "dlogn_closed",
        "theory_refined",
        "in_regime",
    ]);
    for &n in ns {
        let sub = Experiment {
            model: ModelConfig {
                n,
                ..exp.model.clone()
            },
            ..exp.clone()
        };
        let (points, teachers) = sub.points(&[RewardSpec::aligned()])?;
        let grid = sub.grid(&points, temps, &ks)?;
        let de = DetEquiv::for_config(&sub.model)?;
        let m = teachers.len() as f64;
        let mut dlogn = 0.0;
        let mut closed = 0.0;
        for w in &teachers {
            dlogn += opt_f64(scaling_derivatives(&sub.model, &de, w).map(|s| s.dlogn)) / m;
            closed += opt_f64(dlogn_closed_form(&sub.model, w)) / m;
        }
        for (ti, &t) in temps.iter().enumerate() {
            for (ki, &k) in ks.iter().enumerate() {
                let est = grid.estimate(0, ti, ki);
                let (refined, regime) = if t == 0.0 {
                    let mut acc = 0.0;
                    let mut ok = true;
                    for w in &teachers {
                        match refined_best_of_k_delta(&sub.model, &de, w, k) {
                            Ok(r) => {
                                acc += r.value / m;
                                ok &= r.in_regime;
                            }
                            Err(_) => {
                                acc = f64::NAN;
                                ok = false;
                            }
                        }
                    }
                    (acc, Some(ok))
                } else {
                    (f64::NAN, None)
                };
                let mut row = sub.row(
                    sub.mode.as_str(),
                    Some(k),
                    t,
                    0.0,
                    f64::NAN,
                    est.mean,
                    est.stderr,
                    true,
                );
                row.extend([
                    (-2.0).into(),
                    dlogn.into(),
                    closed.into(),
                    refined.into(),
                    regime.into(),
                ]);
                table.push(row)?;
            }
        }
    }
    Ok(table)
}

/// Zero-temperature, aligned-reward check of the `1/k^2` law: `k^2 delta`
/// next to the pointwise asymptote `pi E[s^2 exp(Delta_T^2/s^2)]` and the
/// refined constant.
pub fn bestofk_check(exp: &Experiment, ks: &[usize]) -> Result<Table> {
    let ks = sorted_ks(ks)?;
    let (points, teachers) = exp.points(&[RewardSpec::aligned()])?;
    let grid = exp.grid(&points, &[0.0], &ks)?;
    let de = match exp.model.alpha() {
        Some(_) => Some(DetEquiv::for_config(&exp.model)?),
        None => None,
    };
    let mut table = Table::sweep(&["k2_delta", "k2_stderr", "asymptote", "refined_asymptote"]);
    let m = teachers.len() as f64;
    for (ki, &k) in ks.iter().enumerate() {
        let est = grid.estimate(0, 0, ki);
        let k2 = (k * k) as f64;
        let refined = match &de {
            Some(de) => {
                teachers
                    .iter()
                    .map(|w| {
                        refined_best_of_k_delta(&exp.model, de, w, k).map_or(f64::NAN, |r| r.value)
                    })
                    .sum::<f64>()
                    / m
            }
            None => f64::NAN,
        };
        let mut row = exp.row(
            exp.mode.as_str(),
            Some(k),
            0.0,
            0.0,
            f64::NAN,
            est.mean,
            est.stderr,
            true,
        );
        row.extend([
            (k2 * est.mean).into(),
            (k2 * est.stderr).into(),
            (k2 * best_of_k_delta(&points, k)?).into(),
            (k2 * refined).into(),
        ]);
        table.push(row)?;
    }
    Ok(table)
}

/// One-row table with the renormalized ridge and the noise-variance check.
pub fn ridge_table(model: &ModelConfig) -> Result<Table> {
    model.validate()?;
    let de = DetEquiv::for_config(model)?;
    let chk = noise_variance_check(&de, model.sigma);
    let mut t = Table::new(&[
        "d", "n", "S", "sigma", "gamma", "alpha", "R", "R_hat", "A", "B", "m1", "m2", "var_z",
        "sigma_c", "valid", "margin",
    ]);
    let (var_z, sigma_c, valid) = match &chk {
        Ok(c) => (c.var_z, c.sigma_c(), Some(c.valid)),
        Err(_) => (f64::INFINITY, f64::NAN, Some(false)),
    };
    t.push(vec![
        model.d.into(),
        model.n.into(),
        model.cov_scale.into(),
        model.sigma.into(),
        model.gamma.into(),
        de.alpha.into(),
        de.ridge.into(),
        de.bare_ridge.into(),
        de.a.into(),
        de.b.into(),
        de.m1.into(),
        de.m2.into(),
        var_z.into(),
        sigma_c.into(),
        valid.into(),
        NOISE_VALIDITY_MARGIN.into(),
    ])?;
    Ok(t)
}

/// Judge sweep rows as a table; `accuracy` appends the negated metric.
pub fn judge_table(rows: &[JudgeRow], accuracy: bool) -> Result<Table> {
    let extra: &[&str] = if accuracy { &["accuracy"] } else { &[] };
    let mut t = Table::with_prefix(&JUDGE_COLUMNS, extra);
    for r in rows {
        let mut row: Vec<Cell> = vec![
            r.k.into(),
            r.temperature.into(),
            r.delta.into(),
            r.stderr.into(),
            r.n_questions_used.into(),
            r.n_resample.into(),
            r.seed.into(),
        ];
        if accuracy {
            row.push((-r.delta).into());
        }
        t.push(row)?;
    }
    Ok(t)
}
