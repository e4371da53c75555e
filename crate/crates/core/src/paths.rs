//! Pathwise diagnostics on simulated ensembles: the dyadic time-increment statistic and
//! the weighted distance between two runs driven by one noise path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::montecarlo::par_paths;
use crate::noise::StreamIncrements;
use crate::skeleton::ControlPath;
use crate::stepper::{simulate, simulate_with, Model, SimOptions, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementLevel {
    pub level: usize,
    /// Ensemble mean of `1_G S_N`.
    pub s: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    pub levels: Vec<IncrementLevel>,
    /// Least-squares slope of `log2 S_N` against `N`.
    pub slope: f64,
    pub paths: usize,
    /// Paths inside the radius set.
    pub kept: usize,
}

/// `S_N = sum_k int_{t_{k-1}}^{t_k} l2(theta(s) - theta(t_k))^2 ds` on the step grid, by the
/// trapezoid rule, for a dense trajectory.
pub fn increment_sum(traj: &Trajectory, level: usize) -> Result<f64> {
    if !traj.is_dense() {
        return Err(Error::InvalidParameter("increment statistic needs every step stored".into()));
    }
    let n = traj.snapshots.len() - 1;
    let blocks = 1usize << level;
    if n % blocks != 0 {
        return Err(Error::InvalidParameter(format!("{n} steps cannot be split into {blocks} equal blocks")));
    }
    let per = n / blocks;
    let mut total = 0.0;
    for k in 0..blocks {
        let end = &traj.snapshots[(k + 1) * per].theta;
        for s in k * per..(k + 1) * per {
            let dt = traj.times[s + 1] - traj.times[s];
            let a = traj.snapshots[s].theta.sub(end).l2_sq();
            let b = traj.snapshots[s + 1].theta.sub(end).l2_sq();
            total += 0.5 * dt * (a + b);
        }
    }
    Ok(total)
}

/// Radius test `sup l2^2 + int v2^2 <= radius`.
fn inside(traj: &Trajectory, radius: f64) -> bool {
    let mut sup = traj.initial_l2sq;
    let mut int = 0.0;
    let mut prev = traj.initial_v2sq;
    for m in &traj.monitors {
        sup = sup.max(m.l2sq);
        int += 0.5 * m.dt * (prev + m.v2sq);
        prev = m.v2sq;
    }
    sup + int <= radius
}

/// Ensemble estimate of `E[1_G S_N]` for each level, dropping paths that leave the radius set.
pub fn increment_statistic(
    model: &Model,
    eps: f64,
    control: Option<&ControlPath>,
    levels: &[usize],
    n_paths: usize,
    seed: u64,
    radius: f64,
) -> Result<IncrementReport> {
    if levels.is_empty() || n_paths == 0 {
        return Err(Error::InvalidParameter("need levels and paths".into()));
    }
    if let Some(i) = (1..levels.len()).find(|&i| levels[i] <= levels[i - 1]) {
        return Err(Error::InvalidParameter(format!("levels not ascending at index {i}")));
    }
    let finest = 1usize << levels.last().unwrap();
    if model.n_steps() % finest != 0 {
        return Err(Error::InvalidParameter(format!(
            "step too coarse: {} steps do not resolve level {}",
            model.n_steps(),
            levels.last().unwrap()
        )));
    }
    let rows = par_paths(n_paths, |i| {
        let traj = simulate(model, eps, control, seed, i, SimOptions { snapshot_stride: 1 })?;
        let keep = inside(&traj, radius);
        let s: Result<Vec<f64>> = levels.iter().map(|&l| increment_sum(&traj, l)).collect();
        Ok((keep, s?))
    })?;
    let nf = n_paths as f64;
    let kept = rows.iter().filter(|r| r.0).count();
    let mut out = Vec::with_capacity(levels.len());
    for (li, &level) in levels.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| if r.0 { r.1[li] } else { 0.0 }).collect();
        let mean = vals.iter().sum::<f64>() / nf;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
        out.push(IncrementLevel { level, s: mean, standard_error: (var / nf).sqrt() });
    }
    let slope = log2_slope(&out);
    Ok(IncrementReport { levels: out, slope, paths: n_paths, kept })
}

fn log2_slope(levels: &[IncrementLevel]) -> f64 {
    let pts: Vec<(f64, f64)> = levels.iter().filter(|l| l.s > 0.0).map(|l| (l.level as f64, l.s.log2())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    /// `phi(t) l2(theta_a - theta_b)^2` with `phi = exp(-weight int v2(theta_b)^2)`.
    pub d: Vec<f64>,
    pub weight: f64,
    /// Largest step increase of `d` beyond the allowance, relative to `d(0)`.
    pub max_excess: f64,
    pub monotone: bool,
}

/// Runs both initial states on the same noise path and audits the weighted distance.
/// A step may raise `d` by the noise Lipschitz allowance `eps L dt d` plus `tol d(0)`.
pub fn pathwise_stability(
    model: &Model,
    theta0_a: &ScalarField,
    theta0_b: &ScalarField,
    eps: f64,
    seed: u64,
    weight: f64,
    tol: f64,
) -> Result<StabilityReport> {
    if !(weight >= 0.0) {
        return Err(Error::InvalidParameter("stability weight must be non-negative".into()));
    }
    let dense = SimOptions { snapshot_stride: 1 };
    let ta = simulate(&model.with_theta0(theta0_a.clone())?, eps, None, seed, 0, dense)?;
    let tb = simulate(&model.with_theta0(theta0_b.clone())?, eps, None, seed, 0, dense)?;
    let mut d = Vec::with_capacity(ta.times.len());
    let mut int = 0.0;
    let mut prev = tb.initial_v2sq;
    d.push(theta0_a.sub(theta0_b).l2_sq());
    for (k, m) in tb.monitors.iter().enumerate() {
        int += 0.5 * m.dt * (prev + m.v2sq);
        prev = m.v2sq;
        let diff = ta.snapshots[k + 1].theta.sub(&tb.snapshots[k + 1].theta).l2_sq();
        d.push((-weight * int).exp() * diff);
    }
    let d0 = d[0];
    let l = model.noise.declared.l;
    let mut max_excess = 0.0f64;
    for k in 1..d.len() {
        let allowed = d[k - 1] * (1.0 + eps * l * model.dt);
        let excess = d[k] - allowed;
        if d0 > 0.0 {
            max_excess = max_excess.max(excess / d0);
        } else {
            max_excess = max_excess.max(excess);
        }
    }
    Ok(StabilityReport { times: ta.times, d, weight, max_excess, monotone: max_excess <= tol })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongOrderReport {
    pub dts: Vec<f64>,
    /// Root-mean-square terminal `l2` error against the reference run.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log dt`.
    pub order: f64,
    pub reference_dt: f64,
    pub paths: usize,
}

/// Coupled-path refinement study. The model's own step is the reference; each entry of
/// `coarsening` gives a run at `dt 2^k` driven by sums of the reference increments.
pub fn strong_order_study(
    model: &Model,
    eps: f64,
    coarsening: &[u32],
    n_paths: usize,
    seed: u64,
) -> Result<StrongOrderReport> {
    if coarsening.len() < 2 || n_paths == 0 || !(eps > 0.0) {
        return Err(Error::InvalidParameter("strong order study needs eps > 0, two levels and paths".into()));
    }
    let coarse: Vec<Model> = coarsening
        .iter()
        .map(|&k| {
            if k == 0 {
                return Err(Error::InvalidParameter("coarsening exponents must be positive".into()));
            }
            model.with_dt(model.dt * f64::from(1u32 << k))
        })
        .collect::<Result<_>>()?;
    let ends = SimOptions { snapshot_stride: 0 };
    let rows = par_paths(n_paths, |i| {
        let mut src = StreamIncrements::new(seed, i);
        let reference = simulate_with(model, eps, None, &mut src, ends)?;
        coarse
            .iter()
            .zip(coarsening)
            .map(|(m, &k)| {
                let mut src = StreamIncrements::coupled(seed, i, 1usize << k);
                let t = simulate_with(m, eps, None, &mut src, ends)?;
                Ok(t.final_theta().sub(reference.final_theta()).l2_sq())
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let nf = n_paths as f64;
    let errors: Vec<f64> =
        (0..coarse.len()).map(|l| (rows.iter().map(|r| r[l]).sum::<f64>() / nf).sqrt()).collect();
    let dts: Vec<f64> = coarse.iter().map(|m| m.dt).collect();
    let pts: Vec<(f64, f64)> = dts.iter().zip(&errors).map(|(d, e)| (d.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(StrongOrderReport { dts, errors, order: sxy / sxx, reference_dt: model.dt, paths: n_paths })
}
