//! Minimum-action computation of the rate function.
//!
//! A target is met by a trajectory when its deviation `D` from the uncontrolled
//! reference reaches `delta`, i.e. `G = delta - D <= 0`. The action of the target is the
//! least control energy among controls whose skeleton meets it. We minimise
//! `E(chi) + rho (max(G, 0) / delta)^2` for an increasing sequence of `rho`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::lbfgs::{self, LbfgsOptions};
use crate::noise::NoIncrements;
use crate::skeleton::{control_energy, solve_skeleton, ControlPath};
use crate::stepper::{simulate_with, Model, SimOptions, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Deviation at the final time.
    TerminalDistance,
    /// Largest deviation over all steps.
    SupDeviation,
}

#[derive(Debug, Clone)]
pub struct TargetFunctional {
    pub kind: TargetKind,
    pub delta: f64,
    /// Uncontrolled skeleton states, one per step.
    pub reference: Vec<ScalarField>,
    /// When set (unit norm), the deviation is the signed projection on this direction
    /// instead of the l2 distance.
    pub direction: Option<ScalarField>,
}

impl TargetFunctional {
    pub fn new(model: &Model, kind: TargetKind, delta: f64) -> Result<TargetFunctional> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("target threshold {delta} must be non-negative")));
        }
        let zero = ControlPath::zero(model.t_final, 1, &model.noise.q);
        let traj = solve_skeleton(model, &zero)?;
        let reference = traj.snapshots.into_iter().map(|s| s.theta).collect();
        Ok(TargetFunctional { kind, delta, reference, direction: None })
    }

    pub fn with_direction(mut self, d: &ScalarField) -> Result<TargetFunctional> {
        let n = d.l2();
        if !(n > 0.0) {
            return Err(Error::InvalidParameter("target direction must be non-zero".into()));
        }
        let mut d = d.clone();
        d.scale(1.0 / n);
        self.direction = Some(d);
        Ok(self)
    }

    pub fn with_delta(&self, delta: f64) -> TargetFunctional {
        TargetFunctional { delta, ..self.clone() }
    }

    /// Whether trajectories must store every step for evaluation.
    pub fn snapshot_options(&self) -> SimOptions {
        match self.kind {
            TargetKind::TerminalDistance => SimOptions { snapshot_stride: 0 },
            TargetKind::SupDeviation => SimOptions { snapshot_stride: 1 },
        }
    }

    fn difference(&self, step: usize, theta: &ScalarField) -> Result<ScalarField> {
        let r = self
            .reference
            .get(step)
            .ok_or_else(|| Error::InvalidParameter(format!("no reference state for step {step}")))?;
        if r.grid != theta.grid {
            return Err(Error::GridMismatch);
        }
        Ok(theta.sub(r))
    }

    pub fn deviation(&self, step: usize, theta: &ScalarField) -> Result<f64> {
        let d = self.difference(step, theta)?;
        Ok(match &self.direction {
            Some(e) => d.dot(e),
            None => d.l2(),
        })
    }

    /// Step index and value of the deviation that `G` depends on.
    fn active(&self, traj: &Trajectory) -> Result<(usize, f64)> {
        match self.kind {
            TargetKind::TerminalDistance => {
                let s = traj.snapshots.last().expect("trajectory has a final snapshot");
                Ok((s.step, self.deviation(s.step, &s.theta)?))
            }
            TargetKind::SupDeviation => {
                if !traj.is_dense() {
                    return Err(Error::InvalidParameter("sup deviation needs every step stored".into()));
                }
                let mut best = (0, f64::NEG_INFINITY);
                for s in &traj.snapshots {
                    let d = self.deviation(s.step, &s.theta)?;
                    if d > best.1 {
                        best = (s.step, d);
                    }
                }
                Ok(best)
            }
        }
    }

    /// `G = delta - D`; non-positive when the target is met.
    pub fn evaluate(&self, traj: &Trajectory) -> Result<f64> {
        let (_, d) = self.active(traj)?;
        Ok(self.delta - d)
    }

    pub fn is_met(&self, traj: &Trajectory) -> Result<bool> {
        Ok(self.evaluate(traj)? <= 0.0)
    }

    /// Gradient of `D` with respect to the state at the active step.
    fn state_gradient(&self, step: usize, theta: &ScalarField) -> Result<ScalarField> {
        let d = self.difference(step, theta)?;
        Ok(match &self.direction {
            Some(e) => e.clone(),
            None => {
                let n = d.l2();
                let mut d = d;
                if n > 0.0 {
                    d.scale(1.0 / n);
                } else {
                    d.scale(0.0);
                }
                d
            }
        })
    }

    fn penalty_scale(&self) -> f64 {
        if self.delta > 0.0 && self.delta.is_finite() {
            self.delta
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Central differences over the control coefficients.
    FiniteDifference,
    /// Discrete adjoint; needs advection off.
    Adjoint,
    /// Adjoint when available, finite differences otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionOptions {
    /// Number of equal control intervals.
    pub intervals: usize,
    pub rho0: f64,
    pub stages: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Largest accepted `max(G, 0) / delta` at the end.
    pub feasibility_tol: f64,
    pub gradient: GradientMode,
    pub memory: usize,
}

impl Default for ActionOptions {
    fn default() -> Self {
        ActionOptions {
            intervals: 20,
            rho0: 100.0,
            stages: 5,
            max_iter: 200,
            grad_tol: 1e-9,
            feasibility_tol: 1e-3,
            gradient: GradientMode::Auto,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionIteration {
    pub stage: usize,
    pub iteration: usize,
    pub rho: f64,
    pub energy: f64,
    pub residual: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionResult {
    pub chi_star: ControlPath,
    /// `control_energy(chi_star)`
    pub action: f64,
    /// `max(G, 0)` at `chi_star`, in field units.
    pub penalty_residual: f64,
    pub feasible: bool,
    pub trace: Vec<ActionIteration>,
    pub gradient: GradientMode,
    /// Every penalty stage met its gradient tolerance or stalled at a stationary point.
    pub converged: bool,
}

impl ActionResult {
    /// The action, or an error when the target was not met at the final penalty.
    pub fn rate(&self) -> Result<f64> {
        if self.feasible {
            Ok(self.action)
        } else {
            Err(Error::Numerical(format!(
                "infeasible at this penalty (residual {:.3e})",
                self.penalty_residual
            )))
        }
    }
}

fn run_controlled(model: &Model, target: &TargetFunctional, chi: &ControlPath, dense: bool) -> Result<Trajectory> {
    let opts = if dense { SimOptions { snapshot_stride: 1 } } else { target.snapshot_options() };
    simulate_with(model, 0.0, Some(chi), &mut NoIncrements, opts)
}

/// `E(chi) + rho (max(G, 0) / delta)^2` and `max(G, 0)`.
pub fn objective(model: &Model, target: &TargetFunctional, chi: &ControlPath, rho: f64) -> Result<(f64, f64)> {
    let traj = run_controlled(model, target, chi, false)?;
    let g = target.evaluate(&traj)?.max(0.0);
    let s = target.penalty_scale();
    Ok((control_energy(chi) + rho * (g / s).powi(2), g))
}

/// Objective and its gradient with respect to the control coefficients `chi.flat()`.
pub fn objective_gradient(
    model: &Model,
    target: &TargetFunctional,
    chi: &ControlPath,
    rho: f64,
    mode: GradientMode,
) -> Result<(f64, Vec<f64>)> {
    let use_adjoint = match mode {
        GradientMode::Adjoint => {
            if model.advection {
                return Err(Error::InvalidParameter("adjoint gradient needs advection off".into()));
            }
            true
        }
        GradientMode::Auto => !model.advection,
        GradientMode::FiniteDifference => false,
    };
    if use_adjoint {
        adjoint_objective_gradient(model, target, chi, rho)
    } else {
        fd_objective_gradient(model, target, chi, rho)
    }
}

fn coefficient_scales(chi: &ControlPath) -> Vec<f64> {
    let m = chi.m();
    let mut out = Vec::with_capacity(chi.n_intervals() * m);
    for p in 0..chi.n_intervals() {
        let dtau = chi.knots[p + 1] - chi.knots[p];
        for j in 0..m {
            out.push((chi.q[j] / dtau).sqrt());
        }
    }
    out
}

fn fd_objective_gradient(model: &Model, target: &TargetFunctional, chi: &ControlPath, rho: f64) -> Result<(f64, Vec<f64>)> {
    let (f, _) = objective(model, target, chi, rho)?;
    let x = chi.flat();
    let scales = coefficient_scales(chi);
    let grad: Result<Vec<f64>> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(scales[i]);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let (fp, _) = objective(model, target, &chi.with_flat(&xp), rho)?;
            let (fm, _) = objective(model, target, &chi.with_flat(&xm), rho)?;
            Ok((fp - fm) / (2.0 * h))
        })
        .collect();
    Ok((f, grad?))
}

fn adjoint_objective_gradient(
    model: &Model,
    target: &TargetFunctional,
    chi: &ControlPath,
    rho: f64,
) -> Result<(f64, Vec<f64>)> {
    let traj = run_controlled(model, target, chi, true)?;
    let (nstar, dev) = target.active(&traj)?;
    let g = (target.delta - dev).max(0.0);
    let s = target.penalty_scale();
    let energy = control_energy(chi);
    let f = energy + rho * (g / s).powi(2);
    let m = chi.m();
    // dE / dchi
    let mut grad: Vec<f64> = Vec::with_capacity(chi.n_intervals() * m);
    for p in 0..chi.n_intervals() {
        let dtau = chi.knots[p + 1] - chi.knots[p];
        for j in 0..m {
            grad.push(chi.values[p][j] * dtau / chi.q[j]);
        }
    }
    if g > 0.0 {
        // d/dchi of rho (g/s)^2 = -2 rho g / s^2 dD/dchi
        let coef = -2.0 * rho * g / (s * s);
        let dd = deviation_gradient(model, target, chi, &traj, nstar)?;
        grad.iter_mut().zip(&dd).for_each(|(a, b)| *a += coef * b);
    }
    Ok((f, grad))
}

/// `dD / dchi` through the discrete adjoint of the linear-in-state implicit step.
fn deviation_gradient(
    model: &Model,
    target: &TargetFunctional,
    chi: &ControlPath,
    traj: &Trajectory,
    nstar: usize,
) -> Result<Vec<f64>> {
    let noise = &model.noise;
    let dt = model.dt;
    let m = chi.m();
    let mut grad = vec![0.0; chi.n_intervals() * m];
    let mut lam = target.state_gradient(nstar, &traj.snapshots[nstar].theta)?;
    for n in (0..nstar).rev() {
        let tn = model.time(n);
        let mu = model.implicit_solve(&lam, dt);
        let theta_n = &traj.snapshots[n].theta;
        let coef = noise.state_coefficients(theta_n);
        let gains = noise.gains(tn, &coef);
        let proj = noise.carriers.coefficients(&mu);
        for (p, w) in chi.step_weights(tn, tn + dt) {
            for j in 0..m {
                grad[p * m + j] += w * dt * gains[j] * proj[j];
            }
        }
        if n > 0 {
            lam = mu;
            if noise.depends_on_state() {
                let u = chi.step_average(tn, tn + dt);
                let slopes = noise.gain_slopes(tn, &coef);
                let c: Vec<f64> = (0..m).map(|j| dt * u[j] * slopes[j] * proj[j]).collect();
                lam.axpy(1.0, &noise.carriers.synthesize(&c));
            }
        }
    }
    Ok(grad)
}

/// Penalty continuation with L-BFGS in the energy-normalised coordinates
/// `z = chi sqrt(dtau / q)`, starting from `warm` when given.
pub fn minimize_action(
    model: &Model,
    target: &TargetFunctional,
    opts: ActionOptions,
    warm: Option<&ControlPath>,
) -> Result<ActionResult> {
    if opts.intervals == 0 || opts.stages == 0 || !(opts.rho0 > 0.0) {
        return Err(Error::InvalidParameter("action options need intervals, stages and rho0 > 0".into()));
    }
    let mode = match opts.gradient {
        GradientMode::Auto if model.advection => GradientMode::FiniteDifference,
        GradientMode::Auto => GradientMode::Adjoint,
        m => m,
    };
    let template = match warm {
        Some(c) => {
            c.check_compatible(&model.noise, model.t_final)?;
            c.clone()
        }
        None => ControlPath::zero(model.t_final, opts.intervals, &model.noise.q),
    };
    let scales = coefficient_scales(&template);
    let to_chi = |z: &[f64]| -> ControlPath {
        let x: Vec<f64> = z.iter().zip(&scales).map(|(a, s)| a * s).collect();
        template.with_flat(&x)
    };
    let mut z: Vec<f64> = template.flat().iter().zip(&scales).map(|(a, s)| a / s).collect();
    // A zero deviation has no useful gradient when the deviation is a norm.
    if target.direction.is_none() && target.delta > 0.0 {
        let traj = run_controlled(model, target, &to_chi(&z), false)?;
        if target.active(&traj)?.1 == 0.0 {
            z.iter_mut().enumerate().for_each(|(i, v)| *v = 1e-3 * (1.0 + (i % 3) as f64));
        }
    }
    let mut trace = Vec::new();
    let mut converged = true;
    let s = target.penalty_scale();
    for stage in 0..opts.stages {
        let rho = opts.rho0 * 4f64.powi(stage as i32);
        let out = lbfgs::minimize(
            |zz| {
                let chi = to_chi(zz);
                let (f, g) = objective_gradient(model, target, &chi, rho, mode)?;
                let gz: Vec<f64> = g.iter().zip(&scales).map(|(a, s)| a * s).collect();
                Ok((f, gz))
            },
            z,
            LbfgsOptions { memory: opts.memory, max_iter: opts.max_iter, grad_tol: opts.grad_tol, f_tol: 1e-15 },
        )?;
        for r in &out.trace {
            let energy = 0.5 * r.x_norm_sq;
            let residual = s * ((r.f - energy).max(0.0) / rho).sqrt();
            trace.push(ActionIteration { stage, iteration: r.iteration, rho, energy, residual, grad_norm: r.grad_norm });
        }
        converged &= out.converged;
        z = out.x;
    }
    let chi_star = to_chi(&z);
    let (_, residual) = objective(model, target, &chi_star, 0.0)?;
    let action = control_energy(&chi_star);
    let feasible = residual <= opts.feasibility_tol * s;
    Ok(ActionResult { chi_star, action, penalty_residual: residual, feasible, trace, gradient: mode, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub delta: f64,
    pub action: f64,
    pub penalty_residual: f64,
    pub feasible: bool,
}

/// `I(delta)` over an ascending list, each solve warm-started from the previous minimiser.
pub fn rate_curve(
    model: &Model,
    target: &TargetFunctional,
    deltas: &[f64],
    opts: ActionOptions,
) -> Result<Vec<RatePoint>> {
    if let Some(i) = (1..deltas.len()).find(|&i| deltas[i] < deltas[i - 1]) {
        return Err(Error::InvalidParameter(format!("deltas not ascending at index {i}")));
    }
    let mut out: Vec<RatePoint> = Vec::with_capacity(deltas.len());
    let mut warm: Option<ControlPath> = None;
    for &delta in deltas {
        let t = target.with_delta(delta);
        let res = minimize_action(model, &t, opts, warm.as_ref())?;
        if let Some(prev) = out.last() {
            if res.action < prev.action * (1.0 - 1e-6) - 1e-12 {
                return Err(Error::NonMonotone { d_lo: prev.delta, i_lo: prev.action, d_hi: delta, i_hi: res.action });
            }
        }
        out.push(RatePoint {
            delta,
            action: res.action,
            penalty_residual: res.penalty_residual,
            feasible: res.feasible,
        });
        if res.action > 0.0 {
            warm = Some(res.chi_star);
        }
    }
    Ok(out)
}
