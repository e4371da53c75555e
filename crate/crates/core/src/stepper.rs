//! Semi-implicit Euler–Maruyama integration of the temperature equation.
//!
//! One step solves
//! `(I + dt A2) theta_{n+1} = theta_n + dt [r* + g(t_n) - B(v_n, theta_n) + sigma_n u_n] + sqrt(eps) sigma_n dW_n`
//! where `r*` carries the Robin data `theta*` on the surface layer, `sigma_n = sigma(t_n, theta_n)`
//! and `u_n` is the step average of the control. The velocity is re-diagnosed from
//! `theta_{n+1}` once per step.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, HVectorField, ScalarField, SurfaceField};
use crate::noise::{u0_norm_sq, IncrementSource, NoIncrements, NoiseModel, StreamIncrements};
use crate::operators::{
    a2_separable, gronwall_audit, poincare_constant_k2, robin_source, v2_sq, GronwallAudit, Transport,
};
use crate::params::{ForcingSet, PhysParams};
use crate::separable::SeparableOp;
use crate::skeleton::ControlPath;
use crate::velocity::{DiagnosticSolver, DEFAULT_TOL};

/// A fully prepared configuration: grid, physics, forcing, noise, initial data and time grid.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Grid,
    pub params: PhysParams,
    pub forcing: ForcingSet,
    pub noise: NoiseModel,
    pub theta0: ScalarField,
    pub t_final: f64,
    pub dt: f64,
    /// When false the advection term is dropped and no velocity is diagnosed.
    pub advection: bool,
    implicit: Arc<SeparableOp>,
    diagnostic: Option<Arc<DiagnosticSolver>>,
    robin: ScalarField,
}

impl Model {
    pub fn new(
        grid: Grid,
        params: PhysParams,
        forcing: ForcingSet,
        noise: NoiseModel,
        theta0: ScalarField,
        t_final: f64,
        dt: f64,
    ) -> Result<Model> {
        params.validate()?;
        forcing.check_grid(&grid)?;
        if theta0.grid != grid || noise.carriers.grid != grid {
            return Err(Error::GridMismatch);
        }
        theta0.check_finite()?;
        check_time_grid(t_final, dt)?;
        let implicit = Arc::new(a2_separable(&grid, &params)?);
        let diagnostic = Some(Arc::new(DiagnosticSolver::new(grid, params, DEFAULT_TOL)?));
        let robin = robin_source(&forcing.theta_star, &params);
        Ok(Model { grid, params, forcing, noise, theta0, t_final, dt, advection: true, implicit, diagnostic, robin })
    }

    pub fn with_advection(mut self, on: bool) -> Model {
        self.advection = on;
        self
    }

    pub fn with_velocity_tol(mut self, tol: f64) -> Result<Model> {
        self.diagnostic = Some(Arc::new(DiagnosticSolver::new(self.grid, self.params, tol)?));
        Ok(self)
    }

    /// Same configuration on another step size.
    pub fn with_dt(&self, dt: f64) -> Result<Model> {
        check_time_grid(self.t_final, dt)?;
        let mut m = self.clone();
        m.dt = dt;
        Ok(m)
    }

    pub fn with_theta0(&self, theta0: ScalarField) -> Result<Model> {
        if theta0.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        theta0.check_finite()?;
        let mut m = self.clone();
        m.theta0 = theta0;
        Ok(m)
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn implicit_op(&self) -> &SeparableOp {
        &self.implicit
    }

    pub fn diagnostic(&self) -> Option<&DiagnosticSolver> {
        self.diagnostic.as_deref()
    }

    pub fn robin_field(&self) -> &ScalarField {
        &self.robin
    }

    /// `(I + dt A2)^-1 r`
    pub fn implicit_solve(&self, r: &ScalarField, dt: f64) -> ScalarField {
        ScalarField { grid: self.grid, data: self.implicit.solve_shifted(&r.data, 1.0, dt) }
    }

    pub fn initial_state(&self) -> Result<SimState> {
        self.state_at(0.0, self.theta0.clone())
    }

    fn state_at(&self, t: f64, theta: ScalarField) -> Result<SimState> {
        let (v, p_s, iterations) = if self.advection {
            let solver = self.diagnostic.as_ref().expect("diagnostic solver");
            let sol = solver.solve(&theta, &self.forcing.wind)?;
            (Some(sol.v), Some(sol.p_s), sol.iterations)
        } else {
            (None, None, 0)
        };
        Ok(SimState { t, theta, v, p_s, iterations })
    }
}

fn check_time_grid(t_final: f64, dt: f64) -> Result<()> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParameter(format!("final time {t_final} must be positive")));
    }
    if !(dt > 0.0 && dt <= t_final) {
        return Err(Error::InvalidParameter(format!("time step {dt} must lie in (0, T]")));
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-12 * t_final.max(1.0) {
        return Err(Error::InvalidParameter(format!("time step {dt} does not divide T = {t_final}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub theta: ScalarField,
    /// Diagnosed velocity and surface pressure; absent when advection is off.
    pub v: Option<HVectorField>,
    pub p_s: Option<SurfaceField>,
    /// Krylov iterations of the last diagnostic solve.
    pub iterations: usize,
}

/// Per-step scalars. Norms refer to the state after the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMonitor {
    pub t: f64,
    pub dt: f64,
    pub l2sq: f64,
    pub v2sq: f64,
    pub iterations: usize,
    /// `2 <xi_n, theta_n>` with `xi_n = sqrt(eps) sigma_n dW_n`.
    pub noise_work: f64,
    /// `|xi_n - dt B(v_n, theta_n)|^2`, the explicit-term defect of the discrete energy identity.
    pub defect_sq: f64,
    /// `|g(t_n)|^2`
    pub heat_sq: f64,
    /// `|u_n|_U0^2`
    pub control_sq: f64,
    /// `|sigma_n u_n|^2`
    pub sigma_control_sq: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub theta: ScalarField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Always includes the initial and final states.
    pub snapshots: Vec<Snapshot>,
    pub initial_l2sq: f64,
    pub initial_v2sq: f64,
    pub monitors: Vec<StepMonitor>,
    pub final_state: SimState,
}

impl Trajectory {
    pub fn final_theta(&self) -> &ScalarField {
        &self.final_state.theta
    }

    /// True when every step is stored.
    pub fn is_dense(&self) -> bool {
        self.snapshots.len() == self.times.len()
    }

    /// `max_n l2(theta_n - other_n)` over common snapshots (requires equal step grids).
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.snapshots.len() != other.snapshots.len() {
            return Err(Error::LengthMismatch { expected: self.snapshots.len(), got: other.snapshots.len() });
        }
        let mut d = 0.0f64;
        for (a, b) in self.snapshots.iter().zip(&other.snapshots) {
            if a.step != b.step {
                return Err(Error::InvalidParameter("snapshot grids differ".into()));
            }
            d = d.max(a.theta.sub(&b.theta).l2());
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Store every `stride`-th state; 0 keeps only the endpoints.
    pub snapshot_stride: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { snapshot_stride: 1 }
    }
}

/// Inputs of one step beyond the state.
pub struct StepInputs<'a> {
    pub dt: f64,
    pub eps: f64,
    /// Step-averaged control `u_n`.
    pub control: Option<&'a [f64]>,
    /// Wiener increment `dW_n`.
    pub dw: &'a [f64],
    /// State at which sigma is evaluated, when different from the current state.
    pub sigma_at: Option<&'a ScalarField>,
    pub step_index: usize,
}

pub fn step(model: &Model, state: &SimState, inp: &StepInputs) -> Result<(SimState, StepMonitor)> {
    let g = model.grid;
    let dt = inp.dt;
    if !(dt > 0.0) || !(inp.eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("step needs dt > 0 and eps >= 0 (got {dt}, {})", inp.eps)));
    }
    let t = state.t;
    let theta = &state.theta;
    let mut rhs = theta.clone();
    rhs.axpy(dt, &model.robin);
    let heat = model.forcing.heat.at(g, t);
    rhs.axpy(dt, &heat);
    let adv = if model.advection {
        let v = state.v.as_ref().ok_or_else(|| Error::InvalidParameter("state is missing its velocity".into()))?;
        let b = Transport::new(v).advect(theta);
        rhs.axpy(-dt, &b);
        Some(b)
    } else {
        None
    };
    let noise = &model.noise;
    let sigma_state = inp.sigma_at.unwrap_or(theta);
    let gains = noise.gains(t, &noise.state_coefficients(sigma_state));
    let (sigma_u, control_sq) = match inp.control {
        Some(u) => {
            let f = noise.synthesize_scaled(&gains, u);
            rhs.axpy(dt, &f);
            (Some(f), u0_norm_sq(u, &noise.q))
        }
        None => (None, 0.0),
    };
    let xi = if inp.eps > 0.0 && inp.dw.iter().any(|v| *v != 0.0) {
        let mut f = noise.synthesize_scaled(&gains, inp.dw);
        f.scale(inp.eps.sqrt());
        rhs.axpy(1.0, &f);
        Some(f)
    } else {
        None
    };
    let next = model.implicit_solve(&rhs, dt);
    if next.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { step: inp.step_index + 1 });
    }
    let noise_work = xi.as_ref().map_or(0.0, |x| 2.0 * x.dot(theta));
    let defect_sq = match (&xi, &adv) {
        (Some(x), Some(b)) => {
            let mut d = x.clone();
            d.axpy(-dt, b);
            d.l2_sq()
        }
        (Some(x), None) => x.l2_sq(),
        (None, Some(b)) => dt * dt * b.l2_sq(),
        (None, None) => 0.0,
    };
    let new_state = model.state_at(t + dt, next)?;
    let mon = StepMonitor {
        t: t + dt,
        dt,
        l2sq: new_state.theta.l2_sq(),
        v2sq: v2_sq(&new_state.theta, &model.params),
        iterations: new_state.iterations,
        noise_work,
        defect_sq,
        heat_sq: heat.l2_sq(),
        control_sq,
        sigma_control_sq: sigma_u.map_or(0.0, |f| f.l2_sq()),
    };
    Ok((new_state, mon))
}

/// Runs the model over `[0, T]` with increments from `source`.
pub fn simulate_with(
    model: &Model,
    eps: f64,
    control: Option<&ControlPath>,
    source: &mut dyn IncrementSource,
    opts: SimOptions,
) -> Result<Trajectory> {
    let state = model.initial_state()?;
    run_from(model, state, 0, model.n_steps(), eps, control, source, opts, None)
}

/// Shared driver over steps `k0..k0+n`; `sigma_path`, when given, freezes sigma at
/// the listed states (one per step). Snapshot step indices are global.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_from(
    model: &Model,
    mut state: SimState,
    k0: usize,
    n: usize,
    eps: f64,
    control: Option<&ControlPath>,
    source: &mut dyn IncrementSource,
    opts: SimOptions,
    sigma_path: Option<&[ScalarField]>,
) -> Result<Trajectory> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be non-negative")));
    }
    let dt = model.dt;
    if let Some(c) = control {
        c.check_compatible(&model.noise, model.t_final)?;
    }
    let mut times = Vec::with_capacity(n + 1);
    times.push(state.t);
    let mut snapshots = vec![Snapshot { step: k0, t: state.t, theta: state.theta.clone() }];
    let initial_l2sq = state.theta.l2_sq();
    let initial_v2sq = v2_sq(&state.theta, &model.params);
    let mut monitors = Vec::with_capacity(n);
    for k in 0..n {
        let tn = (k0 + k) as f64 * dt;
        state.t = tn;
        let u = control.map(|c| c.step_average(tn, tn + dt));
        let dw = if eps > 0.0 { source.increment(k0 + k, dt, &model.noise.q) } else { vec![0.0; model.noise.m()] };
        let inp = StepInputs {
            dt,
            eps,
            control: u.as_deref(),
            dw: &dw,
            sigma_at: sigma_path.map(|p| &p[k]),
            step_index: k0 + k,
        };
        let (next, mon) = step(model, &state, &inp)?;
        state = next;
        state.t = (k0 + k + 1) as f64 * dt;
        times.push(state.t);
        monitors.push(mon);
        let keep = k + 1 == n || (opts.snapshot_stride > 0 && (k + 1) % opts.snapshot_stride == 0);
        if keep {
            snapshots.push(Snapshot { step: k0 + k + 1, t: state.t, theta: state.theta.clone() });
        }
    }
    Ok(Trajectory { times, snapshots, initial_l2sq, initial_v2sq, monitors, final_state: state })
}

/// Runs with the noise stream keyed by `(seed, sample_index)`.
pub fn simulate(
    model: &Model,
    eps: f64,
    control: Option<&ControlPath>,
    seed: u64,
    sample_index: u64,
    opts: SimOptions,
) -> Result<Trajectory> {
    if eps == 0.0 {
        simulate_with(model, eps, control, &mut NoIncrements, opts)
    } else {
        simulate_with(model, eps, control, &mut StreamIncrements::new(seed, sample_index), opts)
    }
}

/// Running positive part of the martingale sum, as a non-decreasing sequence.
fn running_martingale_bound(work: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(work.len() + 1);
    let mut sum = 0.0f64;
    let mut best = 0.0f64;
    out.push(0.0);
    for w in work {
        sum += w;
        best = best.max(sum);
        out.push(best);
    }
    out
}

/// Discrete energy audit of a simulated trajectory.
///
/// From the implicit-Euler identity, with Young's inequality splitting the heat,
/// Robin and control pairings against a quarter of the energy norm each:
/// `Y_n + int X <= Y_0 + dt X_0 / 2 + sum dt [(4/K2) |g|^2 + 4 beta |theta*|^2 + (4/K2) |sigma u|^2]
///  + sum defect + max_m (sum_{<m} noise work)^+`
/// with `Y = l2^2`, `X = v2^2`, `a = 0`.
pub fn energy_monitor(traj: &Trajectory, forcing: &ForcingSet, params: &PhysParams) -> Result<GronwallAudit> {
    if traj.monitors.len() + 1 != traj.times.len() {
        return Err(Error::AuditInput(format!(
            "{} monitors for {} times",
            traj.monitors.len(),
            traj.times.len()
        )));
    }
    let grid = forcing.theta_star.grid;
    let k2 = poincare_constant_k2(params.beta_robin, params.k_nu, grid.h)?;
    let star_sq = forcing.theta_star.l2_sq();
    let mut y = vec![traj.initial_l2sq];
    let mut x = vec![traj.initial_v2sq];
    let work: Vec<f64> = traj.monitors.iter().map(|m| m.noise_work).collect();
    let mart = running_martingale_bound(&work);
    let mut z = Vec::with_capacity(traj.times.len());
    let mut acc = traj.initial_l2sq + 0.5 * traj.monitors.first().map_or(0.0, |m| m.dt) * traj.initial_v2sq;
    z.push(acc);
    for (k, m) in traj.monitors.iter().enumerate() {
        y.push(m.l2sq);
        x.push(m.v2sq);
        acc += m.dt * (4.0 / k2 * m.heat_sq + 4.0 * params.beta_robin * star_sq + 4.0 / k2 * m.sigma_control_sq)
            + m.defect_sq;
        z.push(acc + mart[k + 1]);
    }
    let a = vec![0.0; y.len()];
    gronwall_audit(&traj.times, &y, &x, &a, &z)
}

/// Scales all non-initial energy monitors, for injected-violation tests.
pub fn corrupt_monitors(traj: &Trajectory, factor: f64) -> Trajectory {
    let mut t = traj.clone();
    for m in t.monitors.iter_mut() {
        m.l2sq *= factor;
        m.v2sq *= factor;
    }
    t
}
