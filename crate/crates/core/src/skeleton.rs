//! The controlled deterministic equation and its two solvers.
//!
//! A control is a piecewise-constant path `chi` in the noise space: value `chi_p` on
//! `(tau_{p-1}, tau_p]`. It enters the temperature equation as the drift
//! `sigma(t, theta) chi(t)`. Its energy is `1/2 sum_p |chi_p|_U0^2 (tau_p - tau_{p-1})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::noise::{u0_norm_sq, NoIncrements, NoiseModel};
use crate::operators::{gronwall_audit, poincare_constant_k2, GronwallAudit};
use crate::stepper::{run_from, simulate_with, Model, SimOptions, Snapshot, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    /// `0 = tau_0 < tau_1 < ... < tau_P = T`
    pub knots: Vec<f64>,
    /// `values[p]` holds the coefficients on `(tau_p, tau_{p+1}]`.
    pub values: Vec<Vec<f64>>,
    /// Noise variances defining the U0 norm.
    pub q: Vec<f64>,
    /// Optional energy bound the path is declared to respect.
    pub radius: Option<f64>,
}

impl ControlPath {
    pub fn new(knots: Vec<f64>, values: Vec<Vec<f64>>, q: Vec<f64>) -> Result<ControlPath> {
        if knots.len() < 2 || values.len() + 1 != knots.len() {
            return Err(Error::InvalidParameter(format!(
                "{} knots cannot carry {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(Error::InvalidParameter("first knot must be 0".into()));
        }
        if let Some(i) = (1..knots.len()).find(|&i| !(knots[i] > knots[i - 1]) || !knots[i].is_finite()) {
            return Err(Error::InvalidParameter(format!("knots not increasing at {i}")));
        }
        for v in &values {
            if v.len() != q.len() {
                return Err(Error::LengthMismatch { expected: q.len(), got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("control values must be finite".into()));
            }
        }
        Ok(ControlPath { knots, values, q, radius: None })
    }

    /// `p` equal intervals on `[0, T]`, all values zero.
    pub fn zero(t_final: f64, p: usize, q: &[f64]) -> ControlPath {
        ControlPath::uniform(t_final, vec![vec![0.0; q.len()]; p.max(1)], q).expect("valid zero control")
    }

    /// Equal intervals on `[0, T]` carrying the given values.
    pub fn uniform(t_final: f64, values: Vec<Vec<f64>>, q: &[f64]) -> Result<ControlPath> {
        let p = values.len();
        let mut knots: Vec<f64> = (0..=p).map(|i| t_final * i as f64 / p as f64).collect();
        knots[p] = t_final;
        ControlPath::new(knots, values, q.to_vec())
    }

    /// Samples `f(t)` at interval midpoints.
    pub fn from_fn(t_final: f64, p: usize, q: &[f64], f: impl Fn(f64) -> Vec<f64>) -> Result<ControlPath> {
        let values = (0..p).map(|i| f(t_final * (i as f64 + 0.5) / p as f64)).collect();
        ControlPath::uniform(t_final, values, q)
    }

    pub fn with_radius(mut self, m: f64) -> Result<ControlPath> {
        let e = self.energy();
        if e > m {
            return Err(Error::InvalidParameter(format!("control energy {e} exceeds radius {m}")));
        }
        self.radius = Some(m);
        Ok(self)
    }

    pub fn t_final(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn n_intervals(&self) -> usize {
        self.values.len()
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    pub fn energy(&self) -> f64 {
        control_energy(self)
    }

    /// Value on the interval containing `t` (left-open intervals; `t = 0` maps to the first).
    pub fn value_at(&self, t: f64) -> &[f64] {
        let p = self.knots[1..].partition_point(|&k| k < t).min(self.values.len() - 1);
        &self.values[p]
    }

    /// `(1 / (t1 - t0)) int_{t0}^{t1} chi`
    pub fn step_average(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        let span = t1 - t0;
        // Intervals are sorted; locate the first one ending after t0.
        let start = self.knots[1..].partition_point(|&k| k <= t0);
        for p in start..self.values.len() {
            let (a, b) = (self.knots[p], self.knots[p + 1]);
            if a >= t1 {
                break;
            }
            let overlap = b.min(t1) - a.max(t0);
            if overlap > 0.0 {
                let w = overlap / span;
                for (o, v) in out.iter_mut().zip(&self.values[p]) {
                    *o += w * v;
                }
            }
        }
        out
    }

    /// Weights `d u_n / d chi_p` of the step average on `[t0, t1]`, as `(p, weight)`.
    pub fn step_weights(&self, t0: f64, t1: f64) -> Vec<(usize, f64)> {
        let span = t1 - t0;
        let start = self.knots[1..].partition_point(|&k| k <= t0);
        let mut out = Vec::new();
        for p in start..self.values.len() {
            let (a, b) = (self.knots[p], self.knots[p + 1]);
            if a >= t1 {
                break;
            }
            let overlap = b.min(t1) - a.max(t0);
            if overlap > 0.0 {
                out.push((p, overlap / span));
            }
        }
        out
    }

    pub fn check_compatible(&self, noise: &NoiseModel, t_final: f64) -> Result<()> {
        if self.q.len() != noise.m() {
            return Err(Error::LengthMismatch { expected: noise.m(), got: self.q.len() });
        }
        if self.q.iter().zip(&noise.q).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs()) {
            return Err(Error::InvalidParameter("control and noise use different variances".into()));
        }
        if (self.t_final() - t_final).abs() > 1e-12 * t_final.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "control ends at {} but the run ends at {t_final}",
                self.t_final()
            )));
        }
        Ok(())
    }

    /// Splits every interval into `factor` equal pieces with the same value.
    pub fn refine(&self, factor: usize) -> ControlPath {
        let factor = factor.max(1);
        let mut knots = vec![0.0];
        let mut values = Vec::new();
        for p in 0..self.values.len() {
            let (a, b) = (self.knots[p], self.knots[p + 1]);
            for i in 1..=factor {
                knots.push(if i == factor { b } else { a + (b - a) * i as f64 / factor as f64 });
                values.push(self.values[p].clone());
            }
        }
        ControlPath { knots, values, q: self.q.clone(), radius: self.radius }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn with_flat(&self, x: &[f64]) -> ControlPath {
        let m = self.m();
        let values = x.chunks(m).map(|c| c.to_vec()).collect();
        ControlPath { knots: self.knots.clone(), values, q: self.q.clone(), radius: self.radius }
    }

    pub fn scaled(&self, c: f64) -> ControlPath {
        let x: Vec<f64> = self.flat().iter().map(|v| c * v).collect();
        self.with_flat(&x)
    }

    /// Joins two paths, shifting the knots of `other` by this path's end time.
    pub fn concat(&self, other: &ControlPath) -> Result<ControlPath> {
        if self.q != other.q {
            return Err(Error::InvalidParameter("cannot join paths with different variances".into()));
        }
        let shift = self.t_final();
        let mut knots = self.knots.clone();
        knots.extend(other.knots[1..].iter().map(|k| k + shift));
        let mut values = self.values.clone();
        values.extend(other.values.iter().cloned());
        ControlPath::new(knots, values, self.q.clone())
    }
}

/// `1/2 sum_p |chi_p|_U0^2 (tau_p - tau_{p-1})`
pub fn control_energy(chi: &ControlPath) -> f64 {
    let mut e = 0.0;
    for (p, v) in chi.values.iter().enumerate() {
        e += 0.5 * u0_norm_sq(v, &chi.q) * (chi.knots[p + 1] - chi.knots[p]);
    }
    e
}

/// Time-stepping solver: the noiseless run with the control drift.
pub fn solve_skeleton(model: &Model, control: &ControlPath) -> Result<Trajectory> {
    simulate_with(model, 0.0, Some(control), &mut NoIncrements, SimOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub window: f64,
    pub max_sweeps: usize,
    pub tol: f64,
    /// Halve the window whenever the measured contraction factor exceeds 0.5.
    pub auto_shrink: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { window: f64::INFINITY, max_sweeps: 50, tol: 1e-12, auto_shrink: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub t0: f64,
    pub t1: f64,
    pub sweeps: usize,
    /// Largest ratio of successive sweep differences (0 when the map is constant).
    pub contraction: f64,
    pub final_difference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardResult {
    pub trajectory: Trajectory,
    pub windows: Vec<WindowReport>,
}

/// Fixed-point solver: on each window, freeze `sigma` at the previous iterate, solve the
/// resulting equation, and repeat until successive iterates agree to `tol` in sup-l2.
pub fn picard_solve(model: &Model, control: &ControlPath, opts: PicardOptions) -> Result<PicardResult> {
    if !(opts.window > 0.0) || !(opts.tol > 0.0) || opts.max_sweeps == 0 {
        return Err(Error::InvalidParameter("Picard needs window > 0, tol > 0 and at least one sweep".into()));
    }
    control.check_compatible(&model.noise, model.t_final)?;
    let n = model.n_steps();
    let mut window_steps = ((opts.window / model.dt).floor() as usize).clamp(1, n);
    let mut state = model.initial_state()?;
    let mut k0 = 0;
    let mut windows = Vec::new();
    let mut pieces: Vec<Trajectory> = Vec::new();
    while k0 < n {
        let w = window_steps.min(n - k0);
        // Initial guess: the window's starting state held constant.
        let mut eta: Vec<ScalarField> = vec![state.theta.clone(); w + 1];
        let mut prev_diff = f64::NAN;
        let mut contraction = 0.0f64;
        let mut sweeps = 0;
        let mut shrunk = false;
        let piece = loop {
            sweeps += 1;
            let traj = run_from(
                model,
                state.clone(),
                k0,
                w,
                0.0,
                Some(control),
                &mut NoIncrements,
                SimOptions::default(),
                Some(&eta[..w]),
            )?;
            let diff = traj
                .snapshots
                .iter()
                .zip(&eta)
                .fold(0.0f64, |m, (s, e)| m.max(s.theta.sub(e).l2()));
            if sweeps >= 2 && prev_diff > 0.0 {
                contraction = contraction.max(diff / prev_diff);
            }
            eta = traj.snapshots.iter().map(|s| s.theta.clone()).collect();
            if diff < opts.tol {
                break traj;
            }
            if sweeps >= 3 && contraction > 0.5 {
                if opts.auto_shrink && w > 1 {
                    window_steps = (w / 2).max(1);
                    shrunk = true;
                    break traj;
                }
                if !opts.auto_shrink {
                    return Err(Error::NotContracting { t0: k0 as f64 * model.dt, factor: contraction });
                }
            }
            if sweeps >= opts.max_sweeps {
                return Err(Error::NotContracting { t0: k0 as f64 * model.dt, factor: contraction });
            }
            prev_diff = diff;
        };
        if shrunk {
            continue;
        }
        windows.push(WindowReport {
            t0: k0 as f64 * model.dt,
            t1: (k0 + w) as f64 * model.dt,
            sweeps,
            contraction,
            final_difference: piece.snapshots.iter().zip(&eta).fold(0.0f64, |m, (s, e)| m.max(s.theta.sub(e).l2())),
        });
        state = piece.final_state.clone();
        k0 += w;
        pieces.push(piece);
    }
    Ok(PicardResult { trajectory: concat_pieces(pieces), windows })
}

fn concat_pieces(pieces: Vec<Trajectory>) -> Trajectory {
    let mut it = pieces.into_iter();
    let mut out = it.next().expect("at least one window");
    for p in it {
        out.times.extend_from_slice(&p.times[1..]);
        out.snapshots.extend(p.snapshots.into_iter().skip(1).collect::<Vec<Snapshot>>());
        out.monitors.extend(p.monitors);
        out.final_state = p.final_state;
    }
    out
}

/// Constants of the skeleton energy bound. With `Y = l2^2`, `X = v2^2`:
/// `Y + int X <= (Y_0 + c_g int |g|^2 + c_star t |theta*|^2 + c_chi K int |chi|^2 + defects) exp(c_chi K int |chi|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonBoundConstants {
    pub c_g: f64,
    pub c_star: f64,
    pub c_chi: f64,
    pub k: f64,
}

pub fn skeleton_bound_constants(model: &Model) -> Result<SkeletonBoundConstants> {
    let k2 = poincare_constant_k2(model.params.beta_robin, model.params.k_nu, model.grid.h)?;
    Ok(SkeletonBoundConstants {
        c_g: 4.0 / k2,
        c_star: 4.0 * model.params.beta_robin,
        c_chi: 4.0 / k2,
        k: model.noise.declared.k,
    })
}

/// Audits the a-priori bound of a controlled noiseless trajectory. The control enters
/// through the recorded step averages `|u_n|_U0^2`.
pub fn skeleton_energy_bound(traj: &Trajectory, model: &Model) -> Result<GronwallAudit> {
    if traj.monitors.len() + 1 != traj.times.len() {
        return Err(Error::AuditInput("trajectory is missing monitors".into()));
    }
    let c = skeleton_bound_constants(model)?;
    let star_sq = model.forcing.theta_star.l2_sq();
    let n = traj.monitors.len();
    let mut y = vec![traj.initial_l2sq];
    let mut x = vec![traj.initial_v2sq];
    let mut z = Vec::with_capacity(n + 1);
    let mut acc = traj.initial_l2sq + 0.5 * traj.monitors.first().map_or(0.0, |m| m.dt) * traj.initial_v2sq;
    z.push(acc);
    let rate: Vec<f64> = traj.monitors.iter().map(|m| c.c_chi * c.k * m.control_sq).collect();
    for m in &traj.monitors {
        y.push(m.l2sq);
        x.push(m.v2sq);
        acc += m.dt * (c.c_g * m.heat_sq + c.c_star * star_sq + c.c_chi * c.k * m.control_sq) + m.defect_sq;
        z.push(acc);
    }
    // Node values dominate both adjacent step rates, so the trapezoid integral
    // bounds the left-endpoint sum used by the discrete Gronwall step.
    let a: Vec<f64> = (0..=n)
        .map(|i| {
            let left = if i > 0 { rate[i - 1] } else { 0.0 };
            let right = if i < n { rate[i] } else { 0.0 };
            left.max(right)
        })
        .collect();
    gronwall_audit(&traj.times, &y, &x, &a, &z)
}
