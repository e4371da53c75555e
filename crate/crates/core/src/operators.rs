//! Discrete norms, the heat operator `A2`, its eigenmodes and the advection form.
//!
//! `A2 = -K_h (Dxx + Dyy) - K_nu Dzz` with Neumann closures on the sides and bottom
//! and the Robin closure `K_nu dz theta + beta (theta - theta*) = 0` on the surface,
//! imposed through a ghost node. With `theta* = 0` the operator is symmetric positive
//! definite in the trapezoid inner product.

use serde::{Deserialize, Serialize};

use crate::axis::{self, dense};
use crate::error::{Error, Result};
use crate::grid::{trap_weight, Grid, HVectorField, ScalarField, SurfaceField};
use crate::params::PhysParams;
use crate::separable::{Axis1D, SeparableOp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l2: f64,
    /// Energy norm `sqrt(K_h |grad_h|^2 + K_nu |dz|^2 + beta |trace|^2)`.
    pub v2: f64,
    pub h1: f64,
    pub surface_l2: f64,
}

/// SBP gradient `(dx, dy, dz)` of a volume array.
pub fn gradient(theta: &ScalarField) -> [Vec<f64>; 3] {
    let g = &theta.grid;
    let dims = g.dims();
    let sp = g.spacing();
    let mut out = [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
    for (a, o) in out.iter_mut().enumerate() {
        axis::deriv(dims, sp[a], a, &theta.data, o);
    }
    out
}

fn wsum_sq(grid: &Grid, data: &[f64]) -> f64 {
    let f = ScalarField { grid: *grid, data: data.to_vec() };
    f.l2_sq()
}

pub fn v2_sq(theta: &ScalarField, params: &PhysParams) -> f64 {
    let g = &theta.grid;
    let [gx, gy, gz] = gradient(theta);
    params.k_h * (wsum_sq(g, &gx) + wsum_sq(g, &gy))
        + params.k_nu * wsum_sq(g, &gz)
        + params.beta_robin * theta.surface_trace().l2_sq()
}

pub fn compute_norms(theta: &ScalarField, params: &PhysParams) -> Result<NormReport> {
    theta.check_finite()?;
    let g = &theta.grid;
    let [gx, gy, gz] = gradient(theta);
    let l2sq = theta.l2_sq();
    let grad_sq = wsum_sq(g, &gx) + wsum_sq(g, &gy) + wsum_sq(g, &gz);
    let trace = theta.surface_trace().l2_sq();
    let v2sq = params.k_h * (wsum_sq(g, &gx) + wsum_sq(g, &gy))
        + params.k_nu * wsum_sq(g, &gz)
        + params.beta_robin * trace;
    Ok(NormReport { l2: l2sq.sqrt(), v2: v2sq.sqrt(), h1: (l2sq + grad_sq).sqrt(), surface_l2: trace.sqrt() })
}

/// `min(beta / 2h, K_nu / 2h^2)`, the constant in `K2 |theta|^2 <= |theta|_V2^2`.
pub fn poincare_constant_k2(beta_robin: f64, k_nu: f64, h: f64) -> Result<f64> {
    if !(beta_robin > 0.0 && k_nu > 0.0 && h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Poincare constant needs positive beta, K_nu, h (got {beta_robin}, {k_nu}, {h})"
        )));
    }
    Ok((beta_robin / (2.0 * h)).min(k_nu / (2.0 * h * h)))
}

/// Applies `A2` including the inhomogeneous Robin data `theta*` when given.
pub fn apply_a2(theta: &ScalarField, params: &PhysParams, theta_star: Option<&SurfaceField>) -> ScalarField {
    let g = &theta.grid;
    let dims = g.dims();
    let [dx, dy, dz] = g.spacing();
    let n = g.len();
    let mut out = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    axis::second_neumann(dims, dx, 0, &theta.data, &mut tmp);
    out.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= params.k_h * t);
    axis::second_neumann(dims, dy, 1, &theta.data, &mut tmp);
    out.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= params.k_h * t);
    axis::second_neumann(dims, dz, 2, &theta.data, &mut tmp);
    out.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= params.k_nu * t);
    let off = g.surface_len() * g.top();
    let c = 2.0 * params.beta_robin / dz;
    for s in 0..g.surface_len() {
        let star = theta_star.map_or(0.0, |t| t.data[s]);
        out[off + s] += c * (theta.data[off + s] - star);
    }
    ScalarField { grid: *g, data: out }
}

/// Source term `(2 beta / dz) theta*` on the surface layer, i.e. `A2(theta) - A2(theta; theta*)`.
pub fn robin_source(theta_star: &SurfaceField, params: &PhysParams) -> ScalarField {
    let g = theta_star.grid;
    let mut out = ScalarField::zeros(g);
    let off = g.surface_len() * g.top();
    let c = 2.0 * params.beta_robin / g.dz();
    for s in 0..g.surface_len() {
        out.data[off + s] = c * theta_star.data[s];
    }
    out
}

/// `A2` (with `theta* = 0`) as a Kronecker sum, for eigenmodes and implicit solves.
pub fn a2_separable(grid: &Grid, params: &PhysParams) -> Result<SeparableOp> {
    params.validate()?;
    let [dx, dy, dz] = grid.spacing();
    let axis_x = |n: usize, d: f64| -> Result<Axis1D> {
        let m: Vec<f64> = dense::neg_second_neumann(n, d).iter().map(|v| params.k_h * v).collect();
        let w: Vec<f64> = (0..n).map(|i| trap_weight(n, d, i)).collect();
        Axis1D::new(&m, &w, n, 0)
    };
    let nz = grid.nz;
    let mut mz: Vec<f64> = dense::neg_second_neumann(nz, dz).iter().map(|v| params.k_nu * v).collect();
    mz[nz * nz - 1] += 2.0 * params.beta_robin / dz;
    let wz: Vec<f64> = (0..nz).map(|k| trap_weight(nz, dz, k)).collect();
    Ok(SeparableOp::new([axis_x(grid.nx, dx)?, axis_x(grid.ny, dy)?, Axis1D::new(&mz, &wz, nz, 0)?]))
}

/// Weight-orthonormal eigenmodes of `A2`, ascending.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub grid: Grid,
    pub eigenvalues: Vec<f64>,
    pub modes: Vec<ScalarField>,
    /// Tensor indices `[cx, cy, cz]` of each mode.
    pub indices: Vec<[usize; 3]>,
}

impl ModeBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Weighted projections `<theta, omega_j>`.
    pub fn coefficients(&self, theta: &ScalarField) -> Vec<f64> {
        self.modes.iter().map(|m| m.dot(theta)).collect()
    }

    pub fn synthesize(&self, coef: &[f64]) -> ScalarField {
        let mut out = ScalarField::zeros(self.grid);
        for (m, c) in self.modes.iter().zip(coef) {
            out.axpy(*c, m);
        }
        out
    }

    /// Keeps the listed modes, in the given order.
    pub fn select(&self, which: &[usize]) -> Result<ModeBasis> {
        if let Some(&bad) = which.iter().find(|&&j| j >= self.len()) {
            return Err(Error::InvalidParameter(format!("mode {bad} not in basis of {}", self.len())));
        }
        Ok(ModeBasis {
            grid: self.grid,
            eigenvalues: which.iter().map(|&j| self.eigenvalues[j]).collect(),
            modes: which.iter().map(|&j| self.modes[j].clone()).collect(),
            indices: which.iter().map(|&j| self.indices[j]).collect(),
        })
    }
}

pub fn eigenmodes_a2(grid: &Grid, params: &PhysParams, m: usize) -> Result<ModeBasis> {
    if m == 0 || m > grid.len() {
        return Err(Error::InvalidParameter(format!("requested {m} modes on a grid of {} nodes", grid.len())));
    }
    let op = a2_separable(grid, params)?;
    from_separable(grid, &op, m)
}

pub(crate) fn from_separable(grid: &Grid, op: &SeparableOp, m: usize) -> Result<ModeBasis> {
    let picked = op.smallest_modes(m);
    let mut eigenvalues = Vec::with_capacity(m);
    let mut modes = Vec::with_capacity(m);
    let mut indices = Vec::with_capacity(m);
    for (l, c) in picked {
        eigenvalues.push(l);
        modes.push(ScalarField { grid: *grid, data: op.mode_field(c) });
        indices.push(c);
    }
    Ok(ModeBasis { grid: *grid, eigenvalues, modes, indices })
}

/// Vertical velocity `w(z) = -int_{-h}^{z} div_h v`, so that `w = 0` at the bottom.
pub fn diagnose_w(v: &HVectorField) -> ScalarField {
    let g = &v.grid;
    let dims = g.dims();
    let [dx, dy, dz] = g.spacing();
    let n = g.len();
    let mut div = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    axis::deriv(dims, dx, 0, &v.u, &mut div);
    axis::deriv(dims, dy, 1, &v.v, &mut tmp);
    div.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
    let mut w = vec![0.0; n];
    axis::cumulative_z(dims, dz, &div, &mut w);
    w.iter_mut().for_each(|x| *x = -*x);
    ScalarField { grid: *g, data: w }
}

/// Transport by a fixed three-component velocity in skew-symmetric form.
#[derive(Debug, Clone)]
pub struct Transport {
    grid: Grid,
    vel: [Vec<f64>; 3],
    weights: Vec<f64>,
}

impl Transport {
    pub fn new(v: &HVectorField) -> Transport {
        let w = diagnose_w(v);
        Transport { grid: v.grid, vel: [v.u.clone(), v.v.clone(), w.data], weights: v.grid.volume_weights() }
    }

    /// `T theta = v . grad theta`
    fn plain(&self, theta: &[f64]) -> Vec<f64> {
        let dims = self.grid.dims();
        let sp = self.grid.spacing();
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for a in 0..3 {
            axis::deriv(dims, sp[a], a, theta, &mut tmp);
            for ((o, t), c) in out.iter_mut().zip(&tmp).zip(&self.vel[a]) {
                *o += c * t;
            }
        }
        out
    }

    /// `W^-1 T^T W theta`
    fn adjoint(&self, theta: &[f64]) -> Vec<f64> {
        let dims = self.grid.dims();
        let sp = self.grid.spacing();
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut src = vec![0.0; n];
        for a in 0..3 {
            for (((s, c), t), w) in src.iter_mut().zip(&self.vel[a]).zip(theta).zip(&self.weights) {
                *s = c * w * t;
            }
            axis::deriv_t(dims, sp[a], a, &src, &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
        }
        out.iter_mut().zip(&self.weights).for_each(|(o, w)| *o /= w);
        out
    }

    /// `B(v, theta) = (T theta - W^-1 T^T W theta) / 2`; weighted-orthogonal to `theta`.
    pub fn advect(&self, theta: &ScalarField) -> ScalarField {
        let p = self.plain(&theta.data);
        let q = self.adjoint(&theta.data);
        let data = p.iter().zip(&q).map(|(a, b)| 0.5 * (a - b)).collect();
        ScalarField { grid: self.grid, data }
    }

    /// `b(v, theta, eta) = <B(v, theta), eta>`, evaluated so that swapping the last two
    /// arguments exactly negates the result.
    pub fn trilinear(&self, theta: &ScalarField, eta: &ScalarField) -> f64 {
        let t_theta = ScalarField { grid: self.grid, data: self.plain(&theta.data) };
        let t_eta = ScalarField { grid: self.grid, data: self.plain(&eta.data) };
        0.5 * (t_theta.dot(eta) - t_eta.dot(theta))
    }
}

pub fn advect(v: &HVectorField, theta: &ScalarField) -> ScalarField {
    Transport::new(v).advect(theta)
}

pub fn trilinear_b(v: &HVectorField, theta: &ScalarField, eta: &ScalarField) -> f64 {
    Transport::new(v).trilinear(theta, eta)
}

/// Numeric check of `Y(t) + int_0^t X <= Z(t) exp(int_0^t a)` on sampled sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallAudit {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub z: Vec<f64>,
    pub pass: bool,
    /// `max_i (Y_i + int X) - Z_i exp(int a)`; non-positive when the audit passes.
    pub max_slack: f64,
    /// First sample at which the bound fails (NaN counts as failure).
    pub first_violation: Option<usize>,
}

/// Integrals use the trapezoid rule on the given samples. A relative allowance of
/// 1e-12 absorbs round-off in equality cases.
pub fn gronwall_audit(times: &[f64], y: &[f64], x: &[f64], a: &[f64], z: &[f64]) -> Result<GronwallAudit> {
    let n = times.len();
    for (name, s) in [("Y", y), ("X", x), ("a", a), ("Z", z)] {
        if s.len() != n {
            return Err(Error::AuditInput(format!("{name} has {} samples, times has {n}", s.len())));
        }
        if let Some(i) = s.iter().position(|v| *v < 0.0) {
            return Err(Error::AuditInput(format!("{name}[{i}] = {} is negative", s[i])));
        }
    }
    if let Some(i) = (1..n).find(|&i| times[i] <= times[i - 1]) {
        return Err(Error::AuditInput(format!("times not increasing at index {i}")));
    }
    if let Some(i) = (1..n).find(|&i| z[i] < z[i - 1]) {
        return Err(Error::AuditInput(format!("Z decreases at index {i}")));
    }
    let mut int_x = 0.0;
    let mut int_a = 0.0;
    let mut max_slack = f64::NEG_INFINITY;
    let mut first_violation = None;
    for i in 0..n {
        if i > 0 {
            let dt = times[i] - times[i - 1];
            int_x += 0.5 * dt * (x[i - 1] + x[i]);
            int_a += 0.5 * dt * (a[i - 1] + a[i]);
        }
        let lhs = y[i] + int_x;
        let rhs = z[i] * int_a.exp();
        let slack = lhs - rhs;
        let ok = lhs <= rhs * (1.0 + 1e-12) + 1e-300;
        if !ok && first_violation.is_none() {
            first_violation = Some(i);
        }
        if slack.is_nan() {
            max_slack = f64::NAN;
        } else if !max_slack.is_nan() {
            max_slack = max_slack.max(slack);
        }
    }
    Ok(GronwallAudit {
        times: times.to_vec(),
        y: y.to_vec(),
        x: x.to_vec(),
        a: a.to_vec(),
        z: z.to_vec(),
        pass: first_violation.is_none(),
        max_slack,
        first_violation,
    })
}
