//! Diagnostic velocity and surface pressure.
//!
//! Solves `grad p_s + f v^perp + A1 v = int_{-h}^{z} grad theta` with the column
//! constraint `int_{-h}^{0} div v = 0`. The system is split exactly into its column
//! mean (a 2D saddle problem, factorized once) and the deviation from it (a 3D
//! problem with no pressure, solved by preconditioned GMRES).
//!
//! Velocity component `u` vanishes on the walls `x = 0, lx`, component `v` on
//! `y = 0, ly`; tangential components satisfy homogeneous Neumann conditions. The
//! surface carries `A_nu dz v = kappa mu`, the bottom `dz v = 0`.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::axis::{self, dense};
use crate::error::{Error, Result};
use crate::grid::{trap_weight, Grid, HVectorField, ScalarField, SurfaceField};
use crate::krylov::gmres;
use crate::params::{PhysParams, WindStress};
use crate::separable::{Axis1D, SeparableOp};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticSolution {
    pub v: HVectorField,
    /// Surface pressure, weighted-orthogonal to the discrete gradient's null space
    /// (in particular of zero mean).
    pub p_s: SurfaceField,
    /// Weighted L2 norm of the momentum residual.
    pub residual_momentum: f64,
    /// Max over columns of `|int div v dz|`.
    pub residual_constraint: f64,
    /// `(|v|_H1^2 + |p_s|^2) / (|theta|^2 + |mu|_H1^2)`, absent when both inputs vanish.
    pub constants_ratio: Option<f64>,
    pub iterations: usize,
}

/// Applies `A1` to a velocity field, with the surface flux `kappa mu` when given.
/// Entries on each component's Dirichlet walls are returned as zero.
pub fn apply_a1(vel: &HVectorField, params: &PhysParams, wind: Option<&WindStress>) -> HVectorField {
    let g = &vel.grid;
    let dims = g.dims();
    let [dx, dy, dz] = g.spacing();
    let n = g.len();
    let mut out = HVectorField::zeros(*g);
    let mut tmp = vec![0.0; n];
    for comp in 0..2 {
        let (src, dst) = if comp == 0 { (&vel.u, &mut out.u) } else { (&vel.v, &mut out.v) };
        let (dir_axis, neu_axis) = if comp == 0 { (0, 1) } else { (1, 0) };
        let sp = [dx, dy];
        axis::second_dirichlet(dims, sp[dir_axis], dir_axis, src, &mut tmp);
        dst.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= params.a_h * t);
        axis::second_neumann(dims, sp[neu_axis], neu_axis, src, &mut tmp);
        dst.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= params.a_h * t);
        axis::second_neumann(dims, dz, 2, src, &mut tmp);
        dst.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= params.a_nu * t);
        if let Some(w) = wind {
            let mu = if comp == 0 { &w.x } else { &w.y };
            let off = g.surface_len() * g.top();
            for s in 0..g.surface_len() {
                dst[off + s] -= 2.0 * params.kappa * mu.data[s] / dz;
            }
        }
        mask_walls(g, comp, dst);
    }
    out
}

/// Zeros a component on its Dirichlet walls. Works for volume and surface arrays.
fn mask_walls(g: &Grid, comp: usize, data: &mut [f64]) {
    let layers = data.len() / g.surface_len();
    for k in 0..layers {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let wall = if comp == 0 { i == 0 || i + 1 == g.nx } else { j == 0 || j + 1 == g.ny };
                if wall {
                    data[i + g.nx * (j + g.ny * k)] = 0.0;
                }
            }
        }
    }
}

/// `int_{-h}^{z} grad_h theta`, the baroclinic pressure-gradient forcing.
fn buoyancy_forcing(theta: &ScalarField) -> [Vec<f64>; 2] {
    let g = &theta.grid;
    let dims = g.dims();
    let [dx, dy, dz] = g.spacing();
    let n = g.len();
    let mut d = vec![0.0; n];
    let mut fx = vec![0.0; n];
    let mut fy = vec![0.0; n];
    axis::deriv(dims, dx, 0, &theta.data, &mut d);
    axis::cumulative_z(dims, dz, &d, &mut fx);
    axis::deriv(dims, dy, 1, &theta.data, &mut d);
    axis::cumulative_z(dims, dz, &d, &mut fy);
    [fx, fy]
}

/// Null space of the discrete surface gradient restricted to admissible velocity
/// nodes: constants and the three checkerboards.
fn gradient_null_space(g: &Grid) -> Vec<Vec<f64>> {
    let sign = |a: usize| if a % 2 == 0 { 1.0 } else { -1.0 };
    let mut out = vec![Vec::with_capacity(g.surface_len()); 4];
    for j in 0..g.ny {
        for i in 0..g.nx {
            out[0].push(1.0);
            out[1].push(sign(i));
            out[2].push(sign(j));
            out[3].push(sign(i) * sign(j));
        }
    }
    out
}

#[derive(Debug, Clone)]
struct BarotropicLayout {
    u_nodes: Vec<usize>,
    v_nodes: Vec<usize>,
    n_p: usize,
}

impl BarotropicLayout {
    fn new(g: &Grid) -> BarotropicLayout {
        let mut u_nodes = Vec::new();
        let mut v_nodes = Vec::new();
        for j in 0..g.ny {
            for i in 0..g.nx {
                if i > 0 && i + 1 < g.nx {
                    u_nodes.push(g.sidx(i, j));
                }
                if j > 0 && j + 1 < g.ny {
                    v_nodes.push(g.sidx(i, j));
                }
            }
        }
        BarotropicLayout { u_nodes, v_nodes, n_p: g.surface_len() }
    }

    fn size(&self) -> usize {
        self.u_nodes.len() + self.v_nodes.len() + self.n_p + 4
    }
    fn p_off(&self) -> usize {
        self.u_nodes.len() + self.v_nodes.len()
    }
}

/// Cached factorizations for repeated diagnostic solves on one configuration.
pub struct DiagnosticSolver {
    grid: Grid,
    params: PhysParams,
    tol: f64,
    max_iter: usize,
    layout: BarotropicLayout,
    barotropic: LU<f64, Dyn, Dyn>,
    viscous: [SeparableOp; 2],
    weights: Vec<f64>,
}

impl std::fmt::Debug for DiagnosticSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiagnosticSolver").field("grid", &self.grid).field("tol", &self.tol).finish()
    }
}

impl DiagnosticSolver {
    pub fn new(grid: Grid, params: PhysParams, tol: f64) -> Result<DiagnosticSolver> {
        params.validate()?;
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
        }
        let layout = BarotropicLayout::new(&grid);
        let barotropic = assemble_barotropic(&grid, &params, &layout).lu();
        let viscous = [viscous_op(&grid, &params, 0)?, viscous_op(&grid, &params, 1)?];
        Ok(DiagnosticSolver {
            grid,
            params,
            tol,
            max_iter: 2000,
            layout,
            barotropic,
            viscous,
            weights: grid.volume_weights(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn solve(&self, theta: &ScalarField, wind: &WindStress) -> Result<DiagnosticSolution> {
        let g = self.grid;
        if theta.grid != g || wind.x.grid != g || wind.y.grid != g {
            return Err(Error::GridMismatch);
        }
        theta.check_finite()?;
        let p = &self.params;
        let dims = g.dims();
        let dz = g.dz();
        let n = g.len();
        let ns = g.surface_len();
        let top = ns * g.top();

        let [fx, fy] = buoyancy_forcing(theta);
        let fbar = [
            axis::column_integral(dims, dz, &fx).iter().map(|v| v / g.h).collect::<Vec<_>>(),
            axis::column_integral(dims, dz, &fy).iter().map(|v| v / g.h).collect::<Vec<_>>(),
        ];
        let mus = [&wind.x.data, &wind.y.data];

        // Column-mean problem.
        let lay = &self.layout;
        let mut rhs = DVector::zeros(lay.size());
        for (r, &s) in lay.u_nodes.iter().enumerate() {
            rhs[r] = fbar[0][s] + p.kappa * mus[0][s] / g.h;
        }
        for (r, &s) in lay.v_nodes.iter().enumerate() {
            rhs[lay.u_nodes.len() + r] = fbar[1][s] + p.kappa * mus[1][s] / g.h;
        }
        let sol = self
            .barotropic
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("barotropic system is singular".into()))?;
        let mut ubar = vec![0.0; ns];
        let mut vbar = vec![0.0; ns];
        for (r, &s) in lay.u_nodes.iter().enumerate() {
            ubar[s] = sol[r];
        }
        for (r, &s) in lay.v_nodes.iter().enumerate() {
            vbar[s] = sol[lay.u_nodes.len() + r];
        }
        let mut ps = SurfaceField { grid: g, data: (0..ns).map(|s| sol[lay.p_off() + s]).collect() };
        let mean = ps.mean();
        ps.data.iter_mut().for_each(|v| *v -= mean);

        // Deviation from the column mean.
        let mut rhs3 = vec![0.0; 2 * n];
        for comp in 0..2 {
            let f = if comp == 0 { &fx } else { &fy };
            let part = &mut rhs3[comp * n..(comp + 1) * n];
            for (idx, r) in part.iter_mut().enumerate() {
                let s = idx % ns;
                *r = f[idx] - fbar[comp][s] - p.kappa * mus[comp][s] / g.h;
            }
            for s in 0..ns {
                part[top + s] += 2.0 * p.kappa * mus[comp][s] / dz;
            }
            mask_walls(&g, comp, part);
        }
        let coriolis: Vec<f64> = (0..n).map(|idx| p.coriolis(g.y((idx / g.nx) % g.ny))).collect();
        let precond = |y: &[f64]| -> Vec<f64> {
            let mut out = self.viscous[0].solve_shifted(&y[..n], 0.0, 1.0);
            out.extend(self.viscous[1].solve_shifted(&y[n..], 0.0, 1.0));
            out
        };
        let apply = |y: &[f64]| -> Vec<f64> {
            let x = precond(y);
            let mut out = y.to_vec();
            for idx in 0..n {
                out[idx] -= coriolis[idx] * x[n + idx];
                out[n + idx] += coriolis[idx] * x[idx];
            }
            mask_walls(&g, 0, &mut out[..n]);
            mask_walls(&g, 1, &mut out[n..]);
            out
        };
        let w = &self.weights;
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                s += w[i] * (a[i] * b[i] + a[n + i] * b[n + i]);
            }
            s
        };
        // Round-off in the residual grows with the data, so the absolute tolerance is
        // applied to data of unit size and scaled up beyond that.
        let data = (dot(&rhs3, &rhs3) + fx.iter().chain(&fy).zip(w.iter().chain(w)).map(|(f, w)| w * f * f).sum::<f64>())
            .sqrt();
        let tol = self.tol * data.max(1.0);
        let out = gmres(apply, &rhs3, dot, 40, self.max_iter, 0.1 * tol);
        if !out.converged {
            return Err(Error::NoConvergence {
                what: "baroclinic velocity solve",
                residual: out.residual,
                iterations: out.iterations,
                history: out.history,
            });
        }
        let xprime = precond(&out.x);
        let mut vel = HVectorField::zeros(g);
        for idx in 0..n {
            let s = idx % ns;
            vel.u[idx] = ubar[s] + xprime[idx];
            vel.v[idx] = vbar[s] + xprime[n + idx];
        }
        mask_walls(&g, 0, &mut vel.u);
        mask_walls(&g, 1, &mut vel.v);

        let (res_m, res_c) = residuals(theta, wind, &vel, &ps, p);
        if !(res_m <= tol && res_c <= tol) {
            return Err(Error::NoConvergence {
                what: "diagnostic velocity residual",
                residual: res_m.max(res_c),
                iterations: out.iterations,
                history: out.history,
            });
        }
        let constants_ratio = estimate_quotient(theta, wind, &vel, &ps).ok();
        Ok(DiagnosticSolution {
            v: vel,
            p_s: ps,
            residual_momentum: res_m,
            residual_constraint: res_c,
            constants_ratio,
            iterations: out.iterations,
        })
    }
}

fn viscous_op(g: &Grid, p: &PhysParams, comp: usize) -> Result<SeparableOp> {
    let [dx, dy, dz] = g.spacing();
    let dir = |n: usize, d: f64| -> Result<Axis1D> {
        let m: Vec<f64> = dense::neg_second_dirichlet(n, d).iter().map(|v| p.a_h * v).collect();
        let w: Vec<f64> = (1..n - 1).map(|i| trap_weight(n, d, i)).collect();
        Axis1D::new(&m, &w, n, 1)
    };
    let neu = |n: usize, d: f64, c: f64| -> Result<Axis1D> {
        let m: Vec<f64> = dense::neg_second_neumann(n, d).iter().map(|v| c * v).collect();
        let w: Vec<f64> = (0..n).map(|i| trap_weight(n, d, i)).collect();
        Axis1D::new(&m, &w, n, 0)
    };
    let (ax, ay) = if comp == 0 {
        (dir(g.nx, dx)?, neu(g.ny, dy, p.a_h)?)
    } else {
        (neu(g.nx, dx, p.a_h)?, dir(g.ny, dy)?)
    };
    Ok(SeparableOp::new([ax, ay, neu(g.nz, dz, p.a_nu)?]))
}

fn assemble_barotropic(g: &Grid, p: &PhysParams, lay: &BarotropicLayout) -> DMatrix<f64> {
    let size = lay.size();
    let mut m = DMatrix::zeros(size, size);
    let nu = lay.u_nodes.len();
    let p_off = lay.p_off();
    let mut u_row = vec![usize::MAX; g.surface_len()];
    let mut v_row = vec![usize::MAX; g.surface_len()];
    for (r, &s) in lay.u_nodes.iter().enumerate() {
        u_row[s] = r;
    }
    for (r, &s) in lay.v_nodes.iter().enumerate() {
        v_row[s] = nu + r;
    }
    let [dx, dy, _] = g.spacing();
    let (nx, ny) = (g.nx, g.ny);

    // Momentum rows: A_h (-D2) on the component, Coriolis, pressure gradient.
    for comp in 0..2 {
        let (nodes, rows, other) = if comp == 0 { (&lay.u_nodes, &u_row, &v_row) } else { (&lay.v_nodes, &v_row, &u_row) };
        for &s in nodes.iter() {
            let (i, j) = (s % nx, s / nx);
            let row = rows[s];
            // Dirichlet direction: interior stencil, wall values are zero.
            // Neumann direction: ghost closure at the ends.
            for (a, d, n, pos) in [(0usize, dx, nx, i), (1usize, dy, ny, j)] {
                let inv = p.a_h / (d * d);
                let step = if a == 0 { 1 } else { nx };
                let dirichlet = a == comp;
                m[(row, row)] += 2.0 * inv;
                if dirichlet {
                    if pos > 1 {
                        m[(row, rows[s - step])] -= inv;
                    }
                    if pos + 2 < n {
                        m[(row, rows[s + step])] -= inv;
                    }
                } else if pos == 0 {
                    m[(row, rows[s + step])] -= 2.0 * inv;
                } else if pos + 1 == n {
                    m[(row, rows[s - step])] -= 2.0 * inv;
                } else {
                    m[(row, rows[s - step])] -= inv;
                    m[(row, rows[s + step])] -= inv;
                }
            }
            let f = p.coriolis(g.y(j));
            if other[s] != usize::MAX {
                // u row gets -f v, v row gets +f u.
                m[(row, other[s])] += if comp == 0 { -f } else { f };
            }
            // Interior centered gradient of p along the component's own direction.
            if comp == 0 {
                m[(row, p_off + s + 1)] += 0.5 / dx;
                m[(row, p_off + s - 1)] -= 0.5 / dx;
            } else {
                m[(row, p_off + s + nx)] += 0.5 / dy;
                m[(row, p_off + s - nx)] -= 0.5 / dy;
            }
        }
    }

    // Constraint rows: SBP divergence of the column mean, plus null-space multipliers.
    let null = gradient_null_space(g);
    let lam_off = p_off + lay.n_p;
    for j in 0..ny {
        for i in 0..nx {
            let s = g.sidx(i, j);
            let row = p_off + s;
            for (a, d, n, pos, rows) in [(0usize, dx, nx, i, &u_row), (1usize, dy, ny, j, &v_row)] {
                let step = if a == 0 { 1 } else { nx };
                let mut add = |node: usize, c: f64| {
                    if rows[node] != usize::MAX {
                        m[(row, rows[node])] += c;
                    }
                };
                if pos == 0 {
                    add(s + step, 1.0 / d);
                    add(s, -1.0 / d);
                } else if pos + 1 == n {
                    add(s, 1.0 / d);
                    add(s - step, -1.0 / d);
                } else {
                    add(s + step, 0.5 / d);
                    add(s - step, -0.5 / d);
                }
            }
            for (q, nv) in null.iter().enumerate() {
                m[(row, lam_off + q)] = nv[s];
            }
        }
    }
    let w2 = g.surface_weights();
    for (q, nv) in null.iter().enumerate() {
        for s in 0..lay.n_p {
            m[(lam_off + q, p_off + s)] = w2[s] * nv[s];
        }
    }
    m
}

/// Momentum residual (weighted L2) and column-constraint residual (max norm).
pub fn residuals(
    theta: &ScalarField,
    wind: &WindStress,
    vel: &HVectorField,
    p_s: &SurfaceField,
    params: &PhysParams,
) -> (f64, f64) {
    let g = &theta.grid;
    let dims = g.dims();
    let [dx, dy, dz] = g.spacing();
    let n = g.len();
    let ns = g.surface_len();
    let [fx, fy] = buoyancy_forcing(theta);
    let a1 = apply_a1(vel, params, Some(wind));
    let sdims = [g.nx, g.ny, 1];
    let mut px = vec![0.0; ns];
    let mut py = vec![0.0; ns];
    axis::deriv(sdims, dx, 0, &p_s.data, &mut px);
    axis::deriv(sdims, dy, 1, &p_s.data, &mut py);
    let mut r = HVectorField::zeros(*g);
    for idx in 0..n {
        let s = idx % ns;
        let f = params.coriolis(g.y(s / g.nx));
        r.u[idx] = a1.u[idx] + px[s] - f * vel.v[idx] - fx[idx];
        r.v[idx] = a1.v[idx] + py[s] + f * vel.u[idx] - fy[idx];
    }
    mask_walls(g, 0, &mut r.u);
    mask_walls(g, 1, &mut r.v);
    let mut div = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    axis::deriv(dims, dx, 0, &vel.u, &mut div);
    axis::deriv(dims, dy, 1, &vel.v, &mut tmp);
    div.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
    let col = axis::column_integral(dims, dz, &div);
    (r.l2(), col.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// `sum` over both components of `|v|_L2^2 + |grad_3 v|^2`.
pub fn velocity_h1_sq(vel: &HVectorField) -> f64 {
    let g = &vel.grid;
    let dims = g.dims();
    let sp = g.spacing();
    let mut total = vel.l2_sq();
    let mut d = vec![0.0; g.len()];
    for comp in [&vel.u, &vel.v] {
        for a in 0..3 {
            axis::deriv(dims, sp[a], a, comp, &mut d);
            total += ScalarField { grid: *g, data: d.clone() }.l2_sq();
        }
    }
    total
}

pub fn surface_h1_sq(f: &SurfaceField) -> f64 {
    let g = &f.grid;
    let sdims = [g.nx, g.ny, 1];
    let sp = g.spacing();
    let mut total = f.l2_sq();
    let mut d = vec![0.0; g.surface_len()];
    for a in 0..2 {
        axis::deriv(sdims, sp[a], a, &f.data, &mut d);
        total += SurfaceField { grid: *g, data: d.clone() }.l2_sq();
    }
    total
}

fn estimate_quotient(theta: &ScalarField, wind: &WindStress, vel: &HVectorField, p_s: &SurfaceField) -> Result<f64> {
    let den = theta.l2_sq() + surface_h1_sq(&wind.x) + surface_h1_sq(&wind.y);
    if den == 0.0 {
        return Err(Error::ZeroDenominator("velocity estimate quotient"));
    }
    Ok((velocity_h1_sq(vel) + p_s.l2_sq()) / den)
}

/// `(|v|_H1^2 + |p_s|^2) / (|theta|^2 + |mu|_H1^2)` for a computed solution.
pub fn verify_estimate(theta: &ScalarField, wind: &WindStress, sol: &DiagnosticSolution) -> Result<f64> {
    estimate_quotient(theta, wind, &sol.v, &sol.p_s)
}

pub fn solve_diagnostic(
    theta: &ScalarField,
    wind: &WindStress,
    params: &PhysParams,
    tol: f64,
) -> Result<DiagnosticSolution> {
    DiagnosticSolver::new(theta.grid, *params, tol)?.solve(theta, wind)
}

/// `<f v^perp, v>` in the weighted inner product.
pub fn coriolis_work(vel: &HVectorField, params: &PhysParams) -> f64 {
    let g = &vel.grid;
    let mut perp = HVectorField::zeros(*g);
    for idx in 0..g.len() {
        let f = params.coriolis(g.y((idx / g.nx) % g.ny));
        perp.u[idx] = -f * vel.v[idx];
        perp.v[idx] = f * vel.u[idx];
    }
    perp.dot(vel)
}
