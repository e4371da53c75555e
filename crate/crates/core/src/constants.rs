//! Empirical values of the grid-dependent constants in the operator estimates.
//!
//! Random inputs are smooth: short cosine series with coefficients drawn from a seed,
//! independent of the grid, so that the same functions are sampled on refined grids.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::axis;
use crate::error::{Error, Result};
use crate::grid::{Grid, HVectorField, ScalarField};
use crate::operators::{poincare_constant_k2, trilinear_b, v2_sq};
use crate::params::{PhysParams, WindStress};
use crate::velocity::{velocity_h1_sq, verify_estimate, DiagnosticSolver, DEFAULT_TOL};

const MODES: usize = 4;

/// Coefficients of `sum c_abc cos(a pi x / lx) cos(b pi y / ly) cos(c pi (z + h) / h)`.
#[derive(Debug, Clone)]
pub struct SmoothSample {
    coef: Vec<f64>,
}

impl SmoothSample {
    pub fn draw(rng: &mut ChaCha8Rng) -> SmoothSample {
        let mut coef = Vec::with_capacity(MODES * MODES * MODES);
        for a in 0..MODES {
            for b in 0..MODES {
                for c in 0..MODES {
                    let decay = 1.0 + (a + b + c) as f64;
                    coef.push(rng.sample::<f64, _>(StandardNormal) / (decay * decay));
                }
            }
        }
        SmoothSample { coef }
    }

    pub fn eval(&self, grid: &Grid, x: f64, y: f64, z: f64) -> f64 {
        let mut s = 0.0;
        let mut i = 0;
        for a in 0..MODES {
            let ca = (a as f64 * PI * x / grid.lx).cos();
            for b in 0..MODES {
                let cb = (b as f64 * PI * y / grid.ly).cos();
                for c in 0..MODES {
                    s += self.coef[i] * ca * cb * (c as f64 * PI * (z + grid.h) / grid.h).cos();
                    i += 1;
                }
            }
        }
        s
    }

    pub fn field(&self, grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x, y, z| self.eval(&grid, x, y, z))
    }
}

/// A smooth random scalar field.
pub fn smooth_field(grid: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    SmoothSample::draw(rng).field(grid)
}

/// A smooth random horizontal vector field.
pub fn smooth_vector(grid: Grid, rng: &mut ChaCha8Rng) -> HVectorField {
    let a = SmoothSample::draw(rng);
    let b = SmoothSample::draw(rng);
    HVectorField::from_fn(grid, |x, y, z| (a.eval(&grid, x, y, z), b.eval(&grid, x, y, z)))
}

/// `|v|_H1^2` plus all second derivatives, from repeated one-dimensional differences.
pub fn velocity_h2_sq(vel: &HVectorField) -> f64 {
    let g = &vel.grid;
    let dims = g.dims();
    let sp = g.spacing();
    let mut total = velocity_h1_sq(vel);
    let mut d1 = vec![0.0; g.len()];
    let mut d2 = vec![0.0; g.len()];
    for comp in [&vel.u, &vel.v] {
        for a in 0..3 {
            axis::deriv(dims, sp[a], a, comp, &mut d1);
            for b in 0..3 {
                axis::deriv(dims, sp[b], b, &d1, &mut d2);
                total += ScalarField { grid: *g, data: d2.clone() }.l2_sq();
            }
        }
    }
    total
}

/// Smallest `v2^2 / l2^2` over smooth and rough random fields.
pub fn poincare_ratio_min(grid: Grid, params: &PhysParams, n_samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for i in 0..n_samples {
        let f = if i % 2 == 0 {
            smooth_field(grid, &mut rng)
        } else {
            let mut f = ScalarField::zeros(grid);
            f.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            f
        };
        let l2 = f.l2_sq();
        if l2 > 0.0 {
            best = best.min(v2_sq(&f, params) / l2);
        }
    }
    best
}

/// Largest `|b(v, theta, eta)| / (|v|_H1^{1/2} |v|_H2^{1/2} v2(theta) l2(eta)^{1/2} v2(eta)^{1/2})`.
pub fn trilinear_constant(grid: Grid, params: &PhysParams, n_samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..n_samples {
        let v = smooth_vector(grid, &mut rng);
        let theta = smooth_field(grid, &mut rng);
        let eta = smooth_field(grid, &mut rng);
        let den = velocity_h1_sq(&v).powf(0.25)
            * velocity_h2_sq(&v).powf(0.25)
            * v2_sq(&theta, params).sqrt()
            * eta.l2().sqrt()
            * v2_sq(&eta, params).powf(0.25);
        if den == 0.0 {
            return Err(Error::ZeroDenominator("trilinear constant"));
        }
        best = best.max(trilinear_b(&v, &theta, &eta).abs() / den);
    }
    Ok(best)
}

/// Largest velocity-estimate quotient over random temperatures with zero wind.
pub fn velocity_constant(grid: Grid, params: &PhysParams, n_samples: usize, seed: u64) -> Result<f64> {
    let solver = DiagnosticSolver::new(grid, *params, DEFAULT_TOL)?;
    let wind = WindStress::zeros(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..n_samples {
        let theta = smooth_field(grid, &mut rng);
        let sol = solver.solve(&theta, &wind)?;
        best = best.max(verify_estimate(&theta, &wind, &sol)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    /// Poincaré constant from the closed form.
    pub k2: f64,
    /// Smallest sampled `v2^2 / l2^2`; at least `k2` when the inequality holds.
    pub poincare_min_ratio: f64,
    /// Trilinear-form constant.
    pub trilinear: f64,
    /// Velocity-estimate constant.
    pub velocity: f64,
    pub samples: usize,
}

impl ConstantsReport {
    pub fn measure(grid: Grid, params: &PhysParams, n_samples: usize, seed: u64) -> Result<ConstantsReport> {
        let k2 = poincare_constant_k2(params.beta_robin, params.k_nu, grid.h)?;
        Ok(ConstantsReport {
            k2,
            poincare_min_ratio: poincare_ratio_min(grid, params, n_samples, seed),
            trilinear: trilinear_constant(grid, params, n_samples, seed.wrapping_add(1))?,
            velocity: velocity_constant(grid, params, n_samples.min(200), seed.wrapping_add(2))?,
            samples: n_samples,
        })
    }

    pub fn poincare_holds(&self) -> bool {
        self.poincare_min_ratio >= self.k2 * (1.0 - 1e-12)
    }

    /// Weight threshold of the uniqueness argument: trilinear^2 * velocity.
    pub fn uniqueness_weight(&self) -> f64 {
        self.trilinear * self.trilinear * self.velocity
    }
}
