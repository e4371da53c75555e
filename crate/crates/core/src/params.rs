//! Physical parameters and external forcing.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, SurfaceField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysParams {
    /// Horizontal and vertical eddy viscosity.
    pub a_h: f64,
    pub a_nu: f64,
    /// Horizontal and vertical heat diffusivity.
    pub k_h: f64,
    pub k_nu: f64,
    /// Robin coefficient of the surface heat flux.
    pub beta_robin: f64,
    /// Coriolis parameter `f = f0 + beta_cor * y`.
    pub f0: f64,
    pub beta_cor: f64,
    /// Scaling of the wind stress in the surface momentum flux.
    pub kappa: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            a_h: 1.0,
            a_nu: 1.0,
            k_h: 1.0,
            k_nu: 1.0,
            beta_robin: 1.0,
            f0: 1.0,
            beta_cor: 0.0,
            kappa: 1.0,
        }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_h", self.a_h),
            ("a_nu", self.a_nu),
            ("k_h", self.k_h),
            ("k_nu", self.k_nu),
            ("beta_robin", self.beta_robin),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("f0", self.f0), ("beta_cor", self.beta_cor), ("kappa", self.kappa)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite")));
            }
        }
        Ok(())
    }

    pub fn coriolis(&self, y: f64) -> f64 {
        self.f0 + self.beta_cor * y
    }
}

/// Horizontal wind stress on the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindStress {
    pub x: SurfaceField,
    pub y: SurfaceField,
}

impl WindStress {
    pub fn zeros(grid: Grid) -> WindStress {
        WindStress { x: SurfaceField::zeros(grid), y: SurfaceField::zeros(grid) }
    }

    pub fn is_zero(&self) -> bool {
        self.x.data.iter().chain(&self.y.data).all(|v| *v == 0.0)
    }
}

pub type HeatFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

/// Internal heat source `g(t, x, y, z)`.
#[derive(Clone, Default)]
pub enum HeatSource {
    #[default]
    Zero,
    Static(ScalarField),
    /// Closure of `(x, y, z, t)`.
    Function(HeatFn),
}

impl fmt::Debug for HeatSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeatSource::Zero => write!(f, "Zero"),
            HeatSource::Static(s) => write!(f, "Static(max |g| = {})", s.max_abs()),
            HeatSource::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl HeatSource {
    pub fn at(&self, grid: Grid, t: f64) -> ScalarField {
        match self {
            HeatSource::Zero => ScalarField::zeros(grid),
            HeatSource::Static(g) => g.clone(),
            HeatSource::Function(f) => ScalarField::from_fn(grid, |x, y, z| f(x, y, z, t)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, HeatSource::Zero)
    }
}

#[derive(Debug, Clone)]
pub struct ForcingSet {
    pub wind: WindStress,
    /// Surface reference temperature in the Robin condition.
    pub theta_star: SurfaceField,
    pub heat: HeatSource,
}

impl ForcingSet {
    pub fn zero(grid: Grid) -> ForcingSet {
        ForcingSet {
            wind: WindStress::zeros(grid),
            theta_star: SurfaceField::zeros(grid),
            heat: HeatSource::Zero,
        }
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        let ok = self.wind.x.grid == *grid
            && self.wind.y.grid == *grid
            && self.theta_star.grid == *grid
            && match &self.heat {
                HeatSource::Static(g) => g.grid == *grid,
                _ => true,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Checks that a surface function has vanishing normal derivative on the lateral
/// boundary, using centered differences across each wall at the grid's boundary nodes.
pub fn check_neumann_compatible(grid: &Grid, f: impl Fn(f64, f64) -> f64, tol: f64) -> Result<()> {
    let ex = 1e-5 * grid.lx;
    let ey = 1e-5 * grid.ly;
    for j in 0..grid.ny {
        let y = grid.y(j);
        for x in [0.0, grid.lx] {
            let d = (f(x + ex, y) - f(x - ex, y)) / (2.0 * ex);
            if !(d.abs() <= tol) {
                return Err(Error::InvalidParameter(format!(
                    "theta* normal derivative {d:e} at (x={x}, y={y}) exceeds {tol:e}"
                )));
            }
        }
    }
    for i in 0..grid.nx {
        let x = grid.x(i);
        for y in [0.0, grid.ly] {
            let d = (f(x, y + ey) - f(x, y - ey)) / (2.0 * ey);
            if !(d.abs() <= tol) {
                return Err(Error::InvalidParameter(format!(
                    "theta* normal derivative {d:e} at (x={x}, y={y}) exceeds {tol:e}"
                )));
            }
        }
    }
    Ok(())
}
