//! Node-based tensor grid and the discrete fields that live on it.
//!
//! Node `(i, j, k)` sits at `x = i*dx`, `y = j*dy`, `z = -h + k*dz`, so `k = 0` is the
//! bottom and `k = nz - 1` the surface. Storage is x-fastest. Inner products use the
//! tensor trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
}

/// Trapezoid weight of node `i` on a uniform line of `n` nodes with spacing `d`.
#[inline]
pub(crate) fn trap_weight(n: usize, d: f64, i: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5 * d
    } else {
        d
    }
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, h: f64) -> Result<Grid> {
        for (name, n) in [("nx", nx), ("ny", ny), ("nz", nz)] {
            if n < 3 {
                return Err(Error::InvalidGrid(format!("{name} = {n}, need at least 3 nodes")));
            }
        }
        for (name, l) in [("lx", lx), ("ly", ly), ("h", h)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} = {l} must be positive")));
            }
        }
        nx.checked_mul(ny)
            .and_then(|s| s.checked_mul(nz))
            .ok_or_else(|| Error::InvalidGrid("node count overflows".into()))?;
        Ok(Grid { nx, ny, nz, lx, ly, h })
    }

    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }
    pub fn dy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }
    pub fn dz(&self) -> f64 {
        self.h / (self.nz - 1) as f64
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }
    pub fn surface_len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
    pub fn spacing(&self) -> [f64; 3] {
        [self.dx(), self.dy(), self.dz()]
    }
    /// Index of the surface layer.
    pub fn top(&self) -> usize {
        self.nz - 1
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }
    #[inline]
    pub fn sidx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }
    pub fn z(&self, k: usize) -> f64 {
        -self.h + k as f64 * self.dz()
    }

    pub fn weights_x(&self) -> Vec<f64> {
        let d = self.dx();
        (0..self.nx).map(|i| trap_weight(self.nx, d, i)).collect()
    }
    pub fn weights_y(&self) -> Vec<f64> {
        let d = self.dy();
        (0..self.ny).map(|j| trap_weight(self.ny, d, j)).collect()
    }
    pub fn weights_z(&self) -> Vec<f64> {
        let d = self.dz();
        (0..self.nz).map(|k| trap_weight(self.nz, d, k)).collect()
    }

    /// Trapezoid weights of all volume nodes, in storage order.
    pub fn volume_weights(&self) -> Vec<f64> {
        let (wx, wy, wz) = (self.weights_x(), self.weights_y(), self.weights_z());
        let mut w = Vec::with_capacity(self.len());
        for &c in &wz {
            for &b in &wy {
                for &a in &wx {
                    w.push(a * b * c);
                }
            }
        }
        w
    }

    pub fn surface_weights(&self) -> Vec<f64> {
        let (wx, wy) = (self.weights_x(), self.weights_y());
        let mut w = Vec::with_capacity(self.surface_len());
        for &b in &wy {
            for &a in &wx {
                w.push(a * b);
            }
        }
        w
    }

    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.h
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn weighted_dot(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let (dx, dy, dz) = (grid.dx(), grid.dy(), grid.dz());
    let mut total = 0.0;
    let mut n = 0;
    for k in 0..grid.nz {
        let wz = trap_weight(grid.nz, dz, k);
        for j in 0..grid.ny {
            let wyz = wz * trap_weight(grid.ny, dy, j);
            let mut row = 0.0;
            for i in 0..grid.nx {
                row += trap_weight(grid.nx, dx, i) * a[n] * b[n];
                n += 1;
            }
            total += wyz * row;
        }
    }
    total
}

fn weighted_dot_2d(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut total = 0.0;
    let mut n = 0;
    for j in 0..grid.ny {
        let wy = trap_weight(grid.ny, dy, j);
        let mut row = 0.0;
        for i in 0..grid.nx {
            row += trap_weight(grid.nx, dx, i) * a[n] * b[n];
            n += 1;
        }
        total += wy * row;
    }
    total
}

/// A scalar (temperature-like) field on all volume nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> ScalarField {
        ScalarField { grid, data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, value: f64) -> ScalarField {
        ScalarField { grid, data: vec![value; grid.len()] }
    }

    /// Rejects wrong lengths and non-finite entries.
    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<ScalarField> {
        if data.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: data.len() });
        }
        check_finite(&data)?;
        Ok(ScalarField { grid, data })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.nz {
            let z = grid.z(k);
            for j in 0..grid.ny {
                let y = grid.y(j);
                for i in 0..grid.nx {
                    data.push(f(grid.x(i), y, z));
                }
            }
        }
        ScalarField { grid, data }
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.data)
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Weighted L2 inner product.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        weighted_dot(&self.grid, &self.data, &other.data)
    }

    pub fn l2_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        ScalarField { grid: self.grid, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Weighted mean over the box.
    pub fn mean(&self) -> f64 {
        self.dot(&ScalarField::constant(self.grid, 1.0)) / self.grid.volume()
    }

    /// Values on the surface layer `z = 0`.
    pub fn surface_trace(&self) -> SurfaceField {
        let g = &self.grid;
        let off = g.surface_len() * g.top();
        SurfaceField { grid: *g, data: self.data[off..off + g.surface_len()].to_vec() }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.idx(i, j, k)]
    }
}

/// A field on the surface nodes `z = 0`, stored x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceField {
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl SurfaceField {
    pub fn zeros(grid: Grid) -> SurfaceField {
        SurfaceField { grid, data: vec![0.0; grid.surface_len()] }
    }

    pub fn constant(grid: Grid, value: f64) -> SurfaceField {
        SurfaceField { grid, data: vec![value; grid.surface_len()] }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<SurfaceField> {
        if data.len() != grid.surface_len() {
            return Err(Error::LengthMismatch { expected: grid.surface_len(), got: data.len() });
        }
        check_finite(&data)?;
        Ok(SurfaceField { grid, data })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> SurfaceField {
        let mut data = Vec::with_capacity(grid.surface_len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.x(i), grid.y(j)));
            }
        }
        SurfaceField { grid, data }
    }

    pub fn dot(&self, other: &SurfaceField) -> f64 {
        weighted_dot_2d(&self.grid, &self.data, &other.data)
    }

    pub fn l2_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.dot(&SurfaceField::constant(self.grid, 1.0)) / (self.grid.lx * self.grid.ly)
    }

    pub fn axpy(&mut self, a: f64, other: &SurfaceField) {
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }
}

/// Horizontal vector field on volume nodes; `u` is the x component, `v` the y component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HVectorField {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl HVectorField {
    pub fn zeros(grid: Grid) -> HVectorField {
        HVectorField { grid, u: vec![0.0; grid.len()], v: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64, f64) -> (f64, f64)) -> HVectorField {
        let mut out = HVectorField::zeros(grid);
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let (a, b) = f(grid.x(i), grid.y(j), grid.z(k));
                    let n = grid.idx(i, j, k);
                    out.u[n] = a;
                    out.v[n] = b;
                }
            }
        }
        out
    }

    pub fn dot(&self, other: &HVectorField) -> f64 {
        weighted_dot(&self.grid, &self.u, &other.u) + weighted_dot(&self.grid, &self.v, &other.v)
    }

    pub fn l2_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    pub fn axpy(&mut self, a: f64, other: &HVectorField) {
        for (s, o) in self.u.iter_mut().zip(&other.u) {
            *s += a * o;
        }
        for (s, o) in self.v.iter_mut().zip(&other.v) {
            *s += a * o;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid::new(2, 5, 5, 1.0, 1.0, 1.0).is_err());
        assert!(Grid::new(5, 5, 5, 0.0, 1.0, 1.0).is_err());
        assert!(Grid::new(5, 5, 5, 1.0, 1.0, -1.0).is_err());
        assert!(Grid::new(5, 5, 5, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn trapezoid_integrates_bilinear_exactly() {
        let g = Grid::new(5, 4, 6, 2.0, 3.0, 0.5).unwrap();
        let f = ScalarField::from_fn(g, |x, y, z| (1.0 + x) * (2.0 - y) * (z + 1.0));
        let one = ScalarField::constant(g, 1.0);
        // int (1+x) dx over [0,2] = 4, int (2-y) over [0,3] = 1.5, int (z+1) over [-0.5,0] = 0.375
        assert!((f.dot(&one) - 4.0 * 1.5 * 0.375).abs() < 1e-12);
        let w: f64 = g.volume_weights().iter().sum();
        assert!((w - g.volume()).abs() < 1e-12);
    }

    #[test]
    fn from_vec_reports_nan_position() {
        let g = Grid::new(3, 3, 3, 1.0, 1.0, 1.0).unwrap();
        let mut d = vec![0.0; 27];
        d[11] = f64::NAN;
        match ScalarField::from_vec(g, d) {
            Err(Error::NonFinite { index }) => assert_eq!(index, 11),
            other => panic!("unexpected {other:?}"),
        }
    }
}
