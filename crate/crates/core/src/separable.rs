//! Operators that are Kronecker sums of weighted-symmetric 1D operators.
//!
//! Each axis carries a dense 1D matrix `M` acting on a contiguous range of active
//! nodes, symmetric with respect to the trapezoid weights of those nodes. Its
//! eigenvectors are weight-orthonormal, so the tensor-product modes diagonalize the
//! full operator and shifted solves cost three small dense transforms.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::axis::lines;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Axis1D {
    /// Full line length.
    pub n: usize,
    /// First active node.
    pub lo: usize,
    /// Number of active nodes.
    pub m: usize,
    /// Ascending eigenvalues.
    pub evals: Vec<f64>,
    /// `modes[c * m + r]` is mode `c` at active node `r`.
    pub modes: Vec<f64>,
    /// Trapezoid weights of the active nodes.
    pub w: Vec<f64>,
}

impl Axis1D {
    /// `matrix` is `m x m` row-major over the active nodes `lo..lo+m`.
    pub fn new(matrix: &[f64], weights: &[f64], n: usize, lo: usize) -> Result<Axis1D> {
        let m = weights.len();
        if matrix.len() != m * m || lo + m > n || m == 0 {
            return Err(Error::InvalidParameter("inconsistent 1D operator sizes".into()));
        }
        let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let s = DMatrix::from_fn(m, m, |r, c| {
            let a = sw[r] * matrix[r * m + c] / sw[c];
            let b = sw[c] * matrix[c * m + r] / sw[r];
            0.5 * (a + b)
        });
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut evals = Vec::with_capacity(m);
        let mut modes = vec![0.0; m * m];
        for (c, &src) in order.iter().enumerate() {
            evals.push(eig.eigenvalues[src]);
            let col: Vec<f64> = (0..m).map(|r| eig.eigenvectors[(r, src)] / sw[r]).collect();
            let big = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let sign = match col.iter().find(|v| v.abs() > 1e-8 * big) {
                Some(v) if *v < 0.0 => -1.0,
                _ => 1.0,
            };
            for r in 0..m {
                modes[c * m + r] = sign * col[r];
            }
        }
        Ok(Axis1D { n, lo, m, evals, modes, w: weights.to_vec() })
    }

    fn forward_line(&self, line: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let mode = &self.modes[c * self.m..(c + 1) * self.m];
            let mut s = 0.0;
            for r in 0..self.m {
                s += mode[r] * self.w[r] * line[self.lo + r];
            }
            *o = s;
        }
    }

    fn inverse_line(&self, coef: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (c, &a) in coef.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let mode = &self.modes[c * self.m..(c + 1) * self.m];
            for r in 0..self.m {
                out[self.lo + r] += a * mode[r];
            }
        }
    }

    /// Mode `c` expanded onto the full line (zero on inactive nodes).
    pub fn mode_on_line(&self, c: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        out[self.lo..self.lo + self.m].copy_from_slice(&self.modes[c * self.m..(c + 1) * self.m]);
        out
    }
}

fn map_axis(
    data: &[f64],
    dims: [usize; 3],
    axis: usize,
    new_n: usize,
    f: impl Fn(&[f64], &mut [f64]),
) -> (Vec<f64>, [usize; 3]) {
    let mut out_dims = dims;
    out_dims[axis] = new_n;
    let (starts_in, s_in, n_in) = lines(dims, axis);
    let (starts_out, s_out, _) = lines(out_dims, axis);
    let mut out = vec![0.0; out_dims.iter().product()];
    let mut buf_in = vec![0.0; n_in];
    let mut buf_out = vec![0.0; new_n];
    for (&bi, &bo) in starts_in.iter().zip(&starts_out) {
        for (r, v) in buf_in.iter_mut().enumerate() {
            *v = data[bi + r * s_in];
        }
        f(&buf_in, &mut buf_out);
        for (r, v) in buf_out.iter().enumerate() {
            out[bo + r * s_out] = *v;
        }
    }
    (out, out_dims)
}

/// Kronecker sum `M_x + M_y + M_z` on a 3D tensor grid.
#[derive(Debug, Clone)]
pub struct SeparableOp {
    pub dims: [usize; 3],
    pub axes: [Axis1D; 3],
    /// Modal eigenvalues, x-fastest over `[mx, my, mz]`.
    pub lambda: Vec<f64>,
}

impl SeparableOp {
    pub fn new(axes: [Axis1D; 3]) -> SeparableOp {
        let dims = [axes[0].n, axes[1].n, axes[2].n];
        let mut lambda = Vec::with_capacity(axes[0].m * axes[1].m * axes[2].m);
        for &c in &axes[2].evals {
            for &b in &axes[1].evals {
                for &a in &axes[0].evals {
                    lambda.push(a + b + c);
                }
            }
        }
        SeparableOp { dims, axes, lambda }
    }

    pub fn modal_dims(&self) -> [usize; 3] {
        [self.axes[0].m, self.axes[1].m, self.axes[2].m]
    }

    /// Weighted projections onto all tensor modes.
    pub fn forward(&self, data: &[f64]) -> Vec<f64> {
        let mut cur = data.to_vec();
        let mut dims = self.dims;
        for (a, ax) in self.axes.iter().enumerate() {
            let (next, nd) = map_axis(&cur, dims, a, ax.m, |l, o| ax.forward_line(l, o));
            cur = next;
            dims = nd;
        }
        cur
    }

    /// Synthesis from modal coefficients; inactive nodes come out zero.
    pub fn inverse(&self, coef: &[f64]) -> Vec<f64> {
        let mut cur = coef.to_vec();
        let mut dims = self.modal_dims();
        for (a, ax) in self.axes.iter().enumerate().rev() {
            let (next, nd) = map_axis(&cur, dims, a, ax.n, |l, o| ax.inverse_line(l, o));
            cur = next;
            dims = nd;
        }
        cur
    }

    /// Solves `(alpha I + beta M) x = r` on the active nodes.
    pub fn solve_shifted(&self, r: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
        let mut c = self.forward(r);
        for (v, l) in c.iter_mut().zip(&self.lambda) {
            *v /= alpha + beta * l;
        }
        self.inverse(&c)
    }

    /// Applies the operator through its modal form.
    pub fn apply_modal(&self, x: &[f64]) -> Vec<f64> {
        let mut c = self.forward(x);
        for (v, l) in c.iter_mut().zip(&self.lambda) {
            *v *= l;
        }
        self.inverse(&c)
    }

    /// The `count` smallest modes as `(eigenvalue, [cx, cy, cz])`, ties broken by index.
    pub fn smallest_modes(&self, count: usize) -> Vec<(f64, [usize; 3])> {
        let [mx, my, _] = self.modal_dims();
        let mut idx: Vec<usize> = (0..self.lambda.len()).collect();
        idx.sort_by(|&a, &b| self.lambda[a].total_cmp(&self.lambda[b]).then(a.cmp(&b)));
        idx.into_iter()
            .take(count)
            .map(|n| (self.lambda[n], [n % mx, (n / mx) % my, n / (mx * my)]))
            .collect()
    }

    /// Full-grid values of the tensor mode `[cx, cy, cz]`.
    pub fn mode_field(&self, c: [usize; 3]) -> Vec<f64> {
        let lx = self.axes[0].mode_on_line(c[0]);
        let ly = self.axes[1].mode_on_line(c[1]);
        let lz = self.axes[2].mode_on_line(c[2]);
        let mut out = Vec::with_capacity(self.dims.iter().product());
        for &cz in &lz {
            for &cy in &ly {
                for &cx in &lx {
                    out.push(cx * cy * cz);
                }
            }
        }
        out
    }
}
