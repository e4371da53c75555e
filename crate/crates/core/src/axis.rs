//! One-dimensional stencils applied along a chosen axis of a tensor array.
//!
//! Arrays are x-fastest with dimensions `[nx, ny, nz]`; surface arrays use `nz = 1`.
//! First derivatives are the summation-by-parts pair (centered interior, one-sided
//! first order at the ends) so that, with trapezoid weights `w`,
//! `w D + (w D)^T = diag(-1, 0, .., 0, 1)`.

/// Start offsets and stride of every line parallel to `axis`.
pub fn lines(dims: [usize; 3], axis: usize) -> (Vec<usize>, usize, usize) {
    let [nx, ny, nz] = dims;
    let mut starts = Vec::new();
    match axis {
        0 => {
            for k in 0..nz {
                for j in 0..ny {
                    starts.push(nx * (j + ny * k));
                }
            }
            (starts, 1, nx)
        }
        1 => {
            for k in 0..nz {
                for i in 0..nx {
                    starts.push(i + nx * ny * k);
                }
            }
            (starts, nx, ny)
        }
        2 => {
            for j in 0..ny {
                for i in 0..nx {
                    starts.push(i + nx * j);
                }
            }
            (starts, nx * ny, nz)
        }
        _ => panic!("axis {axis} out of range"),
    }
}

/// SBP first derivative along `axis`.
pub fn deriv(dims: [usize; 3], d: f64, axis: usize, f: &[f64], out: &mut [f64]) {
    let (starts, s, n) = lines(dims, axis);
    let (inv, inv2) = (1.0 / d, 0.5 / d);
    for &b in &starts {
        out[b] = (f[b + s] - f[b]) * inv;
        for i in 1..n - 1 {
            let c = b + i * s;
            out[c] = (f[c + s] - f[c - s]) * inv2;
        }
        let e = b + (n - 1) * s;
        out[e] = (f[e] - f[e - s]) * inv;
    }
}

/// Plain (unweighted) transpose of [`deriv`].
pub fn deriv_t(dims: [usize; 3], d: f64, axis: usize, g: &[f64], out: &mut [f64]) {
    let (starts, s, n) = lines(dims, axis);
    let (inv, inv2) = (1.0 / d, 0.5 / d);
    for &b in &starts {
        for i in 0..n {
            out[b + i * s] = 0.0;
        }
        // Row 0 and row n-1 are one-sided, the rest centered.
        out[b] -= g[b] * inv;
        out[b + s] += g[b] * inv;
        for i in 1..n - 1 {
            let c = b + i * s;
            out[c + s] += g[c] * inv2;
            out[c - s] -= g[c] * inv2;
        }
        let e = b + (n - 1) * s;
        out[e] += g[e] * inv;
        out[e - s] -= g[e] * inv;
    }
}

/// Compact second difference with a homogeneous Neumann ghost closure at both ends.
pub fn second_neumann(dims: [usize; 3], d: f64, axis: usize, f: &[f64], out: &mut [f64]) {
    let (starts, s, n) = lines(dims, axis);
    let inv = 1.0 / (d * d);
    for &b in &starts {
        out[b] = 2.0 * (f[b + s] - f[b]) * inv;
        for i in 1..n - 1 {
            let c = b + i * s;
            out[c] = (f[c + s] - 2.0 * f[c] + f[c - s]) * inv;
        }
        let e = b + (n - 1) * s;
        out[e] = 2.0 * (f[e - s] - f[e]) * inv;
    }
}

/// Compact second difference with homogeneous Dirichlet ends; end outputs are zero
/// and end inputs are ignored.
pub fn second_dirichlet(dims: [usize; 3], d: f64, axis: usize, f: &[f64], out: &mut [f64]) {
    let (starts, s, n) = lines(dims, axis);
    let inv = 1.0 / (d * d);
    for &b in &starts {
        let at = |i: usize| if i == 0 || i == n - 1 { 0.0 } else { f[b + i * s] };
        out[b] = 0.0;
        for i in 1..n - 1 {
            out[b + i * s] = (at(i + 1) - 2.0 * at(i) + at(i - 1)) * inv;
        }
        out[b + (n - 1) * s] = 0.0;
    }
}

/// Cumulative trapezoid integral from the bottom layer upward, per column.
pub fn cumulative_z(dims: [usize; 3], dz: f64, f: &[f64], out: &mut [f64]) {
    let (starts, s, n) = lines(dims, 2);
    for &b in &starts {
        out[b] = 0.0;
        for k in 1..n {
            let c = b + k * s;
            out[c] = out[c - s] + 0.5 * dz * (f[c - s] + f[c]);
        }
    }
}

/// Trapezoid column integral of a volume array, returned as a surface array.
pub fn column_integral(dims: [usize; 3], dz: f64, f: &[f64]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let plane = nx * ny;
    let mut out = vec![0.0; plane];
    for k in 0..nz {
        let w = crate::grid::trap_weight(nz, dz, k);
        for (o, v) in out.iter_mut().zip(&f[k * plane..(k + 1) * plane]) {
            *o += w * v;
        }
    }
    out
}

/// Dense 1D matrices (row-major, `n x n`) of the stencils above, used to build modal
/// decompositions.
pub mod dense {
    /// `-D2` with Neumann closures.
    pub fn neg_second_neumann(n: usize, d: f64) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        let inv = 1.0 / (d * d);
        m[0] = 2.0 * inv;
        m[1] = -2.0 * inv;
        for i in 1..n - 1 {
            m[i * n + i - 1] = -inv;
            m[i * n + i] = 2.0 * inv;
            m[i * n + i + 1] = -inv;
        }
        m[(n - 1) * n + n - 2] = -2.0 * inv;
        m[(n - 1) * n + n - 1] = 2.0 * inv;
        m
    }

    /// `-D2` on the `n - 2` interior nodes with Dirichlet ends.
    pub fn neg_second_dirichlet(n: usize, d: f64) -> Vec<f64> {
        let m_act = n - 2;
        let mut m = vec![0.0; m_act * m_act];
        let inv = 1.0 / (d * d);
        for i in 0..m_act {
            m[i * m_act + i] = 2.0 * inv;
            if i > 0 {
                m[i * m_act + i - 1] = -inv;
            }
            if i + 1 < m_act {
                m[i * m_act + i + 1] = -inv;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbp_identity_holds() {
        let n = 7;
        let d = 0.3;
        let w: Vec<f64> = (0..n).map(|i| crate::grid::trap_weight(n, d, i)).collect();
        // Columns of D from unit vectors.
        let mut dm = vec![0.0; n * n];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let mut out = vec![0.0; n];
            deriv([n, 1, 1], d, 0, &e, &mut out);
            for r in 0..n {
                dm[r * n + c] = out[r];
            }
        }
        for r in 0..n {
            for c in 0..n {
                let q = w[r] * dm[r * n + c] + w[c] * dm[c * n + r];
                let b = if r == c && r == 0 {
                    -1.0
                } else if r == c && r == n - 1 {
                    1.0
                } else {
                    0.0
                };
                assert!((q - b).abs() < 1e-12, "({r},{c}) {q}");
            }
        }
    }

    #[test]
    fn transpose_matches_dense() {
        let dims = [4, 3, 5];
        let len = 60;
        let f: Vec<f64> = (0..len).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let g: Vec<f64> = (0..len).map(|i| ((i * 13 % 7) as f64).cos()).collect();
        for axis in 0..3 {
            let mut df = vec![0.0; len];
            let mut dtg = vec![0.0; len];
            deriv(dims, 0.2, axis, &f, &mut df);
            deriv_t(dims, 0.2, axis, &g, &mut dtg);
            let lhs: f64 = df.iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs: f64 = f.iter().zip(&dtg).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_exact_on_linear_functions() {
        let n = 6;
        let d = 0.25;
        let f: Vec<f64> = (0..n).map(|i| 3.0 * i as f64 * d - 1.0).collect();
        let mut out = vec![0.0; n];
        deriv([n, 1, 1], d, 0, &f, &mut out);
        assert!(out.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }
}
