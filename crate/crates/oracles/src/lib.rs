//! Reference values computed without the library: closed forms, series and small
//! hand-rolled solvers. Everything here works on plain numbers.

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};

/// The `n`-th positive root of `k tan(k h) = beta / k_nu`, which lies in
/// `(n pi / h, (n + 1/2) pi / h)`.
pub fn robin_neumann_root(beta: f64, k_nu: f64, h: f64, n: usize) -> f64 {
    let f = |k: f64| k * (k * h).tan() - beta / k_nu;
    let base = n as f64 * PI / h;
    let (mut lo, mut hi) = (base + 1e-14, base + PI / (2.0 * h) - 1e-14);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Series solution of `u_t = k_nu u_zz` on `(-h, 0)` with `u_z(-h) = 0` and
/// `k_nu u_z(0) + beta (u(0) - star) = 0`.
pub struct HeatSeries {
    pub star: f64,
    pub k_nu: f64,
    pub h: f64,
    wavenumbers: Vec<f64>,
    coefficients: Vec<f64>,
}

impl HeatSeries {
    pub fn new(initial: impl Fn(f64) -> f64, star: f64, k_nu: f64, beta: f64, h: f64, terms: usize) -> HeatSeries {
        // Composite Simpson projections of the initial deviation from `star`.
        let m = 20_000;
        let dz = h / m as f64;
        let mut wavenumbers = Vec::with_capacity(terms);
        let mut coefficients = Vec::with_capacity(terms);
        for n in 0..terms {
            let k = robin_neumann_root(beta, k_nu, h, n);
            let mut num = 0.0;
            for i in 0..=m {
                let z = -h + i as f64 * dz;
                let w = if i == 0 || i == m {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                num += w * (initial(z) - star) * (k * (z + h)).cos();
            }
            num *= dz / 3.0;
            let norm = h / 2.0 + (2.0 * k * h).sin() / (4.0 * k);
            wavenumbers.push(k);
            coefficients.push(num / norm);
        }
        HeatSeries { star, k_nu, h, wavenumbers, coefficients }
    }

    pub fn eval(&self, z: f64, t: f64) -> f64 {
        let mut s = self.star;
        for (k, a) in self.wavenumbers.iter().zip(&self.coefficients) {
            s += a * (-self.k_nu * k * k * t).exp() * (k * (z + self.h)).cos();
        }
        s
    }
}

/// Minimum of `1/2 int u^2 / q` over controls steering `c' = -lambda c + s u` from 0 to `x` at `t`.
pub fn lq_action(lambda: f64, q: f64, s: f64, t: f64, x: f64) -> f64 {
    lambda * x * x / (q * s * s * (1.0 - (-2.0 * lambda * t).exp()))
}

/// The same problem for implicit Euler with `n_steps` steps of size `dt` and a control that
/// is constant on `intervals` equal blocks, solved through its Lagrange condition.
pub fn lq_action_discrete(lambda: f64, q: f64, s: f64, dt: f64, n_steps: usize, intervals: usize, x: f64) -> f64 {
    let per = n_steps / intervals;
    let dtau = dt * per as f64;
    let mut sum = 0.0;
    for p in 0..intervals {
        let mut a = 0.0;
        for k in p * per..(p + 1) * per {
            a += dt * s * (1.0 + dt * lambda).powi(-((n_steps - k) as i32));
        }
        sum += a * a * q / dtau;
    }
    x * x / (2.0 * sum)
}

/// Variance of `c_N` for `c_{n+1} = (c_n + sqrt(eps) s dW_n) / (1 + dt lambda)`, `c_0 = 0`,
/// with `Var dW_n = q dt`.
pub fn implicit_ou_variance(lambda: f64, q: f64, s: f64, eps: f64, dt: f64, n_steps: usize) -> f64 {
    let r = 1.0 / (1.0 + dt * lambda);
    let mut sum = 0.0;
    let mut f = 1.0;
    for _ in 0..n_steps {
        f *= r * r;
        sum += f;
    }
    eps * s * s * q * dt * sum
}

/// `P(X >= x)` for `X ~ N(0, var)`.
pub fn gaussian_upper_tail(x: f64, var: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.sf(x / var.sqrt())
}

/// `P(|X| >= x)` for `X ~ N(0, var)`.
pub fn gaussian_two_sided_tail(x: f64, var: f64) -> f64 {
    2.0 * gaussian_upper_tail(x, var)
}
