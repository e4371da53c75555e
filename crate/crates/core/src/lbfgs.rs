//! Limited-memory BFGS with a backtracking Armijo line search.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Relative decrease below which the run is considered stalled.
    pub f_tol: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IterRecord {
    pub iteration: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub x_norm_sq: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub trace: Vec<IterRecord>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `fg(x)` returns the objective and its gradient.
pub(crate) fn minimize(
    mut fg: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: Vec<f64>,
    opts: LbfgsOptions,
) -> Result<LbfgsOutcome> {
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = fg(&x)?;
    if !f.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut trace = vec![IterRecord { iteration: 0, f, grad_norm: dot(&g, &g).sqrt(), x_norm_sq: dot(&x, &x) }];
    let mut stalls = 0;
    for it in 1..=opts.max_iter {
        let gn = dot(&g, &g).sqrt();
        if gn <= opts.grad_tol {
            return Ok(LbfgsOutcome { x, trace, converged: true });
        }
        // Two-loop recursion.
        let mut d: Vec<f64> = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        let mut step = if hist.is_empty() { (1.0 / gn).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (ft, gt) = fg(&xt)?;
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((xt, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            // No descent possible along the search direction: accept the point as stationary
            // to working precision.
            return Ok(LbfgsOutcome { x, trace, converged: gn <= opts.grad_tol * 1e3 });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > opts.memory {
                hist.pop_front();
            }
        }
        let rel = (f - fnew).abs() / f.abs().max(1e-300);
        x = xn;
        f = fnew;
        g = gnew;
        trace.push(IterRecord { iteration: it, f, grad_norm: dot(&g, &g).sqrt(), x_norm_sq: dot(&x, &x) });
        if rel < opts.f_tol {
            stalls += 1;
            if stalls >= 3 {
                return Ok(LbfgsOutcome { x, trace, converged: true });
            }
        } else {
            stalls = 0;
        }
        debug_assert_eq!(x.len(), n);
    }
    let gn = dot(&g, &g).sqrt();
    Ok(LbfgsOutcome { x, trace, converged: gn <= opts.grad_tol })
}
