//! Restarted GMRES in a caller-supplied inner product.

pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
    pub converged: bool,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (u, v) in y.iter_mut().zip(x) {
        *u += a * v;
    }
}

/// Solves `A x = b` from `x = 0`, stopping when the residual norm drops below `tol`.
pub(crate) fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    dot: impl Fn(&[f64], &[f64]) -> f64,
    restart: usize,
    max_iter: usize,
    tol: f64,
) -> GmresOutcome {
    let n = b.len();
    let norm = |v: &[f64]| dot(v, v).max(0.0).sqrt();
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut r = b.to_vec();
    let mut beta = norm(&r);
    history.push(beta);
    while beta > tol && iterations < max_iter {
        let m = restart.min(max_iter - iterations).max(1);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        // Hessenberg columns, rotated in place.
        let mut hcols: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m {
            let mut w = apply(&basis[k]);
            let mut h = vec![0.0; k + 2];
            for (i, q) in basis.iter().enumerate() {
                h[i] = dot(&w, q);
                axpy(&mut w, -h[i], q);
            }
            // One reorthogonalization pass keeps long cycles stable.
            for (i, q) in basis.iter().enumerate() {
                let c = dot(&w, q);
                h[i] += c;
                axpy(&mut w, -c, q);
            }
            h[k + 1] = norm(&w);
            for i in 0..k {
                let t = cs[i] * h[i] + sn[i] * h[i + 1];
                h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                h[i] = t;
            }
            let den = h[k].hypot(h[k + 1]);
            let (c, s) = if den == 0.0 { (1.0, 0.0) } else { (h[k] / den, h[k + 1] / den) };
            cs.push(c);
            sn.push(s);
            h[k] = den;
            h[k + 1] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            let hk1 = norm(&w);
            hcols.push(h);
            iterations += 1;
            k += 1;
            history.push(g[k].abs());
            if g[k].abs() <= tol || hk1 == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hk1).collect());
        }
        // Back substitution on the k x k triangle.
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hcols[j][i] * y[j];
            }
            y[i] = if hcols[i][i] != 0.0 { s / hcols[i][i] } else { 0.0 };
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(&mut x, *yj, &basis[j]);
        }
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
        beta = norm(&r);
        if let Some(last) = history.last_mut() {
            *last = beta;
        }
    }
    GmresOutcome { x, iterations, residual: beta, converged: beta <= tol, history }
}
