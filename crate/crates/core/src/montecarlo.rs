//! Small-noise experiments: crude and importance-sampled tail probabilities, the
//! log-probability slope fit, and the vanishing-noise continuity experiment.
//!
//! Paths run in parallel, each on its own stream `(seed, path index)`. Results are
//! collected in path order and reduced sequentially, so outputs do not depend on the
//! thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::action::TargetFunctional;
use crate::error::{Error, Result};
use crate::noise::{u0_norm_sq, Recording, StreamIncrements};
use crate::skeleton::{solve_skeleton, ControlPath};
use crate::stepper::{simulate, simulate_with, Model, SimOptions, Trajectory};

/// Runs `f` on path indices `0..n` in parallel and returns the results in index order.
pub fn par_paths<T: Send>(n: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n as u64).into_par_iter().map(f).collect()
}

fn z975() -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.975)
}

/// 95% Wilson score interval for a proportion `p` observed with (effective) size `n`.
pub fn wilson_interval(p: f64, n: f64) -> (f64, f64) {
    if !(n > 0.0) {
        return (0.0, 1.0);
    }
    let z = z975();
    let z2 = z * z;
    let den = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / den;
    let half = z / den * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub eps: f64,
    pub delta: f64,
    pub n_samples: usize,
    /// Paths meeting the target.
    pub hits: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Kish effective sample size of the hit weights; `n_samples` for crude sampling.
    pub n_effective: f64,
    /// Per-path variance of the estimator's summand.
    pub summand_variance: f64,
    /// Mean likelihood ratio over all paths (1 for crude sampling).
    pub weight_mean: f64,
    pub weight_se: f64,
    /// Importance weights collapsed onto fewer than 10 effective paths.
    pub degenerate: bool,
}

fn summarise(eps: f64, delta: f64, hits: &[bool], weights: &[f64]) -> TailEstimate {
    let n = hits.len();
    let nf = n as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut w_sum = 0.0;
    let mut w_sq = 0.0;
    let mut count = 0;
    for (h, w) in hits.iter().zip(weights) {
        w_sum += w;
        w_sq += w * w;
        if *h {
            count += 1;
            sum += w;
            sum_sq += w * w;
        }
    }
    let p_hat = sum / nf;
    let var = (sum_sq / nf - p_hat * p_hat).max(0.0);
    let crude = weights.iter().all(|w| *w == 1.0);
    let n_star = if var > 0.0 { p_hat * (1.0 - p_hat) * nf / var } else { nf };
    let (ci_low, ci_high) = if p_hat <= 1.0 {
        wilson_interval(p_hat, n_star)
    } else {
        let half = z975() * (var / nf).sqrt();
        ((p_hat - half).max(0.0), p_hat + half)
    };
    let n_effective = if crude {
        nf
    } else if sum_sq > 0.0 {
        sum * sum / sum_sq
    } else {
        0.0
    };
    let w_mean = w_sum / nf;
    let w_var = (w_sq / nf - w_mean * w_mean).max(0.0);
    TailEstimate {
        eps,
        delta,
        n_samples: n,
        hits: count,
        p_hat,
        ci_low,
        ci_high,
        n_effective,
        summand_variance: var,
        weight_mean: w_mean,
        weight_se: (w_var / (nf - 1.0).max(1.0)).sqrt(),
        degenerate: !crude && count > 0 && n_effective < 10.0,
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 samples, got {n}")));
    }
    Ok(())
}

/// Crude Monte Carlo: fraction of independent paths meeting the target.
pub fn estimate_tail(
    model: &Model,
    eps: f64,
    target: &TargetFunctional,
    n_samples: usize,
    seed: u64,
) -> Result<TailEstimate> {
    check_samples(n_samples)?;
    let opts = target.snapshot_options();
    let hits = par_paths(n_samples, |i| {
        let traj = simulate(model, eps, None, seed, i, opts)?;
        target.is_met(&traj)
    })?;
    Ok(summarise(eps, target.delta, &hits, &vec![1.0; n_samples]))
}

/// Log of the likelihood ratio of the original law against the tilted one, from the
/// increments `dw` seen by the tilted run.
pub fn log_likelihood_ratio(model: &Model, chi: &ControlPath, eps: f64, dw: &[Vec<f64>]) -> f64 {
    let dt = model.dt;
    let q = &model.noise.q;
    let mut lw = 0.0;
    for (n, w) in dw.iter().enumerate() {
        let tn = model.time(n);
        let u = chi.step_average(tn, tn + dt);
        let pairing: f64 = u.iter().zip(w).zip(q).map(|((a, b), q)| a * b / q).sum();
        lw -= pairing / eps.sqrt() + 0.5 / eps * u0_norm_sq(&u, q) * dt;
    }
    lw
}

/// Simulates the dynamics with the extra drift `sigma chi` and reweights each path by the
/// likelihood ratio, giving an unbiased estimate for the untilted law.
pub fn girsanov_importance_sampling(
    model: &Model,
    target: &TargetFunctional,
    chi: &ControlPath,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<TailEstimate> {
    check_samples(n_samples)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("importance sampling needs eps > 0".into()));
    }
    chi.check_compatible(&model.noise, model.t_final)?;
    let opts = target.snapshot_options();
    let rows = par_paths(n_samples, |i| {
        let mut src = Recording { inner: StreamIncrements::new(seed, i), log: Vec::new() };
        let traj = simulate_with(model, eps, Some(chi), &mut src, opts)?;
        let lw = log_likelihood_ratio(model, chi, eps, &src.log);
        Ok((target.is_met(&traj)?, lw.exp()))
    })?;
    let (hits, weights): (Vec<bool>, Vec<f64>) = rows.into_iter().unzip();
    Ok(summarise(eps, target.delta, &hits, &weights))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpFit {
    /// Least-squares slope of `ln p_hat` against `1 / eps`.
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// `slope / (-I_ref)` when a reference action is given.
    pub ratio: Option<f64>,
    /// False when the slope is positive.
    pub valid: bool,
    pub points_used: usize,
}

pub fn ldp_fit(estimates: &[TailEstimate], i_ref: Option<f64>) -> Result<LdpFit> {
    let pts: Vec<(f64, f64)> =
        estimates.iter().filter(|e| e.p_hat > 0.0).map(|e| (1.0 / e.eps, e.p_hat.ln())).collect();
    if pts.is_empty() && !estimates.is_empty() {
        return Err(Error::Numerical("no hits at any eps; needs importance sampling".into()));
    }
    if pts.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "slope fit needs at least 3 eps values with hits, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::ZeroDenominator("slope fit with a single eps value"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_se = if pts.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LdpFit {
        slope,
        intercept,
        slope_se,
        ratio: i_ref.map(|i| slope / -i),
        valid: slope <= 0.0,
        points_used: pts.len(),
    })
}

/// Two-sample Kolmogorov–Smirnov statistic and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return (0.0, 1.0);
    }
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let p = kolmogorov_survival(lambda);
    (d, p.clamp(0.0, 1.0))
}

/// `P(K > lambda)` for the Kolmogorov distribution, with the series that converges
/// fastest on each side of 1.18.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| (((2 * k - 1) * (2 * k - 1)) as f64 * c).exp()).sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        (1..=20).map(|k| 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k * k) as f64 * lambda * lambda).exp()).sum()
    }
}

/// One member of a control family: its noise level and control.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuityCase {
    pub label: f64,
    pub eps: f64,
    pub control: ControlPath,
}

/// `chi_n = base + amplitude sin(n pi t / T) e_mode` at `eps_n = eps0 / n^2`. Each member
/// has `per_wave` intervals per half-wave, capped by the step count.
pub fn oscillating_family(
    model: &Model,
    base: &ControlPath,
    amplitude: f64,
    mode: usize,
    ns: &[usize],
    eps0: f64,
    per_wave: usize,
) -> Result<Vec<ContinuityCase>> {
    base.check_compatible(&model.noise, model.t_final)?;
    if mode >= base.m() {
        return Err(Error::InvalidParameter(format!("mode {mode} outside the noise space")));
    }
    let t_final = model.t_final;
    ns.iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::InvalidParameter("oscillation index must be positive".into()));
            }
            let p = (n * per_wave.max(1)).min(model.n_steps()).max(base.n_intervals());
            let control = ControlPath::from_fn(t_final, p, &base.q, |t| {
                let mut v = base.value_at(t).to_vec();
                v[mode] += amplitude * (n as f64 * std::f64::consts::PI * t / t_final).sin();
                v
            })?;
            Ok(ContinuityCase { label: n as f64, eps: eps0 / (n * n) as f64, control })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub label: f64,
    pub eps: f64,
    /// Mean over paths of the sup-l2 distance to the limit skeleton.
    pub mean_distance: f64,
    pub std_distance: f64,
    /// KS statistic between the terminal first-carrier coefficient under the family
    /// control and under the limit control, at the same eps.
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub rows: Vec<ContinuityRow>,
    /// Mean distances strictly decrease along the family.
    pub decreasing: bool,
    /// Last mean distance over the first.
    pub final_ratio: f64,
}

/// Distance between the controlled noisy runs of a family and the skeleton of `limit`.
pub fn weak_continuity_experiment(
    model: &Model,
    limit: &ControlPath,
    family: &[ContinuityCase],
    n_paths: usize,
    seed: u64,
) -> Result<ContinuityReport> {
    if family.is_empty() || n_paths == 0 {
        return Err(Error::InvalidParameter("continuity experiment needs cases and paths".into()));
    }
    let skel = solve_skeleton(model, limit)?;
    let dense = SimOptions { snapshot_stride: 1 };
    let coefficient = |t: &Trajectory| model.noise.carriers.coefficients(t.final_theta())[0];
    let mut rows = Vec::with_capacity(family.len());
    for case in family {
        let pairs = par_paths(n_paths, |i| {
            let tr = simulate(model, case.eps, Some(&case.control), seed, i, dense)?;
            let lim = simulate(model, case.eps, Some(limit), seed, n_paths as u64 + i, SimOptions { snapshot_stride: 0 })?;
            Ok((tr.sup_distance(&skel)?, coefficient(&tr), coefficient(&lim)))
        })?;
        let nf = n_paths as f64;
        let mean = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
        let var = pairs.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (nf - 1.0).max(1.0);
        let a: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        let (ks, pv) = ks_two_sample(&a, &b);
        rows.push(ContinuityRow {
            label: case.label,
            eps: case.eps,
            mean_distance: mean,
            std_distance: var.sqrt(),
            ks_statistic: ks,
            ks_p_value: pv,
        });
    }
    let decreasing = rows.windows(2).all(|w| w[1].mean_distance < w[0].mean_distance);
    let first = rows[0].mean_distance;
    let final_ratio = if first > 0.0 { rows.last().unwrap().mean_distance / first } else { 0.0 };
    Ok(ContinuityReport { rows, decreasing, final_ratio })
}
