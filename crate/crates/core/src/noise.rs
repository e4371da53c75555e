//! Finite-mode Q-Wiener noise and the diffusion coefficient `sigma(t, theta)`.
//!
//! The noise space is spanned by `m` carrier modes `omega_j` (eigenmodes of `A2`).
//! A vector `u` in that space is stored by its coefficients `u_j`; the Cameron–Martin
//! inner product is `<u, v>_U0 = sum_j u_j v_j / q_j`. A Wiener increment over `dt`
//! has independent coefficients with variance `q_j dt`.
//!
//! `sigma(t, theta) u = m(t) sum_j u_j g_j(c_j) omega_j` with `c_j = <theta, omega_j>`
//! and `m(t) = 1 + a sin(w t)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::operators::ModeBasis;

/// Coefficients of a vector in the noise space.
pub type U0Vector = Vec<f64>;

pub fn u0_norm_sq(u: &[f64], q: &[f64]) -> f64 {
    u.iter().zip(q).map(|(a, b)| a * a / b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaKind {
    /// `g_j = s_j`
    Constant,
    /// `g_j(c) = s_j (offset + slope sin(c / length))`
    DiagonalLipschitz { offset: f64, slope: f64, length: f64 },
    /// `g_j(c) = s_j clamp(c, -clip, clip)`
    LinearClipped { clip: f64 },
}

/// Time factor `1 + amplitude sin(frequency t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeModulation {
    pub amplitude: f64,
    pub frequency: f64,
}

impl TimeModulation {
    pub fn factor(&self, t: f64) -> f64 {
        1.0 + self.amplitude * (self.frequency * t).sin()
    }
}

/// Declared constants of the growth, Lipschitz and time-regularity assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConstants {
    /// `|sigma(t, theta)|_HS^2 <= k (1 + |theta|^2)`
    pub k: f64,
    /// `|sigma(t, a) - sigma(t, b)|_HS^2 <= l |a - b|^2`
    pub l: f64,
    /// `|sigma(t, theta) - sigma(s, theta)|_HS <= l1 |t - s|^gamma (1 + |theta|)`
    pub l1: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub carriers: ModeBasis,
    pub q: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub kind: SigmaKind,
    pub modulation: TimeModulation,
    pub declared: NoiseConstants,
}

impl NoiseModel {
    pub fn new(
        carriers: ModeBasis,
        q: Vec<f64>,
        amplitudes: Vec<f64>,
        kind: SigmaKind,
        modulation: TimeModulation,
    ) -> Result<NoiseModel> {
        let m = carriers.len();
        if q.len() != m || amplitudes.len() != m {
            return Err(Error::InvalidParameter(format!(
                "noise has {m} carriers but {} variances and {} amplitudes",
                q.len(),
                amplitudes.len()
            )));
        }
        if let Some(bad) = q.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!("noise variance {bad} must be positive")));
        }
        if amplitudes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("noise amplitudes must be finite".into()));
        }
        match kind {
            SigmaKind::DiagonalLipschitz { offset, slope, length } => {
                if !(length > 0.0 && offset.is_finite() && slope.is_finite()) {
                    return Err(Error::InvalidParameter("diagonal_lipschitz needs length > 0".into()));
                }
            }
            SigmaKind::LinearClipped { clip } => {
                if !(clip > 0.0 && clip.is_finite()) {
                    return Err(Error::InvalidParameter("linear_clipped needs clip > 0".into()));
                }
            }
            SigmaKind::Constant => {}
        }
        if !(modulation.amplitude.is_finite() && modulation.frequency.is_finite()) {
            return Err(Error::InvalidParameter("time modulation must be finite".into()));
        }
        let mut model = NoiseModel {
            carriers,
            q,
            amplitudes,
            kind,
            modulation,
            declared: NoiseConstants { k: 0.0, l: 0.0, l1: 0.0, gamma: 1.0 },
        };
        model.declared = model.natural_constants();
        Ok(model)
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    /// Bounds derived from the coefficient functions.
    fn natural_constants(&self) -> NoiseConstants {
        let (bound, lip): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>) = match self.kind {
            SigmaKind::Constant => (Box::new(|s: f64| s.abs()), Box::new(|_| 0.0)),
            SigmaKind::DiagonalLipschitz { offset, slope, length } => (
                Box::new(move |s: f64| s.abs() * (offset.abs() + slope.abs())),
                Box::new(move |s: f64| s.abs() * slope.abs() / length),
            ),
            SigmaKind::LinearClipped { clip } => {
                (Box::new(move |s: f64| s.abs() * clip), Box::new(|s: f64| s.abs()))
            }
        };
        let k0: f64 = self.q.iter().zip(&self.amplitudes).map(|(q, s)| q * bound(*s).powi(2)).sum();
        let l0 = self
            .q
            .iter()
            .zip(&self.amplitudes)
            .map(|(q, s)| q * lip(*s).powi(2))
            .fold(0.0, f64::max);
        let mmax = (1.0 + self.modulation.amplitude.abs()).powi(2);
        NoiseConstants {
            k: k0 * mmax,
            l: l0 * mmax,
            l1: self.modulation.amplitude.abs() * self.modulation.frequency.abs() * k0.sqrt(),
            gamma: 1.0,
        }
    }

    /// `g_j(t, c_j)` for all carriers.
    pub fn gains(&self, t: f64, coef: &[f64]) -> Vec<f64> {
        let m = self.modulation.factor(t);
        self.amplitudes
            .iter()
            .zip(coef)
            .map(|(s, c)| m * s * self.shape(*c))
            .collect()
    }

    fn shape(&self, c: f64) -> f64 {
        match self.kind {
            SigmaKind::Constant => 1.0,
            SigmaKind::DiagonalLipschitz { offset, slope, length } => offset + slope * (c / length).sin(),
            SigmaKind::LinearClipped { clip } => c.clamp(-clip, clip),
        }
    }

    /// Derivatives `d g_j / d c_j`.
    pub fn gain_slopes(&self, t: f64, coef: &[f64]) -> Vec<f64> {
        let m = self.modulation.factor(t);
        self.amplitudes
            .iter()
            .zip(coef)
            .map(|(s, c)| {
                m * s * match self.kind {
                    SigmaKind::Constant => 0.0,
                    SigmaKind::DiagonalLipschitz { slope, length, .. } => slope / length * (c / length).cos(),
                    SigmaKind::LinearClipped { clip } => {
                        if c.abs() < clip {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect()
    }

    pub fn depends_on_state(&self) -> bool {
        !matches!(self.kind, SigmaKind::Constant)
    }

    /// Carrier coefficients of `theta`, skipped (zeros) when sigma ignores the state.
    pub fn state_coefficients(&self, theta: &ScalarField) -> Vec<f64> {
        if self.depends_on_state() {
            self.carriers.coefficients(theta)
        } else {
            vec![0.0; self.m()]
        }
    }

    pub fn apply_sigma(&self, t: f64, theta: &ScalarField, u: &[f64]) -> Result<ScalarField> {
        if theta.grid != self.carriers.grid {
            return Err(Error::GridMismatch);
        }
        if u.len() != self.m() {
            return Err(Error::LengthMismatch { expected: self.m(), got: u.len() });
        }
        let gains = self.gains(t, &self.state_coefficients(theta));
        Ok(self.synthesize_scaled(&gains, u))
    }

    /// `sum_j gains_j u_j omega_j`
    pub fn synthesize_scaled(&self, gains: &[f64], u: &[f64]) -> ScalarField {
        let coef: Vec<f64> = gains.iter().zip(u).map(|(g, x)| g * x).collect();
        self.carriers.synthesize(&coef)
    }

    /// Hilbert–Schmidt norm squared from the coefficient matrix.
    pub fn hs_norm_sq(&self, t: f64, theta: &ScalarField) -> f64 {
        let gains = self.gains(t, &self.state_coefficients(theta));
        self.q.iter().zip(&gains).map(|(q, g)| q * g * g).sum()
    }

    /// Hilbert–Schmidt norm squared as the sum of squared images of a U0-orthonormal basis.
    pub fn hs_norm_sq_by_images(&self, t: f64, theta: &ScalarField) -> Result<f64> {
        let mut total = 0.0;
        for j in 0..self.m() {
            let mut e = vec![0.0; self.m()];
            e[j] = self.q[j].sqrt();
            total += self.apply_sigma(t, theta, &e)?.l2_sq();
        }
        Ok(total)
    }

    pub fn trace_q(&self) -> f64 {
        self.q.iter().sum()
    }
}

/// Independent Gaussian stream keyed by `(master_seed, sample_index)`, addressable by step.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    pub master_seed: u64,
    pub sample_index: u64,
}

/// Words reserved per step; enough for far more normals than any noise model uses.
const WORDS_PER_STEP_SHIFT: u32 = 24;

impl RngStream {
    pub fn new(master_seed: u64, sample_index: u64) -> RngStream {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(sample_index);
        RngStream { rng, master_seed, sample_index }
    }

    /// Fills `out` with standard normals belonging to `step`.
    pub fn normals(&mut self, step: u64, out: &mut [f64]) {
        self.rng.set_word_pos((step as u128) << WORDS_PER_STEP_SHIFT);
        for o in out.iter_mut() {
            *o = self.rng.sample(StandardNormal);
        }
    }

    /// Uniform draws in `[0, 1)` belonging to `step`, offset from the normals.
    pub fn uniforms(&mut self, step: u64, out: &mut [f64]) {
        self.rng.set_word_pos(((step as u128) << WORDS_PER_STEP_SHIFT) + (1u128 << (WORDS_PER_STEP_SHIFT - 1)));
        for o in out.iter_mut() {
            *o = self.rng.gen::<f64>();
        }
    }
}

/// Wiener increment over `dt`: coefficients `sqrt(q_j dt) Z_j`.
pub fn sample_increment(q: &[f64], dt: f64, stream: &mut RngStream, step: u64) -> U0Vector {
    let mut z = vec![0.0; q.len()];
    if dt == 0.0 {
        return z;
    }
    stream.normals(step, &mut z);
    z.iter().zip(q).map(|(z, q)| (q * dt).sqrt() * z).collect()
}

/// Supplies the Wiener increment of each step.
pub trait IncrementSource {
    fn increment(&mut self, step: usize, dt: f64, q: &[f64]) -> U0Vector;
}

/// No noise.
pub struct NoIncrements;

impl IncrementSource for NoIncrements {
    fn increment(&mut self, _step: usize, _dt: f64, q: &[f64]) -> U0Vector {
        vec![0.0; q.len()]
    }
}

/// Increments built from a stream on a grid `fine` times finer than the caller's step,
/// so runs at different step sizes share one Brownian path.
pub struct StreamIncrements {
    pub stream: RngStream,
    pub fine: usize,
}

impl StreamIncrements {
    pub fn new(master_seed: u64, sample_index: u64) -> StreamIncrements {
        StreamIncrements { stream: RngStream::new(master_seed, sample_index), fine: 1 }
    }

    pub fn coupled(master_seed: u64, sample_index: u64, fine: usize) -> StreamIncrements {
        StreamIncrements { stream: RngStream::new(master_seed, sample_index), fine: fine.max(1) }
    }
}

impl IncrementSource for StreamIncrements {
    fn increment(&mut self, step: usize, dt: f64, q: &[f64]) -> U0Vector {
        if self.fine == 1 {
            return sample_increment(q, dt, &mut self.stream, step as u64);
        }
        let dtf = dt / self.fine as f64;
        let mut acc = vec![0.0; q.len()];
        for i in 0..self.fine {
            let inc = sample_increment(q, dtf, &mut self.stream, (step * self.fine + i) as u64);
            acc.iter_mut().zip(&inc).for_each(|(a, b)| *a += b);
        }
        acc
    }
}

/// Records every increment handed out by an inner source.
pub struct Recording<S> {
    pub inner: S,
    pub log: Vec<U0Vector>,
}

impl<S: IncrementSource> IncrementSource for Recording<S> {
    fn increment(&mut self, step: usize, dt: f64, q: &[f64]) -> U0Vector {
        let inc = self.inner.increment(step, dt, q);
        self.log.push(inc.clone());
        inc
    }
}

/// Empirical maxima of the assumption quotients over random samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub declared: NoiseConstants,
    pub growth_max: f64,
    pub lipschitz_max: f64,
    pub holder_max: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Samples random states (including large ones, `l2` up to 1e3) and times in `[0, t_max]`.
pub fn verify_assumptions(model: &NoiseModel, n_samples: usize, t_max: f64, seed: u64) -> Result<AssumptionReport> {
    if n_samples < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 samples, got {n_samples}")));
    }
    let grid = model.carriers.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_state = |rng: &mut ChaCha8Rng| -> ScalarField {
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let mut f = ScalarField::zeros(grid);
        for v in f.data.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        // Mix in carrier directions so the state-dependent gains are exercised.
        for m in &model.carriers.modes {
            f.axpy(rng.sample::<f64, _>(StandardNormal) * 3.0, m);
        }
        let n = f.l2();
        f.scale(scale / n.max(1e-300));
        f
    };
    let (mut growth, mut lip, mut hold) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n_samples {
        let a = random_state(&mut rng);
        let b = {
            let mut b = a.clone();
            let d = random_state(&mut rng);
            b.axpy(rng.gen_range(1e-3..1.0), &d);
            b
        };
        let t = rng.gen_range(0.0..t_max.max(1e-12));
        let s = rng.gen_range(0.0..t_max.max(1e-12));
        growth = growth.max(model.hs_norm_sq(t, &a) / (1.0 + a.l2_sq()));
        let ga = model.gains(t, &model.state_coefficients(&a));
        let gb = model.gains(t, &model.state_coefficients(&b));
        let diff: f64 = model.q.iter().zip(ga.iter().zip(&gb)).map(|(q, (x, y))| q * (x - y).powi(2)).sum();
        let dist = a.sub(&b).l2_sq();
        if dist > 0.0 {
            lip = lip.max(diff / dist);
        }
        if t != s {
            let gs = model.gains(s, &model.state_coefficients(&a));
            let dt: f64 = model.q.iter().zip(ga.iter().zip(&gs)).map(|(q, (x, y))| q * (x - y).powi(2)).sum();
            hold = hold.max(dt.sqrt() / ((t - s).abs().powf(model.declared.gamma) * (1.0 + a.l2())));
        }
    }
    let d = model.declared;
    let slack = 1.0 + 1e-12;
    let pass = growth <= d.k * slack && lip <= d.l * slack && hold <= d.l1 * slack;
    Ok(AssumptionReport { declared: d, growth_max: growth, lipschitz_max: lip, holder_max: hold, samples: n_samples, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::operators::eigenmodes_a2;
    use crate::params::PhysParams;

    fn model(kind: SigmaKind) -> NoiseModel {
        let g = Grid::new(5, 4, 4, 1.0, 1.0, 1.0).unwrap();
        let basis = eigenmodes_a2(&g, &PhysParams::default(), 3).unwrap();
        NoiseModel::new(basis, vec![1.0, 0.5, 0.25], vec![2.0, 1.0, 1.5], kind, TimeModulation::default()).unwrap()
    }

    #[test]
    fn constant_sigma_maps_unit_vector_to_scaled_mode() {
        let m = model(SigmaKind::Constant);
        let th = ScalarField::zeros(m.carriers.grid);
        let out = m.apply_sigma(0.3, &th, &[1.0, 0.0, 0.0]).unwrap();
        for (a, b) in out.data.iter().zip(&m.carriers.modes[0].data) {
            assert!((a - 2.0 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn hs_norm_two_ways() {
        let m = model(SigmaKind::DiagonalLipschitz { offset: 0.5, slope: 1.0, length: 1.0 });
        let th = ScalarField::from_fn(m.carriers.grid, |x, y, z| x - y * z);
        let a = m.hs_norm_sq(0.2, &th);
        let b = m.hs_norm_sq_by_images(0.2, &th).unwrap();
        assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }

    #[test]
    fn zero_dt_increment_is_zero() {
        let mut s = RngStream::new(1, 2);
        assert!(sample_increment(&[1.0, 2.0], 0.0, &mut s, 5).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn streams_are_addressable() {
        let mut a = RngStream::new(9, 3);
        let mut b = RngStream::new(9, 3);
        let x5 = sample_increment(&[1.0; 4], 0.1, &mut a, 5);
        let _ = sample_increment(&[1.0; 4], 0.1, &mut b, 2);
        let y5 = sample_increment(&[1.0; 4], 0.1, &mut b, 5);
        assert_eq!(x5, y5);
        let mut c = RngStream::new(9, 4);
        assert_ne!(x5, sample_increment(&[1.0; 4], 0.1, &mut c, 5));
    }
}
