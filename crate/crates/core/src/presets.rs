//! Ready-made configurations used by the tests, the acceptance suite and the CLI.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::{Grid, ScalarField, SurfaceField};
use crate::noise::{NoiseModel, SigmaKind, TimeModulation};
use crate::operators::eigenmodes_a2;
use crate::params::{ForcingSet, HeatSource, PhysParams, WindStress};
use crate::stepper::Model;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOptions {
    pub dims: [usize; 3],
    pub lengths: [f64; 3],
    pub t_final: f64,
    pub dt: f64,
    pub kind: SigmaKind,
    pub m_noise: usize,
    pub advection: bool,
    /// Wind, surface temperature and heat source switched on.
    pub forcing: bool,
}

impl Default for BoxOptions {
    fn default() -> Self {
        BoxOptions {
            dims: [9, 7, 5],
            lengths: [1.0, 1.0, 0.5],
            t_final: 0.2,
            dt: 0.01,
            kind: SigmaKind::DiagonalLipschitz { offset: 1.0, slope: 0.5, length: 1.0 },
            m_noise: 3,
            advection: true,
            forcing: true,
        }
    }
}

/// A small forced box with smooth data and state-dependent noise.
pub fn small_box(opts: BoxOptions) -> Result<Model> {
    let [nx, ny, nz] = opts.dims;
    let [lx, ly, h] = opts.lengths;
    let grid = Grid::new(nx, ny, nz, lx, ly, h)?;
    let params = PhysParams { f0: 1.0, beta_cor: 0.5, ..Default::default() };
    let forcing = if opts.forcing {
        ForcingSet {
            wind: WindStress {
                x: SurfaceField::from_fn(grid, |_, y| -0.2 * (PI * y / ly).cos()),
                y: SurfaceField::zeros(grid),
            },
            theta_star: SurfaceField::from_fn(grid, |x, y| 0.5 * (PI * x / lx).cos() + 0.2 * (PI * y / ly).cos()),
            heat: HeatSource::Function(Arc::new(move |x, _, z, t| {
                0.3 * (2.0 * PI * t).cos() * (PI * x / lx).cos() * (1.0 + z / h)
            })),
        }
    } else {
        ForcingSet::zero(grid)
    };
    let theta0 = ScalarField::from_fn(grid, |x, y, z| {
        (PI * x / lx).cos() * (PI * z / h).cos() + 0.3 * (PI * y / ly).cos()
    });
    let m = opts.m_noise;
    let carriers = eigenmodes_a2(&grid, &params, m)?;
    let q: Vec<f64> = (0..m).map(|j| 0.5f64.powi(j as i32)).collect();
    let amps = vec![0.5; m];
    let noise = NoiseModel::new(
        carriers,
        q,
        amps,
        opts.kind,
        TimeModulation { amplitude: 0.2, frequency: 2.0 * PI },
    )?;
    Ok(Model::new(grid, params, forcing, noise, theta0, opts.t_final, opts.dt)?.with_advection(opts.advection))
}

/// A configuration drawn at random from moderate parameter ranges.
pub fn random_box(seed: u64, t_final: f64, dt: f64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [rng.gen_range(5..=9), rng.gen_range(5..=9), rng.gen_range(4..=7)];
    let lx = rng.gen_range(0.5..2.0);
    let ly = rng.gen_range(0.5..2.0);
    let h = rng.gen_range(0.3..1.0);
    let grid = Grid::new(dims[0], dims[1], dims[2], lx, ly, h)?;
    let params = PhysParams {
        a_h: rng.gen_range(0.5..2.0),
        a_nu: rng.gen_range(0.5..2.0),
        k_h: rng.gen_range(0.2..2.0),
        k_nu: rng.gen_range(0.2..2.0),
        beta_robin: rng.gen_range(0.2..3.0),
        f0: rng.gen_range(-2.0..2.0),
        beta_cor: rng.gen_range(0.0..1.0),
        kappa: 1.0,
    };
    let (a, b, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (kx, ky) = (rng.gen_range(1..=2) as f64, rng.gen_range(1..=2) as f64);
    let forcing = ForcingSet {
        wind: WindStress {
            x: SurfaceField::from_fn(grid, |_, y| 0.3 * a * (PI * y / ly).cos()),
            y: SurfaceField::from_fn(grid, |x, _| 0.3 * b * (PI * x / lx).cos()),
        },
        theta_star: SurfaceField::from_fn(grid, |x, y| c * (kx * PI * x / lx).cos() * (ky * PI * y / ly).cos()),
        heat: HeatSource::Function(Arc::new(move |x, y, z, t| {
            a * (PI * t).sin() * (kx * PI * x / lx).cos() + b * (z / h) * (PI * y / ly).cos()
        })),
    };
    let p0 = rng.gen_range(0.5..2.0);
    let theta0 = ScalarField::from_fn(grid, |x, y, z| {
        p0 * (PI * x / lx).cos() * (PI * z / h).cos() + c * (PI * y / ly).cos() + 0.5 * a
    });
    let m = rng.gen_range(1..=4usize);
    let carriers = eigenmodes_a2(&grid, &params, m)?;
    let q: Vec<f64> = (0..m).map(|j| rng.gen_range(0.2..1.0) / (1.0 + j as f64)).collect();
    let amps: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let kind = match rng.gen_range(0..3) {
        0 => SigmaKind::Constant,
        1 => SigmaKind::DiagonalLipschitz {
            offset: rng.gen_range(0.5..1.5),
            slope: rng.gen_range(0.1..1.0),
            length: rng.gen_range(0.2..2.0),
        },
        _ => SigmaKind::LinearClipped { clip: rng.gen_range(0.5..2.0) },
    };
    let modulation = TimeModulation { amplitude: rng.gen_range(0.0..0.5), frequency: rng.gen_range(0.0..10.0) };
    let noise = NoiseModel::new(carriers, q, amps, kind, modulation)?;
    Model::new(grid, params, forcing, noise, theta0, t_final, dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    pub nz: usize,
    pub t_final: f64,
    pub dt: f64,
    pub q: f64,
    pub amplitude: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions { nz: 9, t_final: 1.0, dt: 0.01, q: 1.0, amplitude: 1.0 }
    }
}

/// One noise mode, constant sigma, no advection, no forcing, zero initial state.
/// The carrier coefficient then follows a scalar Ornstein–Uhlenbeck recursion.
pub fn linear_one_mode(opts: LinearOptions) -> Result<Model> {
    let grid = Grid::new(3, 3, opts.nz, 1.0, 1.0, 1.0)?;
    let params = PhysParams::default();
    let carriers = eigenmodes_a2(&grid, &params, 1)?;
    let noise = NoiseModel::new(
        carriers,
        vec![opts.q],
        vec![opts.amplitude],
        SigmaKind::Constant,
        TimeModulation::default(),
    )?;
    Ok(Model::new(
        grid,
        params,
        ForcingSet::zero(grid),
        noise,
        ScalarField::zeros(grid),
        opts.t_final,
        opts.dt,
    )?
    .with_advection(false))
}

/// The one-mode linear geometry with strongly state-dependent noise, started on the mode.
/// Used for strong-order studies, where constant sigma would make the noise additive.
pub fn multiplicative_one_mode(t_final: f64, dt: f64) -> Result<Model> {
    let base = linear_one_mode(LinearOptions { t_final, dt, ..Default::default() })?;
    let carriers = base.noise.carriers.clone();
    let theta0 = carriers.modes[0].clone();
    let noise = NoiseModel::new(
        carriers,
        vec![1.0],
        vec![10.0],
        SigmaKind::DiagonalLipschitz { offset: 1.0, slope: 0.5, length: 0.5 },
        TimeModulation::default(),
    )?;
    Ok(Model::new(base.grid, base.params, base.forcing.clone(), noise, theta0, t_final, dt)?.with_advection(false))
}
