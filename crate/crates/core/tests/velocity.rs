use std::f64::consts::PI;

use pgld_core::constants::{smooth_field, velocity_constant};
use pgld_core::grid::{Grid, HVectorField, ScalarField, SurfaceField};
use pgld_core::params::{PhysParams, WindStress};
use pgld_core::velocity::{
    apply_a1, coriolis_work, residuals, solve_diagnostic, verify_estimate, DiagnosticSolver, DEFAULT_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> Grid {
    Grid::new(9, 8, 6, 1.0, 1.2, 0.5).unwrap()
}

fn params() -> PhysParams {
    PhysParams { a_h: 0.6, a_nu: 1.4, f0: 1.0, beta_cor: 0.5, ..Default::default() }
}

fn wind(g: Grid) -> WindStress {
    WindStress {
        x: SurfaceField::from_fn(g, |_, y| (PI * y / g.ly).cos()),
        y: SurfaceField::from_fn(g, |x, _| 0.3 * (PI * x / g.lx).cos()),
    }
}

#[test]
fn a1_vanishes_on_zero_and_constant_fields() {
    let g = grid();
    let p = params();
    let z = apply_a1(&HVectorField::zeros(g), &p, None);
    assert_eq!(z.max_abs(), 0.0);
    // A constant is not zero on the no-normal-flow walls, so only nodes at least two
    // cells from a component's own walls see a flat stencil.
    let c = apply_a1(&HVectorField::from_fn(g, |_, _, _| (1.5, -0.5)), &p, None);
    for k in 0..g.nz {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let idx = g.idx(i, j, k);
                if (2..g.nx - 2).contains(&i) {
                    assert!(c.u[idx].abs() < 1e-10);
                }
                if (2..g.ny - 2).contains(&j) {
                    assert!(c.v[idx].abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn a1_on_separable_mode_is_second_order() {
    // u = sin(pi x / lx) cos(pi y / ly) cos(pi z / h) is zero on its x walls and has zero
    // normal derivative elsewhere, so -A_h lap u - A_nu u_zz = (A_h (kx^2 + ky^2) + A_nu kz^2) u.
    let p = params();
    let mut err = Vec::new();
    for n in [9usize, 17, 33] {
        let g = Grid::new(n, n, n, 1.0, 1.5, 0.5).unwrap();
        let (kx, ky, kz) = (PI / g.lx, PI / g.ly, PI / g.h);
        let lam = p.a_h * (kx * kx + ky * ky) + p.a_nu * kz * kz;
        let v = HVectorField::from_fn(g, |x, y, z| ((kx * x).sin() * (ky * y).cos() * (kz * z).cos(), 0.0));
        let r = apply_a1(&v, &p, None);
        let e = r.u.iter().zip(&v.u).map(|(a, b)| (a - lam * b).abs()).fold(0.0, f64::max);
        err.push(e / lam);
        assert!(r.v.iter().all(|x| x.abs() < 1e-9));
    }
    for w in err.windows(2) {
        assert!((w[0] / w[1]).log2() > 1.8, "{err:?}");
    }
}

#[test]
fn uniform_temperature_gives_rest() {
    let g = grid();
    let s = solve_diagnostic(&ScalarField::constant(g, 2.0), &WindStress::zeros(g), &params(), DEFAULT_TOL).unwrap();
    assert!(s.v.max_abs() < 1e-12);
    assert!(s.p_s.data.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn wind_driven_solution_meets_residual_tolerance() {
    let g = grid();
    let p = params();
    let w = wind(g);
    let s = solve_diagnostic(&ScalarField::zeros(g), &w, &p, DEFAULT_TOL).unwrap();
    assert!(s.v.max_abs() > 1e-3);
    let (rm, rc) = residuals(&ScalarField::zeros(g), &w, &s.v, &s.p_s, &p);
    assert!(rm <= DEFAULT_TOL && rc <= DEFAULT_TOL, "{rm} {rc}");
    assert!(s.p_s.mean().abs() < 1e-13);
}

#[test]
fn solve_is_linear_in_the_data() {
    let g = grid();
    let p = params();
    let solver = DiagnosticSolver::new(g, p, DEFAULT_TOL).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t1 = smooth_field(g, &mut rng);
    let t2 = smooth_field(g, &mut rng);
    let w = wind(g);
    let a = solver.solve(&t1, &w).unwrap();
    let b = solver.solve(&t2, &WindStress::zeros(g)).unwrap();
    let mut sum = t1.clone();
    sum.axpy(1.0, &t2);
    let c = solver.solve(&sum, &w).unwrap();
    let mut dv = a.v.clone();
    dv.axpy(1.0, &b.v);
    dv.axpy(-1.0, &c.v);
    assert!(dv.l2() <= 10.0 * DEFAULT_TOL, "{}", dv.l2());
    let mut dp = a.p_s.clone();
    dp.axpy(1.0, &b.p_s);
    dp.axpy(-1.0, &c.p_s);
    assert!(dp.l2() <= 10.0 * DEFAULT_TOL, "{}", dp.l2());
}

#[test]
fn repeated_solves_agree_and_pressure_gauge_is_free() {
    let g = grid();
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let th = smooth_field(g, &mut rng);
    let w = wind(g);
    let a = solve_diagnostic(&th, &w, &p, DEFAULT_TOL).unwrap();
    let b = solve_diagnostic(&th, &w, &p, DEFAULT_TOL).unwrap();
    let mut dv = a.v.clone();
    dv.axpy(-1.0, &b.v);
    assert!(dv.l2() < 10.0 * DEFAULT_TOL);
    let (r0, _) = residuals(&th, &w, &a.v, &a.p_s, &p);
    let mut shifted = a.p_s.clone();
    shifted.data.iter_mut().for_each(|v| *v += 4.0);
    let (r1, _) = residuals(&th, &w, &a.v, &shifted, &p);
    assert!((r0 - r1).abs() < 1e-12);
    assert!(a.p_s.mean().abs() < 1e-13);
}

#[test]
fn coriolis_does_no_work() {
    let g = grid();
    let p = params();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let mut v = HVectorField::zeros(g);
        v.u.iter_mut().chain(v.v.iter_mut()).for_each(|x| *x = rng.gen_range(-1.0..1.0));
        assert!(coriolis_work(&v, &p).abs() < 1e-12 * v.l2_sq().max(1.0));
    }
}

#[test]
fn estimate_quotient_properties() {
    let g = grid();
    let p = params();
    let solver = DiagnosticSolver::new(g, p, DEFAULT_TOL).unwrap();
    let z = solver.solve(&ScalarField::zeros(g), &WindStress::zeros(g)).unwrap();
    assert!(verify_estimate(&ScalarField::zeros(g), &WindStress::zeros(g), &z).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let th = smooth_field(g, &mut rng);
    let w = wind(g);
    let s = solver.solve(&th, &w).unwrap();
    let q = verify_estimate(&th, &w, &s).unwrap();
    assert!(q.is_finite() && q > 0.0);
    let c = -2.5;
    let mut th2 = th.clone();
    th2.scale(c);
    let mut w2 = w.clone();
    w2.x.data.iter_mut().chain(w2.y.data.iter_mut()).for_each(|v| *v *= c);
    let s2 = solver.solve(&th2, &w2).unwrap();
    let q2 = verify_estimate(&th2, &w2, &s2).unwrap();
    assert!((q - q2).abs() < 1e-8 * q);
}

#[test]
fn velocity_constant_is_stable_under_refinement() {
    let p = params();
    let a = velocity_constant(Grid::new(9, 9, 5, 1.0, 1.0, 0.5).unwrap(), &p, 200, 3).unwrap();
    let b = velocity_constant(Grid::new(17, 17, 9, 1.0, 1.0, 0.5).unwrap(), &p, 200, 3).unwrap();
    assert!((b - a).abs() <= 0.2 * a, "{a} vs {b}");
}
