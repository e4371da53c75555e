use pgld_core::action::{
    minimize_action, objective_gradient, rate_curve, ActionOptions, GradientMode, TargetFunctional, TargetKind,
};
use pgld_core::presets::{linear_one_mode, LinearOptions};
use pgld_oracles::{lq_action, lq_action_discrete};
use pgld_core::skeleton::{control_energy, picard_solve, ControlPath, PicardOptions};
use pgld_core::stepper::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear() -> Model {
    linear_one_mode(LinearOptions { dt: 0.01, ..Default::default() }).unwrap()
}

fn lq_discrete(model: &Model, intervals: usize, x: f64) -> f64 {
    let lambda = model.noise.carriers.eigenvalues[0];
    let (q, s) = (model.noise.q[0], model.noise.amplitudes[0]);
    lq_action_discrete(lambda, q, s, model.dt, model.n_steps(), intervals, x)
}

fn target(model: &Model, delta: f64) -> TargetFunctional {
    let dir = model.noise.carriers.modes[0].clone();
    TargetFunctional::new(model, TargetKind::TerminalDistance, delta).unwrap().with_direction(&dir).unwrap()
}

#[test]
fn zero_control_has_zero_energy() {
    let c = ControlPath::zero(1.0, 4, &[1.0, 2.0]);
    assert_eq!(control_energy(&c), 0.0);
}

#[test]
fn single_interval_energy_uses_noise_weighting() {
    let c = ControlPath::uniform(0.7, vec![vec![1.5]], &[0.3]).unwrap();
    assert!((control_energy(&c) - 0.5 * 1.5 * 1.5 * 0.7 / 0.3).abs() < 1e-14);
}

#[test]
fn met_target_costs_nothing() {
    let model = linear();
    let t = TargetFunctional::new(&model, TargetKind::TerminalDistance, 0.0).unwrap();
    let r = minimize_action(&model, &t, ActionOptions::default(), None).unwrap();
    assert_eq!(r.action, 0.0);
    assert!(r.chi_star.flat().iter().all(|v| *v == 0.0));
}

#[test]
fn linear_action_matches_quadratic_program_and_closed_form() {
    let model = linear();
    let opts = ActionOptions::default();
    let x = 0.5;
    let r = minimize_action(&model, &target(&model, x), opts, None).unwrap();
    assert!(r.feasible);
    assert_eq!(r.action, control_energy(&r.chi_star));
    let qp = lq_discrete(&model, opts.intervals, x);
    assert!((r.action - qp).abs() / qp < 1e-3, "action {} vs program {qp}", r.action);
    let lambda = model.noise.carriers.eigenvalues[0];
    let cf = lq_action(lambda, model.noise.q[0], model.noise.amplitudes[0], model.t_final, x);
    assert!((r.action - cf).abs() / cf < 1e-2, "action {} vs closed form {cf}", r.action);
}

#[test]
fn doubling_threshold_quadruples_action() {
    let model = linear();
    let opts = ActionOptions { intervals: 10, ..Default::default() };
    let a = minimize_action(&model, &target(&model, 0.3), opts, None).unwrap().action;
    let b = minimize_action(&model, &target(&model, 0.6), opts, None).unwrap().action;
    assert!((b / a - 4.0).abs() < 4e-3, "ratio {}", b / a);
}

#[test]
fn action_is_symmetric_in_target_sign() {
    let model = linear();
    let opts = ActionOptions { intervals: 10, ..Default::default() };
    let dir = model.noise.carriers.modes[0].clone();
    let mut neg = dir.clone();
    neg.scale(-1.0);
    let tp = TargetFunctional::new(&model, TargetKind::TerminalDistance, 0.4).unwrap().with_direction(&dir).unwrap();
    let tn = tp.clone().with_direction(&neg).unwrap();
    let a = minimize_action(&model, &tp, opts, None).unwrap().action;
    let b = minimize_action(&model, &tn, opts, None).unwrap().action;
    assert!((a - b).abs() < 1e-9 * a);
}

#[test]
fn adjoint_matches_finite_differences() {
    let model = linear();
    let t = TargetFunctional::new(&model, TargetKind::TerminalDistance, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let values = (0..8).map(|_| vec![rng.gen_range(-0.5..0.5)]).collect();
        let chi = ControlPath::uniform(model.t_final, values, &model.noise.q).unwrap();
        let (fa, ga) = objective_gradient(&model, &t, &chi, 50.0, GradientMode::Adjoint).unwrap();
        let (ff, gf) = objective_gradient(&model, &t, &chi, 50.0, GradientMode::FiniteDifference).unwrap();
        assert_eq!(fa, ff);
        let scale = gf.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = ga.iter().zip(&gf).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-4 * scale, "adjoint error {err} vs scale {scale}");
    }
}

#[test]
fn adjoint_matches_finite_differences_with_state_dependent_noise_and_sup_target() {
    use pgld_core::presets::{small_box, BoxOptions};
    let model = small_box(BoxOptions { advection: false, t_final: 0.1, dt: 0.01, ..Default::default() }).unwrap();
    let t = TargetFunctional::new(&model, TargetKind::SupDeviation, 0.8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values = (0..5).map(|_| (0..model.noise.m()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let chi = ControlPath::uniform(model.t_final, values, &model.noise.q).unwrap();
    let (_, ga) = objective_gradient(&model, &t, &chi, 10.0, GradientMode::Adjoint).unwrap();
    let (_, gf) = objective_gradient(&model, &t, &chi, 10.0, GradientMode::FiniteDifference).unwrap();
    let scale = gf.iter().map(|v| v * v).sum::<f64>().sqrt();
    let err = ga.iter().zip(&gf).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err <= 1e-4 * scale, "adjoint error {err} vs scale {scale}");
}

#[test]
fn rate_curve_is_monotone_and_matches_closed_form() {
    let model = linear();
    let opts = ActionOptions { intervals: 10, ..Default::default() };
    let t = target(&model, 0.0);
    let curve = rate_curve(&model, &t, &[0.0, 0.2, 0.4, 0.6], opts).unwrap();
    assert_eq!(curve[0].action, 0.0);
    for w in curve.windows(2) {
        assert!(w[1].action >= w[0].action);
    }
    for p in &curve[1..] {
        let qp = lq_discrete(&model, opts.intervals, p.delta);
        assert!((p.action - qp).abs() / qp < 2e-3);
    }
}

#[test]
fn minimiser_meets_target_under_the_fixed_point_solver() {
    let model = linear();
    let t = target(&model, 0.5);
    let r = minimize_action(&model, &t, ActionOptions { intervals: 10, ..Default::default() }, None).unwrap();
    let pic = picard_solve(&model, &r.chi_star, PicardOptions::default()).unwrap();
    let g = t.evaluate(&pic.trajectory).unwrap().max(0.0);
    assert!(g <= 2.0 * r.penalty_residual + 1e-12, "residual {g} vs reported {}", r.penalty_residual);
}
