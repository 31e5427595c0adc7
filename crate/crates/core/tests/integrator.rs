mod common;

use common::*;
use kinid_core::integrator::{
    integrate, integrate_experiment, integrate_experiments, solve, DenseIterationMatrix, IntegratorConfig,
    IntegratorError, OdeSystem, Side,
};
use kinid_core::model::{AffineExpr, BreakpointEvent, EvalError, Experiment};
use kinid_core::{KineticModel, Matrix};

/// `y' = −1000 (y − sin t) + cos t`.
struct Prothero;

impl OdeSystem for Prothero {
    type Matrix = DenseIterationMatrix;

    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), EvalError> {
        dy[0] = -1000.0 * (y[0] - t.sin()) + t.cos();
        Ok(())
    }

    fn iteration_matrix(&self, _t: f64, _y: &[f64]) -> Result<DenseIterationMatrix, EvalError> {
        Ok(DenseIterationMatrix::new(Matrix::from_rows(&[&[-1000.0]])))
    }

    fn time_derivative(&self, t: f64, _y: &[f64], out: &mut [f64]) -> Result<bool, EvalError> {
        out[0] = 1000.0 * t.cos() - t.sin();
        Ok(true)
    }
}

fn rk4_reference(t_end: f64, h: f64) -> f64 {
    let f = |t: f64, y: f64| -1000.0 * (y - t.sin()) + t.cos();
    let steps = (t_end / h).round() as usize;
    let mut y = 0.0;
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + h / 2.0, y + h / 2.0 * k1);
        let k3 = f(t + h / 2.0, y + h / 2.0 * k2);
        let k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

fn keep(_: usize, _: f64, y: &[f64]) -> Vec<f64> {
    y.to_vec()
}

#[test]
fn decay_error_shrinks_with_rtol() {
    let m = decay(1.0);
    let mut last = f64::INFINITY;
    for rtol in [1e-4, 1e-6, 1e-8] {
        let cfg = IntegratorConfig::with_tolerances(rtol, 1e-12);
        let tr = integrate(&m, &[1.0], (0.0, 1.0), &cfg).unwrap();
        let err = (tr.final_state()[0] - (-1.0f64).exp()).abs();
        assert!(err <= 100.0 * rtol, "rtol {rtol}: error {err}");
        assert!(err < last, "rtol {rtol}: error {err} not below {last}");
        last = err;
    }
}

#[test]
fn decay_at_tight_tolerance() {
    let m = decay(1.0);
    let cfg = IntegratorConfig::with_tolerances(1e-8, 1e-12);
    let tr = integrate(&m, &[1.0], (0.0, 1.0), &cfg).unwrap();
    assert!((tr.final_state()[0] - 0.36787944).abs() < 1e-6);
}

#[test]
fn stiff_problem_matches_rk4_oracle() {
    let cfg = IntegratorConfig::with_tolerances(1e-6, 1e-12);
    let tr = solve(&Prothero, 0.0, &[0.0], 1.0, &[], &[], &mut keep, &cfg, None).unwrap();
    let reference = rk4_reference(1.0, 1e-6);
    assert!((tr.final_state()[0] - reference).abs() < 1e-5);
}

#[test]
fn dense_output_between_grid_points() {
    let m = decay(1.0);
    let cfg = IntegratorConfig::with_tolerances(1e-6, 1e-12);
    let tr = integrate(&m, &[1.0], (0.0, 1.0), &cfg).unwrap();
    let direct = integrate(&m, &[1.0], (0.0, 0.5), &cfg).unwrap();
    let y = tr.interpolate(0.5, Side::Right).unwrap()[0];
    assert!((y - direct.final_state()[0]).abs() < 1e-4);
    assert!((y - (-0.5f64).exp()).abs() < 1e-4);
    for seg in tr.segments() {
        for (t, s) in seg.times.iter().zip(&seg.states) {
            assert_eq!(&tr.interpolate(*t, Side::Right).unwrap(), s);
        }
    }
}

fn step_model(event_time: f64) -> KineticModel {
    // y' = 0 (the only reaction has k = 0), y := y + 1 at the event
    KineticModel::new(
        vec![species("y", 1.0)],
        vec![parameter("k", 0.0, 1e-6)],
        vec![reaction(&[0], &[], 1.0, &[0])],
        vec![],
        vec![BreakpointEvent {
            time: event_time,
            assignments: vec![(
                0,
                AffineExpr {
                    constant: 1.0,
                    species: vec![(0, 1.0)],
                    parameters: vec![],
                },
            )],
        }],
    )
    .unwrap()
}

#[test]
fn event_splits_trajectory() {
    let m = step_model(1.0);
    let tr = integrate(&m, &[0.0], (0.0, 2.0), &IntegratorConfig::default()).unwrap();
    assert_eq!(tr.segments().len(), 2);
    assert_eq!(tr.final_state(), &[2.0]);
    assert_eq!(tr.segments()[0].end(), 1.0);
    assert_eq!(tr.segments()[1].start(), 1.0);
    assert_eq!(tr.interpolate(1.0, Side::Left).unwrap(), vec![1.0]);
    assert_eq!(tr.interpolate(1.0, Side::Right).unwrap(), vec![2.0]);
}

#[test]
fn event_is_hit_exactly_with_dynamics() {
    let t_b = 0.7312345678901234;
    let m = KineticModel::new(
        vec![species("A", 1.0), species("B", 0.0)],
        vec![parameter("k", 1.3, 1e-6), parameter("dose", 0.5, 1e-6)],
        vec![reaction(&[0], &[1], 1.0, &[0])],
        vec![],
        vec![BreakpointEvent {
            time: t_b,
            assignments: vec![(
                0,
                AffineExpr {
                    constant: 0.25,
                    species: vec![(0, 2.0), (1, -0.5)],
                    parameters: vec![(1, 1.0)],
                },
            )],
        }],
    )
    .unwrap();
    let p = m.nominal_parameters();
    let tr = integrate(&m, &p, (0.0, 2.0), &IntegratorConfig::default()).unwrap();
    let segs = tr.segments();
    assert!(segs[0].times.contains(&t_b));
    let left = segs[0].states.last().unwrap();
    let right = &segs[1].states[0];
    assert_eq!(segs[1].times[0].to_bits(), t_b.to_bits());
    let image = m.events()[0].apply(left, &p);
    assert_eq!(&image, right);
}

#[test]
fn events_outside_span_are_ignored() {
    let m = step_model(5.0);
    let tr = integrate(&m, &[0.0], (0.0, 2.0), &IntegratorConfig::default()).unwrap();
    assert_eq!(tr.segments().len(), 1);
    assert_eq!(tr.final_state(), &[1.0]);
}

#[test]
fn integration_is_deterministic() {
    let m = chain(1.0, 2.0);
    let cfg = IntegratorConfig::default();
    let a = integrate(&m, &[1.0, 2.0], (0.0, 3.0), &cfg).unwrap();
    let b = integrate(&m, &[1.0, 2.0], (0.0, 3.0), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn linear_system_scales_on_fixed_steps() {
    let m = chain(1.0, 2.0);
    let cfg = IntegratorConfig::default();
    let e1 = experiment(&m, 0.0, 3.0);
    let e2 = Experiment {
        initial: e1.initial.iter().map(|v| 2.0 * v).collect(),
        ..e1.clone()
    };
    let base = integrate_experiment(&m, &[1.0, 2.0], &e1, &[], &cfg, None).unwrap();
    let doubled = integrate_experiment(&m, &[1.0, 2.0], &e2, &[], &cfg, Some(base.step_log())).unwrap();
    for ((_, a), (_, b)) in base.points().zip(doubled.points()) {
        for (x, y) in a.iter().zip(b) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }
}

#[test]
fn experiments_are_independent() {
    let m = decay(1.0);
    let cfg = IntegratorConfig::with_tolerances(1e-8, 1e-12);
    let exps: Vec<Experiment> = [1.0, 2.0]
        .iter()
        .map(|&y0| Experiment {
            name: format!("e{y0}"),
            t0: 0.0,
            t_end: 1.0,
            initial: vec![y0],
        })
        .collect();
    let trs = integrate_experiments(&m, &[1.0], &exps, &cfg).unwrap();
    for (tr, y0) in trs.iter().zip([1.0, 2.0]) {
        assert!((tr.final_state()[0] - y0 * (-1.0f64).exp()).abs() < 1e-6 * y0);
    }
    assert_eq!(trs[1].experiment_id, 1);
    assert!(integrate_experiments(&m, &[1.0], &[], &cfg).unwrap().is_empty());
}

#[test]
fn shifted_experiment_keeps_values() {
    let m = decay(1.0);
    let e = Experiment {
        name: "late".into(),
        t0: 5.0,
        t_end: 6.0,
        initial: vec![1.0],
    };
    let cfg = IntegratorConfig::default();
    let tr = integrate_experiment(&m, &[1.0], &e, &[], &cfg, None).unwrap();
    let shifted = tr.shifted_to(0.0);
    assert_eq!(shifted.t_start(), 0.0);
    assert!((shifted.t_end() - 1.0).abs() < 1e-15);
    assert_eq!(shifted.final_state(), tr.final_state());
}

#[test]
fn failing_experiment_carries_index() {
    // y' = y²: blows up at t = 1
    let mut r = reaction(&[], &[0], 1.0, &[0]);
    r.exponents = vec![(0, 2.0)];
    let m = KineticModel::new(vec![species("y", 1.0)], vec![parameter("k", 1.0, 1e-6)], vec![r], vec![], vec![])
        .unwrap();
    let ok = experiment(&m, 0.0, 0.5);
    let bad = experiment(&m, 0.0, 2.0);
    let cfg = IntegratorConfig {
        max_steps: 2000,
        ..IntegratorConfig::default()
    };
    let err = integrate_experiments(&m, &[1.0], &[ok, bad], &cfg).unwrap_err();
    match err {
        IntegratorError::Experiment { index, .. } => assert_eq!(index, 1),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn stop_one_ulp_before_end_is_sampled() {
    let m = decay(1.0);
    let e = experiment(&m, 0.0, 1.0);
    let almost = 1.0f64 - f64::EPSILON / 2.0;
    let cfg = IntegratorConfig::default();
    let tr = integrate_experiment(&m, &[1.0], &e, &[0.5, almost], &cfg, None).unwrap();
    let y = tr.interpolate(almost, Side::Right).unwrap()[0];
    assert!((y - tr.final_state()[0]).abs() < 1e-12);
}

#[test]
fn maximum_uses_dense_output_between_grid_points() {
    // B = e^{-t} − e^{-2t} peaks at 1/4 for t = ln 2
    let m = chain(1.0, 2.0);
    let cfg = IntegratorConfig::with_tolerances(1e-8, 1e-12);
    let tr = integrate(&m, &[1.0, 2.0], (0.0, 3.0), &cfg).unwrap();
    assert!(tr.points().all(|(t, _)| t != 2f64.ln()));
    let grid_max = tr.points().map(|(_, y)| y[1]).fold(0.0, f64::max);
    let max = tr.max_abs();
    assert!((max[1] - 0.25).abs() <= 1e-7, "{}", max[1]);
    assert!(max[1] >= grid_max);
    assert_eq!(max[0], 1.0);
}
