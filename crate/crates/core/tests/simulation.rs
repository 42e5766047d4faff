//! Integrator invariants on synthesized closed loops.

use bilimit::controller::{build_controller, ControllerDesign, ControllerOptions};
use bilimit::hom::Variant;
use bilimit::lemma::SearchSpec;
use bilimit::observer::{build_observer, DegreePair, ObserverOptions};
use bilimit::output_feedback::{assemble, decay_rate, finite_time_bound, synthesize_pair, DisturbanceScenario, Form, PairOptions};
use bilimit::sampling::homogeneous_sphere;
use bilimit::sim::{integrate, EventKind, IntegratorConfig, StepScaling};

fn controller(d0: f64, d_inf: f64) -> ControllerDesign {
    build_controller(2, DegreePair::new(2, d0, d_inf).unwrap(), &ControllerOptions::default()).unwrap()
}

#[test]
fn halving_the_step_keeps_the_final_state() {
    let (o, c) = synthesize_pair(2, DegreePair::new(2, 0.0, 0.5).unwrap(), &PairOptions::default()).unwrap();
    let des = assemble(o, c, 1.0, Form::Feedback).unwrap();
    let cfg = IntegratorConfig {
        step: 1e-3,
        t_end: 10.0,
        origin_guard: 0.0,
        record_every: 0,
        ..Default::default()
    };
    let x0 = [0.8, -0.5, 0.0, 0.0];
    let (_, a) = des.simulate(&DisturbanceScenario::None, &x0, &cfg).unwrap();
    let half = IntegratorConfig { step: 5e-4, ..cfg };
    let (_, b) = des.simulate(&DisturbanceScenario::None, &x0, &half).unwrap();
    let scale = b.final_state.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (p, q) in a.final_state.iter().zip(&b.final_state) {
        assert!((p - q).abs() <= 1e-6 * scale, "{p} vs {q} (scale {scale})");
    }
}

fn assert_nonincreasing(values: &[f64], what: &str) {
    let mut violations = 0;
    for w in values.windows(2) {
        let rise = w[1] - w[0];
        if rise > 0.0 {
            violations += 1;
            assert!(rise < 1e-8, "{what}: increase {rise:e}");
        }
    }
    assert!(
        (violations as f64) < 1e-3 * values.len() as f64,
        "{what}: {violations} increases over {} samples",
        values.len()
    );
}

#[test]
fn lyapunov_functions_decrease_along_traces() {
    let c = controller(0.0, 0.5);
    let d = c.degrees;
    let o = build_observer(2, d, &ObserverOptions::default()).unwrap();
    let cfg = IntegratorConfig {
        step: 1e-3,
        t_end: 30.0,
        ..Default::default()
    };
    let r = &c.weights.r0;
    for x0 in [[1.0, -2.0], [-0.05, 0.3], [40.0, 10.0]] {
        let f = |_: f64, x: &[f64], out: &mut [f64]| c.closed_loop_rhs(Variant::Full, x, out);
        let (trace, s) = integrate(&f, &x0, r, &cfg).unwrap();
        assert!(s.converged());
        let v: Vec<f64> = trace.states.iter().map(|x| c.lyapunov_value(Variant::Full, x)).collect();
        assert_nonincreasing(&v, "V");

        let g = |_: f64, e: &[f64], out: &mut [f64]| o.error_rhs(Variant::Full, e, out);
        let (trace, s) = integrate(&g, &x0, r, &cfg).unwrap();
        assert!(s.converged());
        let w: Vec<f64> = trace.states.iter().map(|e| o.lyapunov_value(Variant::Full, e)).collect();
        assert_nonincreasing(&w, "W");
    }
}

#[test]
fn finer_guard_moves_arrival_within_the_guard_bound() {
    let (d0, d_inf) = (-0.2, 0.3);
    let c = controller(d0, d_inf);
    let spec = SearchSpec::default();
    let rate = decay_rate(&c.lyapunov_function(), &c.lyapunov_derivative_function(), &spec).unwrap();
    let l = c.lyapunov;
    let r = &c.weights.r0;
    let guard = 1e-9;
    // V on the sphere of the coarser guard radius, then the bound rescaled to
    // that level: V̇ ≤ −cV^{1+d0/dV0} reaches zero from V = v within
    // (dV0/(c|d0|)) v^{|d0|/dV0}
    let v_guard = homogeneous_sphere(r, 256, 3, true)
        .iter()
        .map(|th| c.lyapunov_value(Variant::Full, &r.dilate(guard, th)))
        .fold(0.0, f64::max);
    let bound = finite_time_bound(rate, l.d0, l.d_inf, &c.degrees).unwrap() * v_guard.powf(d0.abs() / l.d0);
    let f = |_: f64, x: &[f64], out: &mut [f64]| c.closed_loop_rhs(Variant::Full, x, out);
    let arrival = |g: f64| {
        let cfg = IntegratorConfig {
            step: 1e-3,
            t_end: 100.0,
            origin_guard: g,
            threshold: 1e-12,
            record_every: 0,
            scaling: Some(StepScaling::new(d0, d_inf)),
            ..Default::default()
        };
        let (trace, _) = integrate(&f, &[0.9, -0.4], r, &cfg).unwrap();
        trace.events.iter().find(|e| e.kind == EventKind::Clamp).map(|e| e.time).unwrap()
    };
    let (coarse, fine) = (arrival(guard), arrival(guard / 10.0));
    assert!(fine >= coarse);
    assert!(fine - coarse < bound, "arrival moved by {} (bound {bound})", fine - coarse);
}
