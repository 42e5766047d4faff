//! Acceptance suite: ten end-to-end criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so that every line is printed even when
//! all criteria pass; the process exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bilimit::controller::{build_controller, ControllerDesign, ControllerOptions};
use bilimit::hom::{
    abs_pow, check_function, check_vector_field, dilate, hom_norm, polar_decompose, signed_pow, CheckConfig,
    HomFunction, HomogeneityReport, Side, Variant, WeightVector,
};
use bilimit::lemma::{find_domination_constant, DominationProblem, SearchSpec};
use bilimit::observer::{build_observer, DegreePair, ObserverDesign, ObserverOptions};
use bilimit::output_feedback::{
    assemble, decay_rate, finite_time_bound, select_gain_feedback, select_gain_feedforward, synthesize_pair, Battery,
    DisturbanceScenario, Form, OutputFeedbackDesign, PairOptions, SweepSpec,
};
use bilimit::sampling::random_points_in_shell;
use bilimit::sim::{integrate, integrate_batch, run_iss_experiment, IntegratorConfig, IssConfig, StepScaling};
use bilimit::verify::DecreaseConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn degrees(n: usize, d0: f64, d_inf: f64) -> DegreePair {
    DegreePair::new(n, d0, d_inf).unwrap()
}

fn pair(n: usize, d0: f64, d_inf: f64, opts: &PairOptions) -> (ObserverDesign, ControllerDesign) {
    synthesize_pair(n, degrees(n, d0, d_inf), opts).unwrap()
}

/// 1. Dilation group law, norm homogeneity, polar round trip and the
/// derivative of `signed_pow`, 10⁴ random cases each, under 10 s.
fn homogeneous_algebra() -> Outcome {
    const CASES: usize = 10_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let case = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(1..=4);
        let r = WeightVector::new((0..n).map(|_| rng.gen_range(0.3..3.0)).collect()).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        (r, x)
    };
    let mut worst = [0.0f64; 4];
    for _ in 0..CASES {
        let (r, x) = case(&mut rng);
        let (l1, l2) = (10f64.powf(rng.gen_range(-3.0..3.0)), 10f64.powf(rng.gen_range(-3.0..3.0)));
        let once = dilate(l1 * l2, &r, &x).unwrap();
        let twice = dilate(l1, &r, &dilate(l2, &r, &x).unwrap()).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            if *a != 0.0 || *b != 0.0 {
                worst[0] = worst[0].max((a - b).abs() / a.abs().max(b.abs()));
            }
        }
    }
    for _ in 0..CASES {
        let (r, x) = case(&mut rng);
        let l = 10f64.powf(rng.gen_range(-3.0..3.0));
        let lhs = hom_norm(&dilate(l, &r, &x).unwrap(), &r).unwrap();
        let rhs = l * hom_norm(&x, &r).unwrap();
        worst[1] = worst[1].max((lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE));
    }
    for _ in 0..CASES {
        let (r, x) = case(&mut rng);
        let p = polar_decompose(&x, &r).unwrap();
        let back = dilate(p.lambda, &r, &p.theta).unwrap();
        for (a, b) in back.iter().zip(&x) {
            worst[2] = worst[2].max((a - b).abs() / b.abs().max(1.0));
        }
    }
    for _ in 0..CASES {
        let w: f64 = rng.gen_range(0.01..10.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let a: f64 = rng.gen_range(0.2..4.0);
        let h = 1e-6 * w.abs();
        let fd = (signed_pow(w + h, a) - signed_pow(w - h, a)) / (2.0 * h);
        let exact = a * abs_pow(w, a - 1.0);
        worst[3] = worst[3].max((fd - exact).abs() / exact);
    }
    let elapsed = start.elapsed();
    ensure(worst[0] <= 1e-12, || format!("group law relative error {:e}", worst[0]))?;
    ensure(worst[1] <= 1e-10, || format!("norm homogeneity relative error {:e}", worst[1]))?;
    ensure(worst[2] <= 1e-10, || format!("polar round trip error {:e}", worst[2]))?;
    ensure(worst[3] < 1e-5, || format!("signed_pow derivative relative error {:e}", worst[3]))?;
    ensure(elapsed < Duration::from_secs(10), || format!("runtime {elapsed:?}"))?;
    Ok(format!(
        "4x{CASES} cases, worst errors {:.1e}/{:.1e}/{:.1e}/{:.1e}, {elapsed:.2?}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

/// 2. Domination constant of `η = x₁x₂ − x₁²`, `γ = x₂²` with a 400×400 grid
/// oracle on `[−10, 10]²`, under 5 s.
fn lemma_example() -> Outcome {
    let start = Instant::now();
    let quad = |f: fn(&[f64]) -> f64| HomFunction::standard(WeightVector::standard(2), 2.0, std::sync::Arc::new(f));
    let p = DominationProblem::new(quad(|x| x[0] * x[1] - x[0] * x[0]), quad(|x| x[1] * x[1])).unwrap();
    let res = find_domination_constant(&p, &SearchSpec::default()).map_err(|e| e.to_string())?;
    let c = res.c;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..400 {
        for j in 0..400 {
            let x = [-10.0 + 20.0 * i as f64 / 399.0, -10.0 + 20.0 * j as f64 / 399.0];
            if x == [0.0, 0.0] {
                continue;
            }
            worst = worst.max(x[0] * x[1] - x[0] * x[0] - c * x[1] * x[1]);
        }
    }
    let elapsed = start.elapsed();
    ensure(c >= 0.25, || format!("c = {c} below 1/4"))?;
    ensure(worst < 0.0, || format!("grid maximum of η − cγ is {worst}"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("runtime {elapsed:?}"))?;
    Ok(format!("c = {c:.4}, grid max of η − cγ = {worst:.3e}, {elapsed:.2?}"))
}

/// 3. Plant plus observer driven by `u = sin t` against the autonomous error
/// system from the same `E(0)`, over 20 s, for `n = 2, 3`.
fn observer_exactness() -> Outcome {
    let mut lines = Vec::new();
    for (n, d0, d_inf) in [(2, 0.0, 0.5), (3, 0.0, 0.25)] {
        let o = build_observer(n, degrees(n, d0, d_inf), &ObserverOptions::default()).map_err(|e| e.to_string())?;
        let cfg = IntegratorConfig {
            step: 1e-3,
            t_end: 20.0,
            origin_guard: 0.0,
            ..Default::default()
        };
        let coupled = |t: f64, s: &[f64], out: &mut [f64]| {
            let (x, xh) = s.split_at(n);
            let u = t.sin();
            let k = o.injection(Variant::Full, xh[0] - x[0]);
            for i in 0..n {
                let (a, b) = if i + 1 < n { (x[i + 1], xh[i + 1]) } else { (u, u) };
                out[i] = a;
                out[n + i] = b + k[i];
            }
        };
        let error = |_: f64, e: &[f64], out: &mut [f64]| o.error_rhs(Variant::Full, e, out);
        let x0: Vec<f64> = (0..n).map(|i| 0.7 - 0.4 * i as f64).collect();
        let xh0: Vec<f64> = (0..n).map(|i| -0.3 + 0.2 * i as f64).collect();
        let e0: Vec<f64> = xh0.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let s0: Vec<f64> = x0.iter().chain(&xh0).copied().collect();
        let r2 = o.weights.r0.concat(&o.weights.r0);
        let (tc, _) = integrate(&coupled, &s0, &r2, &cfg).map_err(|e| e.to_string())?;
        let (te, _) = integrate(&error, &e0, &o.weights.r0, &cfg).map_err(|e| e.to_string())?;
        ensure(tc.times.len() == te.times.len(), || "traces sampled differently".into())?;
        let mut sup = 0.0f64;
        for (s, e) in tc.states.iter().zip(&te.states) {
            for i in 0..n {
                sup = sup.max((s[n + i] - s[i] - e[i]).abs());
            }
        }
        ensure(sup < 1e-6, || format!("n = {n}: sup deviation {sup:e}"))?;
        lines.push(format!("n={n} sup {sup:.1e}"));
    }
    Ok(lines.join(", "))
}

/// 4. Observer error systems and state-feedback closed loops for
/// `n ∈ {2, 3}` and their 0- and ∞-approximations reach norm `1e-6` from 100
/// initial conditions with norm in `[1e-2, 1e2]`, under 2 min.
fn chain_convergence() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    // (q, p) = (1, 1.5) gives d = (0, 0.5); for n = 3 the ∞-degree is mapped
    // to (p − 1)/(n − 1) inside the admissible interval (−1, 1/2)
    for (n, d0, d_inf) in [(2, 0.0, 0.5), (3, 0.0, 0.25)] {
        let d = degrees(n, d0, d_inf);
        let o = build_observer(n, d, &ObserverOptions::default()).map_err(|e| e.to_string())?;
        let c = build_controller(n, d, &ControllerOptions::default()).map_err(|e| e.to_string())?;
        for (v, r, scaling) in [
            (Variant::Full, &o.weights.r0, StepScaling::new(d0, d_inf)),
            (Variant::Zero, &o.weights.r0, StepScaling::new(d0, d0)),
            (Variant::Infinity, &o.weights.r_inf, StepScaling::new(d_inf, d_inf)),
        ] {
            let cfg = IntegratorConfig {
                step: 1e-2,
                t_end: 1e6,
                record_every: 0,
                scaling: Some(scaling),
                ..Default::default()
            };
            let x0s = random_points_in_shell(r, 1e-2, 1e2, 100, 40 + n as u64);
            for (name, f) in [
                ("observer", &(|_: f64, x: &[f64], out: &mut [f64]| o.error_rhs(v, x, out)) as &(dyn Fn(f64, &[f64], &mut [f64]) + Sync)),
                ("controller", &|_: f64, x: &[f64], out: &mut [f64]| c.closed_loop_rhs(v, x, out)),
            ] {
                let runs = integrate_batch(f, &x0s, r, &cfg).map_err(|e| e.to_string())?;
                let failed = runs.iter().filter(|s| !s.converged()).count();
                ensure(failed == 0, || format!("n = {n} {name} {v:?}: {failed} of 100 runs did not converge"))?;
                let worst = runs.iter().filter_map(|s| s.converged_at).fold(0.0, f64::max);
                lines.push(format!("n={n} {name} {v:?} {worst:.3}"));
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("runtime {elapsed:?}"))?;
    Ok(format!("12 x 100 runs converged in {elapsed:.1?}; worst times {}", lines.join(", ")))
}

fn b18() -> DisturbanceScenario {
    DisturbanceScenario::FeedbackExample {
        c0: 0.5,
        c_inf: 0.5,
        q: 1.0,
        p: 1.5,
    }
}

fn battery(des: &OutputFeedbackDesign, count: usize, seed: u64) -> Battery {
    let d = des.observer.degrees;
    Battery::sample(
        des.weights(),
        &d,
        count,
        1e-2,
        1e2,
        seed,
        IntegratorConfig {
            step: 1e-2,
            t_end: 200.0,
            ..Default::default()
        },
    )
}

/// 5. Disturbance-free output feedback converges for `L ∈ {0.25, 1, 4, 16}`
/// from 25 initial conditions each.
fn output_feedback_any_gain() -> Outcome {
    let (o, c) = pair(2, 0.0, 0.5, &PairOptions::default());
    let des = assemble(o, c, 1.0, Form::Feedback).map_err(|e| e.to_string())?;
    let bat = battery(&des, 25, 5);
    let mut lines = Vec::new();
    for l in [0.25, 1.0, 4.0, 16.0] {
        let (rung, _) = des.with_gain(l).unwrap().run_battery(&DisturbanceScenario::None, &bat).map_err(|e| e.to_string())?;
        ensure(rung.passed, || format!("L = {l}: {} of 25 runs failed", rung.failures))?;
        lines.push(format!("L={l} worst {:.2}", rung.worst_time.unwrap_or(0.0)));
    }
    Ok(lines.join(", "))
}

/// 6. Feedback-form sweep on `ẋ₂ = u + 0.5x₂ + 0.5x₂^{1.5}` over `L = 2^0 … 2^20`.
fn feedback_sweep() -> Outcome {
    let (o, c) = pair(2, 0.0, 0.5, &PairOptions::default());
    let des = assemble(o.clone(), c.clone(), 1.0, Form::Feedback).map_err(|e| e.to_string())?;
    let bat = battery(&des, 25, 6);
    let sel = select_gain_feedback(&o, &c, &b18(), &bat, &SweepSpec::default()).map_err(|e| e.to_string())?;
    ensure(sel.frontier_is_monotone(), || format!("frontier not monotone: {:?}", sel.frontier))?;
    let passing = sel.frontier.iter().filter(|r| r.passed).count();
    Ok(format!(
        "L* = {}, {passing} of {} rungs up to 2^20 pass",
        sel.design.gain,
        sel.frontier.len()
    ))
}

/// 7. Feedforward-form sweep on `ẋ₁ = x₂ + x₃^{3/2} + z³`, `ż = −z⁴ + x₃` over
/// `L = 2^0 … 2^−4`.
fn feedforward_sweep() -> Outcome {
    let mut opts = PairOptions::default();
    opts.controller.first_gain = 0.3;
    let (o, c) = pair(3, 0.25, -0.5, &opts);
    let des = assemble(o.clone(), c.clone(), 1.0, Form::Feedforward).map_err(|e| e.to_string())?;
    let d = des.observer.degrees;
    let mut bat = Battery::sample(
        des.weights(),
        &d,
        3,
        1e-1,
        1.0,
        7,
        IntegratorConfig {
            step: 1e-4,
            t_end: 100.0,
            blowup_norm: 1e30,
            ..Default::default()
        },
    );
    bat.integrator.scaling = None;
    let sweep = SweepSpec {
        doublings: 4,
        ..Default::default()
    };
    let sc = DisturbanceScenario::FeedforwardExample;
    let sel = select_gain_feedforward(&o, &c, &sc, &bat, &sweep).map_err(|e| e.to_string())?;
    ensure(sel.frontier_is_monotone(), || format!("frontier not monotone: {:?}", sel.frontier))?;
    let norms: Vec<String> = sel.frontier.iter().map(|r| format!("{:.1e}", r.worst_final_norm)).collect();
    Ok(format!(
        "L* = {}, all {} rungs down to 2^-4 pass (worst final norms {})",
        sel.design.gain,
        sel.frontier.len(),
        norms.join("/")
    ))
}

fn convergence_times(des: &OutputFeedbackDesign, cfg: &IntegratorConfig, rho: f64) -> Result<Vec<f64>, String> {
    let r = &des.weights().r0;
    [[1.0, 0.0], [0.0, 1.0], [-0.7, 0.3], [0.2, -0.9]]
        .iter()
        .map(|dir| {
            let x = r.dilate(rho / r.norm(dir), dir);
            let (_, s) = des
                .simulate(&DisturbanceScenario::None, &[x[0], x[1], 0.0, 0.0], cfg)
                .map_err(|e| e.to_string())?;
            s.converged_at.ok_or_else(|| format!("no convergence from norm {rho}"))
        })
        .collect()
}

/// 8. Convergence times from norms `{1e-3, 1, 1e3}` stay below the uniform
/// bound and within a factor 10, while the linear loop keeps slowing down.
fn finite_time_uniformity() -> Outcome {
    let (d0, d_inf) = (-0.1, 0.5);
    let d = degrees(2, d0, d_inf);
    let (o, c) = pair(2, d0, d_inf, &PairOptions::default());
    let mut des = assemble(o, c, 1.0, Form::Feedback).map_err(|e| e.to_string())?;
    let comp = des
        .composite_lyapunov(&SearchSpec::default(), &DecreaseConfig::default())
        .map_err(|e| e.to_string())?;
    ensure(comp.decrease.iter().all(|r| r.passed), || "composite decrease not verified".into())?;
    let (u, udot) = des.composite_functions(comp.weight).map_err(|e| e.to_string())?;
    let rate = decay_rate(&u, &udot, &SearchSpec::default()).map_err(|e| e.to_string())?;
    let l = des.controller.lyapunov;
    let bound = finite_time_bound(rate, l.d0, l.d_inf, &d).map_err(|e| e.to_string())?;
    let cfg = IntegratorConfig {
        step: 1e-3,
        t_end: bound.min(1e4),
        record_every: 0,
        scaling: Some(StepScaling::new(d0, d_inf)),
        ..Default::default()
    };
    let mut times = Vec::new();
    for rho in [1e-3, 1.0, 1e3] {
        times.push(convergence_times(&des, &cfg, rho)?);
    }
    let all: Vec<f64> = times.iter().flatten().copied().collect();
    let (lo, hi) = (all.iter().copied().fold(f64::INFINITY, f64::min), all.iter().copied().fold(0.0, f64::max));
    ensure(hi < bound, || format!("time {hi} exceeds bound {bound}"))?;
    ensure(hi / lo < 10.0, || format!("max/min time ratio {}", hi / lo))?;

    let (o, c) = pair(2, 0.0, 0.0, &PairOptions::default());
    let lin = assemble(o, c, 1.0, Form::Feedback).map_err(|e| e.to_string())?;
    let lcfg = IntegratorConfig { scaling: None, ..cfg };
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let lt: Vec<f64> = [1e-3, 1.0, 1e3]
        .iter()
        .map(|&rho| convergence_times(&lin, &lcfg, rho).map(mean))
        .collect::<Result<_, _>>()?;
    let ft: Vec<f64> = times.into_iter().map(mean).collect();
    // the linear loop needs a fixed time per decade; the finite-time loop's
    // increments shrink towards large norms
    let (lin_lo, lin_hi) = (lt[1] - lt[0], lt[2] - lt[1]);
    ensure(lin_hi > 0.5 * lin_lo, || format!("linear increments {lin_lo:.2} then {lin_hi:.2}"))?;
    let (ft_lo, ft_hi) = (ft[1] - ft[0], ft[2] - ft[1]);
    ensure(ft_hi < 0.5 * ft_lo, || format!("finite-time increments {ft_lo:.2} then {ft_hi:.2}"))?;
    Ok(format!(
        "c = {rate:.4}, bound {bound:.1}, times {:.2}..{:.2} (ratio {:.2}); mean times finite-time {:.2}/{:.2}/{:.2}, linear {:.2}/{:.2}/{:.2}",
        lo,
        hi,
        hi / lo,
        ft[0],
        ft[1],
        ft[2],
        lt[0],
        lt[1],
        lt[2]
    ))
}

/// 9. Steady-state sup under constant disturbances `{0, 0.1, 0.5, 1}` is
/// nondecreasing and vanishes at amplitude 0.
fn iss_shape() -> Outcome {
    let (o, c) = pair(2, -0.1, 0.5, &PairOptions::default());
    let des = assemble(o, c, 1.0, Form::Feedback).map_err(|e| e.to_string())?;
    let cfg = IssConfig {
        initial: vec![0.8, -0.5, 0.0, 0.0],
        integrator: IntegratorConfig {
            step: 1e-3,
            t_end: 60.0,
            scaling: Some(StepScaling::new(-0.1, 0.5)),
            ..Default::default()
        },
        window: 0.2,
    };
    let report = run_iss_experiment(&des, &[0.0, 0.1, 0.5, 1.0], &cfg).map_err(|e| e.to_string())?;
    let sups: Vec<String> = report
        .points
        .iter()
        .map(|p| p.steady_sup.map_or("diverged".into(), |s| format!("{s:.3e}")))
        .collect();
    ensure(report.monotone && report.vanishes_at_zero, || format!("steady sups {sups:?}"))?;
    Ok(format!("steady sups {}", sups.join(", ")))
}

fn limit_ok(reports: &[HomogeneityReport]) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for r in reports {
        let dev = r.final_deviation();
        ensure(r.passed() && dev < 1e-3, || format!("{} limit: deviations {:?}", r.side, r.deviations))?;
        worst = worst.max(dev);
    }
    Ok(worst)
}

/// 10. `φ_n`, `K₁` and the disturbance-free closed loop pass the homogeneity
/// check at both limits.
fn synthesized_homogeneity() -> Outcome {
    let (d0, d_inf) = (-0.2, 0.5);
    let (o, c) = pair(2, d0, d_inf, &PairOptions::default());
    let cfg = CheckConfig::default();
    let mut worst = 0.0f64;
    let phi = c.feedback_function();
    for side in [Side::Zero, Side::Infinity] {
        let rep = check_function(&phi, side, &cfg).map_err(|e| e.to_string())?;
        let want = 1.0 + if side == Side::Zero { d0 } else { d_inf };
        ensure((rep.degree - want).abs() < 1e-12, || format!("φ_n degree {} at {side}", rep.degree))?;
        worst = worst.max(limit_ok(&[rep])?);
        for j in 0..2 {
            let k = o.injection_component(j);
            worst = worst.max(limit_ok(&[check_function(&k, side, &cfg).map_err(|e| e.to_string())?])?);
        }
    }
    let des = assemble(o, c, 1.0, Form::Feedback).map_err(|e| e.to_string())?;
    let field = des.closed_loop_field();
    for side in [Side::Zero, Side::Infinity] {
        worst = worst.max(limit_ok(&check_vector_field(&field, side, &cfg).map_err(|e| e.to_string())?)?);
    }
    Ok(format!("φ_2, K₁ and the 4-d closed loop pass at both limits, worst deviation {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("homogeneous algebra", homogeneous_algebra),
        ("domination lemma example", lemma_example),
        ("observer exactness", observer_exactness),
        ("observer and controller convergence", chain_convergence),
        ("output feedback for any gain", output_feedback_any_gain),
        ("feedback-form sweep", feedback_sweep),
        ("feedforward-form sweep", feedforward_sweep),
        ("finite-time uniformity", finite_time_uniformity),
        ("ISS shape", iss_shape),
        ("homogeneity of synthesized objects", synthesized_homogeneity),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("acceptance {:>2} {name}: PASS ({secs:.1} s) {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {:>2} {name}: FAIL ({secs:.1} s) {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
