//! `bilimit simulate`: one output-feedback run with trace export.

use anyhow::{bail, Result};
use bilimit::controller::ControllerDesign;
use bilimit::observer::ObserverDesign;
use bilimit::output_feedback::{assemble, Form, OutputFeedbackDesign};
use bilimit::sampling::random_points_in_shell;
use bilimit::sim::{Event, EventKind, Trace};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::output::OutputDir;

pub const TRACE_CSV: &str = "trace.csv";
pub const TRACE_JSON: &str = "trace.json";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Serialize)]
pub struct Summary {
    pub gain: f64,
    pub form: Form,
    /// Plant state followed by the observer estimate, at `t = 0`.
    pub initial: Vec<f64>,
    pub converged: bool,
    /// First time after which the norm stays below the threshold.
    pub convergence_time: Option<f64>,
    /// Time at which the state entered the origin guard ball.
    pub origin_reached_at: Option<f64>,
    /// `d0 < 0 < d_inf`, where convergence is expected in finite time.
    pub finite_time_degrees: bool,
    pub final_time: f64,
    pub final_norm: f64,
    pub max_norm: f64,
    /// The run was cut short by a blowup.
    pub truncated: bool,
    pub events: Vec<Event>,
    pub audit: Option<Audit>,
    pub steps: usize,
}

/// Largest excess of `|δ_i|` over its structural envelope along the trace.
#[derive(Debug, Serialize)]
pub struct Audit {
    pub worst_excess: f64,
    pub within_envelope: bool,
}

pub fn check_compatible(cfg: &ScenarioConfig, o: &ObserverDesign, c: &ControllerDesign) -> Result<()> {
    let d = cfg.degree_pair()?;
    for (what, n, deg) in [("observer", o.n, o.degrees), ("controller", c.n, c.degrees)] {
        if n != cfg.n || deg != d {
            bail!(
                "{what} design (n = {n}, d0 = {}, d_inf = {}) is incompatible with the config (n = {}, d0 = {}, d_inf = {})",
                deg.d0,
                deg.d_inf,
                cfg.n,
                d.d0,
                d.d_inf
            );
        }
    }
    Ok(())
}

/// Raw `(x, 𝔛̂)` from the config: an explicit point whose second half is the
/// estimate `x̂_i = L^{i−1} 𝔛̂_i`, or a seeded draw with a zero estimate.
fn initial_state(cfg: &ScenarioConfig, des: &OutputFeedbackDesign) -> Result<Vec<f64>> {
    let n = cfg.n;
    let l = des.gain;
    let mut x = match &cfg.simulate.initial {
        Some(v) if v.len() == n || v.len() == 2 * n => v.clone(),
        Some(v) => bail!("simulate.initial has {} entries, expected {n} or {}", v.len(), 2 * n),
        None => random_points_in_shell(&des.weights().r0, cfg.simulate.norm_lo, cfg.simulate.norm_hi, 1, cfg.seed).remove(0),
    };
    x.resize(2 * n, 0.0);
    for i in 0..n {
        x[n + i] /= l.powi(i as i32);
    }
    Ok(x)
}

pub fn run(cfg: &ScenarioConfig, o: ObserverDesign, c: ControllerDesign) -> Result<()> {
    check_compatible(cfg, &o, &c)?;
    let scenario = cfg.disturbance()?;
    let form = cfg.form(&scenario);
    let des = assemble(o, c, cfg.simulate.gain, form)?;
    let n = cfg.n;
    let l = des.gain;
    let y0 = initial_state(cfg, &des)?;
    let (trace, s) = des.simulate(&scenario, &y0, &cfg.integrator)?;
    let audit = des.audit_disturbance(&scenario, &trace).map(|worst| Audit {
        worst_excess: worst,
        within_envelope: worst <= 1e-9,
    });
    let raw = raw_trace(&des, &scenario, &trace);
    let d = des.observer.degrees;
    let mut initial = y0[..n].to_vec();
    initial.extend((0..n).map(|i| l.powi(i as i32) * y0[n + i]));
    let summary = Summary {
        gain: l,
        form,
        initial,
        converged: s.converged(),
        convergence_time: s.converged_at.map(|t| t / l),
        origin_reached_at: raw.events.iter().find(|e| e.kind == EventKind::Clamp).map(|e| e.time),
        finite_time_degrees: d.d0 < 0.0 && 0.0 < d.d_inf,
        final_time: s.final_time / l,
        final_norm: s.final_norm,
        max_norm: s.max_norm,
        truncated: s.blowup.is_some(),
        events: raw.events.clone(),
        audit,
        steps: s.steps,
    };

    let out = OutputDir::create(&cfg.output.dir)?;
    out.write_with(TRACE_CSV, |w| Ok(raw.write_csv(w)?))?;
    out.write_json(TRACE_JSON, &raw)?;
    let path = out.write_json(SUMMARY_JSON, &summary)?;
    print_summary(&summary);
    println!("wrote {}, {} and {}", out.path(TRACE_CSV).display(), out.path(TRACE_JSON).display(), path.display());
    Ok(())
}

/// Converts a rescaled trace to raw time, plant state, estimate and disturbance.
fn raw_trace(des: &OutputFeedbackDesign, scenario: &bilimit::output_feedback::DisturbanceScenario, trace: &Trace) -> Trace {
    let n = des.n();
    let l = des.gain;
    let mut states = Vec::with_capacity(trace.states.len());
    let mut estimates = Vec::with_capacity(trace.states.len());
    let mut disturbances = Vec::with_capacity(trace.states.len());
    for (tau, y) in trace.times.iter().zip(&trace.states) {
        let mut x = vec![0.0; n];
        des.raw_state(&y[..2 * n], &mut x);
        let mut delta = vec![0.0; n];
        scenario.disturbance(tau / l, &x, &y[2 * n..], &mut delta);
        estimates.push((0..n).map(|i| l.powi(i as i32) * y[i]).collect());
        states.push(x);
        disturbances.push(delta);
    }
    Trace {
        times: trace.times.iter().map(|t| t / l).collect(),
        states,
        estimates: Some(estimates),
        disturbances: Some(disturbances),
        events: trace
            .events
            .iter()
            .map(|e| Event {
                time: e.time / l,
                kind: e.kind,
            })
            .collect(),
        origin_guard: trace.origin_guard,
    }
}

fn print_summary(s: &Summary) {
    println!("gain L = {}, {:?} form", s.gain, s.form);
    match s.convergence_time {
        Some(t) => println!("converged at t = {t:.6e}"),
        None => println!("did not converge by t = {:.6e}", s.final_time),
    }
    if let Some(t) = s.origin_reached_at {
        println!("reached the origin guard at t = {t:.6e}{}", if s.finite_time_degrees { " (finite-time degrees)" } else { "" });
    }
    if s.truncated {
        let t = s.events.iter().find(|e| e.kind == EventKind::Blowup).map_or(s.final_time, |e| e.time);
        println!("truncated: blowup at t = {t:.6e}, max norm {:.3e}", s.max_norm);
    }
    println!("final norm {:.3e}, max norm {:.3e}, {} steps", s.final_norm, s.max_norm, s.steps);
    match &s.audit {
        Some(a) => println!(
            "disturbance audit: {} (worst excess over the envelope {:.3e})",
            if a.within_envelope { "within bound" } else { "VIOLATED" },
            a.worst_excess
        ),
        None => println!("disturbance audit: not applicable (disturbance depends on auxiliary states)"),
    }
}
