//! `bilimit sweep`: gain selection over the geometric grid.

use anyhow::Result;
use bilimit::output_feedback::{select_gain_feedback, select_gain_feedforward, synthesize_pair, Battery, Form, Rung, Selection};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::output::OutputDir;

pub const FRONTIER_JSON: &str = "frontier.json";
pub const FRONTIER_CSV: &str = "frontier.csv";

#[derive(Serialize)]
struct FrontierReport<'a> {
    form: Form,
    selected_gain: f64,
    monotone: bool,
    #[serde(flatten)]
    selection: &'a Selection,
}

pub fn run(cfg: &ScenarioConfig) -> Result<()> {
    let d = cfg.degree_pair()?;
    let scenario = cfg.disturbance()?;
    let form = cfg.form(&scenario);
    let (o, c) = synthesize_pair(cfg.n, d, &cfg.design)?;
    let battery = Battery::sample(
        &o.weights,
        &d,
        cfg.sweep.count,
        cfg.sweep.norm_lo,
        cfg.sweep.norm_hi,
        cfg.seed,
        cfg.integrator.clone(),
    );
    let spec = cfg.sweep.spec();
    let sel = match form {
        Form::Feedback => select_gain_feedback(&o, &c, &scenario, &battery, &spec)?,
        Form::Feedforward => select_gain_feedforward(&o, &c, &scenario, &battery, &spec)?,
    };
    let report = FrontierReport {
        form,
        selected_gain: sel.design.gain,
        monotone: sel.frontier_is_monotone(),
        selection: &sel,
    };
    let out = OutputDir::create(&cfg.output.dir)?;
    out.write_json(FRONTIER_JSON, &report)?;
    let mut rungs: Vec<&Rung> = sel.frontier.iter().chain(&sel.refinement).collect();
    rungs.sort_by(|a, b| a.gain.total_cmp(&b.gain));
    out.write_with(FRONTIER_CSV, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["L", "pass", "failures", "worst_time", "worst_final_norm"])?;
        for r in &rungs {
            csv.write_record([
                format!("{:e}", r.gain),
                if r.passed { "pass" } else { "fail" }.to_string(),
                r.failures.to_string(),
                r.worst_time.map_or(String::new(), |t| format!("{t:e}")),
                format!("{:e}", r.worst_final_norm),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    println!("{:>14} {:>5} {:>9} {:>14}", "L", "pass", "failures", "worst time");
    for r in &rungs {
        let time = r.worst_time.map_or("-".to_string(), |t| format!("{t:.4e}"));
        println!("{:>14.6e} {:>5} {:>9} {:>14}", r.gain, if r.passed { "yes" } else { "no" }, r.failures, time);
    }
    println!(
        "selected L = {:.6e} ({:?} form, frontier {})",
        sel.design.gain,
        form,
        if report.monotone { "monotone" } else { "not monotone" }
    );
    println!("wrote {} and {}", out.path(FRONTIER_JSON).display(), out.path(FRONTIER_CSV).display());
    Ok(())
}
