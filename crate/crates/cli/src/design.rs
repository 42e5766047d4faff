//! `bilimit design`: observer and controller synthesis.

use anyhow::Result;
use bilimit::controller::ControllerDesign;
use bilimit::observer::ObserverDesign;
use bilimit::output_feedback::synthesize_pair;

use crate::config::ScenarioConfig;
use crate::output::OutputDir;
use crate::verify::{print_report, verify_designs, VerifyOptions};

pub const OBSERVER_FILE: &str = "observer.json";
pub const CONTROLLER_FILE: &str = "controller.json";

pub fn run(cfg: &ScenarioConfig) -> Result<()> {
    let d = cfg.degree_pair()?;
    let (o, c) = synthesize_pair(cfg.n, d, &cfg.design)?;
    let out = OutputDir::create(&cfg.output.dir)?;
    let po = out.write_json(OBSERVER_FILE, &o)?;
    let pc = out.write_json(CONTROLLER_FILE, &c)?;
    print_gain_table(&o, &c);
    let opts = VerifyOptions {
        observer_search: cfg.design.observer.search.clone(),
        controller_search: cfg.design.controller.search.clone(),
        ..VerifyOptions::default()
    };
    let report = verify_designs(&o, &c, &opts)?;
    print_report(&report);
    println!("wrote {} and {}", po.display(), pc.display());
    Ok(())
}

pub fn print_gain_table(o: &ObserverDesign, c: &ControllerDesign) {
    println!(
        "n = {}, d0 = {}, d_inf = {}, observer mode {:?}, controller mode {:?}",
        o.n, o.degrees.d0, o.degrees.d_inf, o.mode, c.mode
    );
    println!("{:>5} {:>14} {:>10} {:>14} {:>10}", "level", "l_i", "mu_i", "k_i", "mu_i");
    for (lo, lc) in o.levels.iter().zip(&c.levels) {
        println!("{:>5} {:>14.6e} {:>10.4} {:>14.6e} {:>10.4}", lo.index, lo.ell, lo.weight, lc.k, lc.weight);
    }
}
