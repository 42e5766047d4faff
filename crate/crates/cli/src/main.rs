//! `bilimit`: design, simulate, sweep and verify bi-limit homogeneous
//! observers and output feedbacks for chains of integrators.

mod config;
mod design;
mod output;
mod simulate;
mod sweep;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bilimit::controller::ControllerDesign;
use bilimit::observer::{Mode, ObserverDesign};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ScenarioConfig, CONFIG_HELP};
use crate::design::{CONTROLLER_FILE, OBSERVER_FILE};
use crate::output::{read_json, OutputDir};
use crate::verify::{print_report, verify_designs, VerifyOptions};

const EXIT_VALIDATION: u8 = 2;
const EXIT_SELECTION: u8 = 3;

#[derive(Parser)]
#[command(name = "bilimit", version, about, after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for parallel batches (default: all cores).
    #[arg(long, env = "BILIMIT_THREADS", global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the observer and the controller and write both as JSON.
    Design(Common),
    /// Simulate the output feedback and write the trace and a summary.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        designs: DesignPaths,
    },
    /// Sweep the scaling gain and write the frontier.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Bisect between the last failing and the first passing rung.
        #[arg(long)]
        refine_frontier: bool,
    },
    /// Re-run the checks on stored designs and report PASS or FAIL.
    Verify {
        #[command(flatten)]
        designs: DesignPaths,
        /// Config supplying the search settings used at synthesis.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for verify.json; the report is only printed when unset.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled initial conditions, overriding the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Saturation family for both observer and controller.
    #[arg(long, value_enum)]
    mode: Option<CliMode>,
}

#[derive(Args)]
struct DesignPaths {
    /// Observer design JSON (default: <out>/observer.json).
    #[arg(long)]
    observer: Option<PathBuf>,
    /// Controller design JSON (default: <out>/controller.json).
    #[arg(long)]
    controller: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Paper,
    Simplified,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Paper => Mode::Paper,
            CliMode::Simplified => Mode::Simplified,
        }
    }
}

impl Common {
    fn load(&self, refine: bool) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(&self.config)?;
        cfg.apply(self.mode.map(Mode::from), self.seed, self.out.as_deref(), refine);
        Ok(cfg)
    }
}

impl DesignPaths {
    fn load(&self, dir: &Path) -> Result<(ObserverDesign, ControllerDesign)> {
        let po = self.observer.clone().unwrap_or_else(|| dir.join(OBSERVER_FILE));
        let pc = self.controller.clone().unwrap_or_else(|| dir.join(CONTROLLER_FILE));
        let o = read_json(&po).context("loading the observer design")?;
        let c = read_json(&pc).context("loading the controller design")?;
        Ok((o, c))
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Design(common) => design::run(&common.load(false)?),
        Command::Simulate { common, designs } => {
            let cfg = common.load(false)?;
            let (o, c) = designs.load(&cfg.output.dir)?;
            simulate::run(&cfg, o, c)
        }
        Command::Sweep { common, refine_frontier } => sweep::run(&common.load(refine_frontier)?),
        Command::Verify { designs, config, out } => {
            let cfg = config.as_deref().map(ScenarioConfig::load).transpose()?;
            let dir = out.clone().or_else(|| cfg.as_ref().map(|c| c.output.dir.clone())).unwrap_or_else(|| PathBuf::from("out"));
            let (o, c) = designs.load(&dir)?;
            let mut opts = VerifyOptions::default();
            if let Some(cfg) = &cfg {
                opts.observer_search = cfg.design.observer.search.clone();
                opts.controller_search = cfg.design.controller.search.clone();
            }
            let report = verify_designs(&o, &c, &opts)?;
            print_report(&report);
            if let Some(dir) = out {
                let path = OutputDir::create(&dir)?.write_json("verify.json", &report)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let selection = matches!(e.downcast_ref::<bilimit::Error>(), Some(bilimit::Error::Selection { .. }));
            ExitCode::from(if selection { EXIT_SELECTION } else { EXIT_VALIDATION })
        }
    }
}
