//! Scenario configuration file (TOML, strict schema).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bilimit::observer::{DegreePair, Mode};
use bilimit::output_feedback::{DisturbanceScenario, Form, PairOptions, SweepSpec};
use bilimit::sim::IntegratorConfig;
use serde::Deserialize;

/// Documentation of every key and its default, shown by `--help`.
pub const CONFIG_HELP: &str = "\
CONFIG FILE (TOML, unknown keys are rejected)

  n = 2                          chain length (required)
  seed = 0                       seed for sampled initial conditions

  [degrees]                      required
  d0 = 0.0                       degree at 0, in (-1, 1/(n-1))
  d_inf = 0.5                    degree at infinity, in (-1, 1/(n-1))

  [scenario]                     default: kind = \"chain\"
  kind = \"chain\"                 chain | feedback_example_b18 | feedforward_example_c45
                                 | power_sum | constant
  q = 1.0, p = 1.5               feedback_example_b18 exponents (0 < q < p < 2)
  c0 = 0.5, c_inf = 0.5          feedback_example_b18 and power_sum coefficients
  form = \"feedback\"              power_sum structure: feedback | feedforward
  amplitude = 0.0                constant disturbance on the last channel

  [design.observer]
  mode = \"paper\"                 paper | simplified
  terminal_gain = 1.0            gain l_n of the last injection level
  search.*                       domination search: points_per_dim = 64, density = 1,
                                 annulus_lo = 1e-3, annulus_hi = 1e3, annulus_rungs = 40,
                                 eps_zero = 1e-8, c_start = 1.0, c_max = 1e9,
                                 bisection_steps = 20, safety = 1.25, margin = 0.0
  level_weights.*                decades = 16, per_decade = 2, patience = 3
  [design.controller]
  mode                           unset: simplified when d0 < d_inf, paper otherwise
  first_gain = 1.0               gain k_1
  search.*, level_weights.*      as for the observer

  [integrator]                   fixed-step RK4
  step = 1e-3, t_end = 50.0      step and horizon (rescaled time for output feedback)
  origin_guard = 1e-9            states inside this norm are clamped to the origin
  threshold = 1e-6               convergence threshold on the homogeneous norm
  blowup_norm = 1e12             norm at which a run is truncated as a blowup
  record_every = 1               trace decimation (0 keeps only the endpoints)
  scaling = { d0, d_inf, min_factor = 1e-6, max_factor = 1e6 }   optional step scaling

  [simulate]
  gain = 1.0                     scaling gain L
  initial = [..]                 plant state x(0), or x(0) followed by the estimate;
                                 unset: one point drawn with norm in [norm_lo, norm_hi]
  norm_lo = 1.0, norm_hi = 1.0

  [sweep]
  form                           feedback | feedforward; unset: from the scenario,
                                 else feedback when d0 <= d_inf
  doublings = 20                 rungs L = 2^(+-k), k = 0..=doublings
  refine = false                 bisect the frontier (also --refine-frontier)
  bisection_steps = 6
  count = 25                     initial conditions in the battery
  norm_lo = 1e-2, norm_hi = 1e2  battery norm range

  [output]
  dir = \"out\"                    output directory (also --out)
";

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    pub degrees: Degrees,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub design: PairOptions,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Degrees {
    pub d0: f64,
    pub d_inf: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Chain,
    FeedbackExampleB18,
    FeedforwardExampleC45,
    PowerSum,
    Constant,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub kind: ScenarioKind,
    pub q: Option<f64>,
    pub p: Option<f64>,
    pub c0: Option<f64>,
    pub c_inf: Option<f64>,
    pub form: Option<Form>,
    pub amplitude: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub gain: f64,
    pub initial: Option<Vec<f64>>,
    pub norm_lo: f64,
    pub norm_hi: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            gain: 1.0,
            initial: None,
            norm_lo: 1.0,
            norm_hi: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub form: Option<Form>,
    pub doublings: u32,
    pub refine: bool,
    pub bisection_steps: u32,
    pub count: usize,
    pub norm_lo: f64,
    pub norm_hi: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let spec = SweepSpec::default();
        Self {
            form: None,
            doublings: spec.doublings,
            refine: spec.refine,
            bisection_steps: spec.bisection_steps,
            count: 25,
            norm_lo: 1e-2,
            norm_hi: 1e2,
        }
    }
}

impl SweepSection {
    pub fn spec(&self) -> SweepSpec {
        SweepSpec {
            doublings: self.doublings,
            refine: self.refine,
            bisection_steps: self.bisection_steps,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.degree_pair()?;
        cfg.disturbance()?.validate(cfg.n)?;
        cfg.integrator.validate()?;
        if !(cfg.simulate.gain > 0.0 && cfg.simulate.gain.is_finite()) {
            bail!("simulate.gain = {} must be positive", cfg.simulate.gain);
        }
        check_range("simulate", cfg.simulate.norm_lo, cfg.simulate.norm_hi)?;
        check_range("sweep", cfg.sweep.norm_lo, cfg.sweep.norm_hi)?;
        if cfg.sweep.count == 0 {
            bail!("sweep.count must be positive");
        }
        Ok(cfg)
    }

    pub fn degree_pair(&self) -> Result<DegreePair> {
        if self.n == 0 {
            bail!("n must be at least 1");
        }
        Ok(DegreePair::new(self.n, self.degrees.d0, self.degrees.d_inf)?)
    }

    /// Applies the command-line overrides.
    pub fn apply(&mut self, mode: Option<Mode>, seed: Option<u64>, out: Option<&Path>, refine: bool) {
        if let Some(m) = mode {
            self.design.observer.mode = m;
            self.design.controller.mode = Some(m);
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(dir) = out {
            self.output.dir = dir.to_path_buf();
        }
        self.sweep.refine |= refine;
    }

    pub fn disturbance(&self) -> Result<DisturbanceScenario> {
        let s = &self.scenario;
        let allowed: &[&str] = match s.kind {
            ScenarioKind::Chain | ScenarioKind::FeedforwardExampleC45 => &[],
            ScenarioKind::FeedbackExampleB18 => &["q", "p", "c0", "c_inf"],
            ScenarioKind::PowerSum => &["c0", "c_inf", "form"],
            ScenarioKind::Constant => &["amplitude"],
        };
        let given = [
            ("q", s.q.is_some()),
            ("p", s.p.is_some()),
            ("c0", s.c0.is_some()),
            ("c_inf", s.c_inf.is_some()),
            ("form", s.form.is_some()),
            ("amplitude", s.amplitude.is_some()),
        ];
        for (key, set) in given {
            if set && !allowed.contains(&key) {
                bail!("scenario.{key} is not used by kind {:?}", s.kind);
            }
        }
        Ok(match s.kind {
            ScenarioKind::Chain => DisturbanceScenario::None,
            ScenarioKind::FeedbackExampleB18 => DisturbanceScenario::FeedbackExample {
                c0: s.c0.unwrap_or(0.5),
                c_inf: s.c_inf.unwrap_or(0.5),
                q: s.q.unwrap_or(1.0),
                p: s.p.unwrap_or(1.5),
            },
            ScenarioKind::FeedforwardExampleC45 => DisturbanceScenario::FeedforwardExample,
            ScenarioKind::PowerSum => DisturbanceScenario::PowerSum {
                form: s.form.unwrap_or(Form::Feedback),
                c0: s.c0.unwrap_or(0.5),
                c_inf: s.c_inf.unwrap_or(0.5),
                d0: self.degrees.d0,
                d_inf: self.degrees.d_inf,
            },
            ScenarioKind::Constant => DisturbanceScenario::Constant {
                amplitude: s.amplitude.unwrap_or(0.0),
            },
        })
    }

    /// Sweep direction: explicit, else the scenario's, else by degree ordering.
    pub fn form(&self, scenario: &DisturbanceScenario) -> Form {
        self.sweep.form.or_else(|| scenario.form()).unwrap_or({
            if self.degrees.d0 <= self.degrees.d_inf {
                Form::Feedback
            } else {
                Form::Feedforward
            }
        })
    }
}

fn check_range(section: &str, lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        bail!("{section}.norm_lo = {lo} and norm_hi = {hi} must satisfy 0 < norm_lo <= norm_hi");
    }
    Ok(())
}
