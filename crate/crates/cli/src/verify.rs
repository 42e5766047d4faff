//! Re-verification of stored designs: certificate margins at the stored
//! gains, homogeneity of the synthesized objects, sampled Lyapunov decrease
//! and seam continuity.

use anyhow::Result;
use bilimit::controller::ControllerDesign;
use bilimit::hom::{check_function, check_vector_field, BiLimitSignature, CheckConfig, HomogeneityReport, Side, Variant};
use bilimit::lemma::{certify, DominationProblem, DominationResult, RegionCertificate, SearchSpec};
use bilimit::observer::{Mode, ObserverDesign};
use bilimit::verify::{sampled_decrease, DecreaseConfig, DecreaseReport};
use serde::Serialize;

/// Stored and recomputed margins may differ by at most this much.
pub const MARGIN_REPRODUCTION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub stage: &'static str,
    pub level: usize,
    pub constant: f64,
    pub margins: Vec<RegionCertificate>,
    /// Largest difference to the stored margins when the gain is unchanged.
    pub reproduction_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
    pub certificates: Vec<Certificate>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Default)]
struct Builder {
    checks: Vec<Check>,
    notes: Vec<String>,
    certificates: Vec<Certificate>,
}

impl Builder {
    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn homogeneity(&mut self, name: &str, reports: bilimit::Result<Vec<HomogeneityReport>>) {
        match reports {
            Ok(reps) => {
                let worst = reps
                    .iter()
                    .filter_map(|r| r.deviations.last().copied())
                    .fold(0.0f64, f64::max);
                let passed = reps.iter().all(HomogeneityReport::passed);
                self.push(name, passed, format!("deviation {worst:.2e} at the extreme rung"));
            }
            Err(e) => self.push(name, false, e.to_string()),
        }
    }

    fn decrease(&mut self, name: &str, reports: &[DecreaseReport]) {
        for r in reports {
            let detail = format!("worst normalized derivative {:.3e} over {} samples", r.worst, r.samples);
            self.push(format!("{name} ({})", variant_name(r.variant)), r.passed, detail);
        }
    }

    fn certificate(&mut self, stage: &'static str, level: usize, p: bilimit::Result<DominationProblem>, c: f64, stored: Option<&DominationResult>, spec: &SearchSpec) {
        let name = format!("{stage} level {level} certificate");
        let spec = SearchSpec {
            seed: stored.map_or(spec.seed, |s| s.seed),
            ..spec.clone()
        };
        let margins = match p.and_then(|p| certify(&p, &spec, c)) {
            Ok(m) => m,
            Err(e) => {
                self.push(name, false, e.to_string());
                return;
            }
        };
        let worst = margins.iter().map(|r| r.min_margin).fold(f64::INFINITY, f64::min);
        let passed = margins.iter().all(|r| r.min_margin > 0.0);
        let region = margins
            .iter()
            .min_by(|a, b| a.min_margin.total_cmp(&b.min_margin))
            .map_or(String::new(), |r| format!(" ({})", r.region));
        self.push(&name, passed, format!("constant {c:.6e}, minimum margin {worst:.3e}{region}"));
        let reproduction_error = stored.filter(|s| s.c == c).map(|s| {
            if s.certificate.len() != margins.len() {
                return f64::INFINITY;
            }
            s.certificate
                .iter()
                .zip(&margins)
                .map(|(a, b)| if a.region == b.region { (a.min_margin - b.min_margin).abs() } else { f64::INFINITY })
                .fold(0.0, f64::max)
        });
        if let Some(err) = reproduction_error {
            self.push(
                format!("{stage} level {level} margin reproduction"),
                err <= MARGIN_REPRODUCTION_TOL,
                format!("largest difference to the stored margins {err:.1e}"),
            );
        } else if stored.is_some() {
            self.notes.push(format!("{stage} level {level}: gain differs from its tuning record"));
        }
        self.certificates.push(Certificate {
            stage,
            level,
            constant: c,
            margins,
            reproduction_error,
        });
    }

    fn finish(self) -> VerifyReport {
        VerifyReport {
            passed: self.checks.iter().all(|c| c.passed),
            notes: self.notes,
            checks: self.checks,
            certificates: self.certificates,
        }
    }
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Full => "full",
        Variant::Zero => "0-approximation",
        Variant::Infinity => "∞-approximation",
    }
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Zero => "at 0",
        Side::Infinity => "at ∞",
    }
}

/// Settings of the re-verification.
pub struct VerifyOptions {
    pub observer_search: SearchSpec,
    pub controller_search: SearchSpec,
    pub homogeneity: CheckConfig,
    pub decrease: DecreaseConfig,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            observer_search: SearchSpec::default(),
            controller_search: SearchSpec::default(),
            // gaps between the degrees at 0 and at ∞ make deviations decay
            // slowly, so the ladder spans twelve decades
            homogeneity: CheckConfig {
                decades: 12,
                ..CheckConfig::default()
            },
            decrease: DecreaseConfig::default(),
        }
    }
}

pub fn verify_designs(o: &ObserverDesign, c: &ControllerDesign, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut b = Builder::default();
    let same = o.n == c.n && o.degrees == c.degrees && o.weights == c.weights;
    b.push(
        "shared signature",
        same,
        format!(
            "observer n = {}, d = ({}, {}); controller n = {}, d = ({}, {})",
            o.n, o.degrees.d0, o.degrees.d_inf, c.n, c.degrees.d0, c.degrees.d_inf
        ),
    );
    if o.degrees.is_degenerate() {
        b.notes.push(format!(
            "degenerate degrees d0 = d_inf = {}: every function has a single branch and coincides with its approximations",
            o.degrees.d0
        ));
    }
    if o.n == 1 {
        b.notes.push("n = 1: no tuned levels, the design is a single scalar injection and feedback".into());
    }

    for k in 0..o.n.saturating_sub(1) {
        let (t1, t2) = o.level_split(k);
        let lvl = &o.levels[k];
        b.certificate("observer", k + 1, DominationProblem::new(t1, t2), lvl.ell, lvl.tuning.as_ref(), &opts.observer_search);
    }
    for j in 1..c.n {
        let (t1, t2) = c.level_split(j);
        let lvl = &c.levels[j];
        let kappa = lvl.k.powf(1.0 / lvl.alpha);
        let stored = lvl.tuning.as_ref();
        let kappa = stored.filter(|s| s.c.powf(lvl.alpha) == lvl.k).map_or(kappa, |s| s.c);
        b.certificate("controller", j + 1, DominationProblem::new(t1, t2), kappa, stored, &opts.controller_search);
    }

    let cfg = &opts.homogeneity;
    for side in [Side::Zero, Side::Infinity] {
        for j in 0..o.n {
            let f = o.injection_component(j);
            b.homogeneity(
                &format!("injection K_1 component {} homogeneity {}", j + 1, side_name(side)),
                check_function(&f, side, cfg).map(|r| vec![r]),
            );
        }
        b.homogeneity(
            &format!("observer error field homogeneity {}", side_name(side)),
            check_vector_field(&o.error_field(), side, cfg),
        );
        b.homogeneity(
            &format!("feedback φ_n homogeneity {}", side_name(side)),
            check_function(&c.feedback_function(), side, cfg).map(|r| vec![r]),
        );
        b.homogeneity(
            &format!("state-feedback loop homogeneity {}", side_name(side)),
            check_vector_field(&c.closed_loop_field(), side, cfg),
        );
    }

    let sig = BiLimitSignature {
        r0: o.weights.r0.clone(),
        d0: o.lyapunov.d0 + o.degrees.d0,
        r_inf: o.weights.r_inf.clone(),
        d_inf: o.lyapunov.d_inf + o.degrees.d_inf,
    };
    b.decrease("observer Lyapunov decrease", &sampled_decrease(&sig, &|v, e| o.lyapunov_derivative(v, e), &opts.decrease));
    b.decrease("controller Lyapunov decrease", &c.verify_decrease(&opts.decrease));

    seam_checks(&mut b, o, c);
    Ok(b.finish())
}

/// `q_i` glued at `|s| = 1` must be C¹ there; `ψ_j` must have a continuous
/// gradient across `χ_j = φ_{j−1}`.
fn seam_checks(b: &mut Builder, o: &ObserverDesign, c: &ControllerDesign) {
    const EPS: f64 = 1e-9;
    if o.mode == Mode::Paper && !o.degrees.is_degenerate() {
        for lvl in &o.levels {
            let q = &lvl.q;
            let slope = q.deriv(Variant::Full, 1.0);
            let value_jump = (q.eval(Variant::Full, 1.0 + EPS) - q.eval(Variant::Full, 1.0 - EPS) - 2.0 * EPS * slope).abs();
            let slope_jump = (q.deriv(Variant::Full, 1.0 + EPS) - q.deriv(Variant::Full, 1.0 - EPS)).abs();
            let scale = q.eval(Variant::Full, 1.0).abs().max(slope.abs());
            b.push(
                format!("q_{} seam at |s| = 1", lvl.index),
                value_jump <= 1e-6 * scale && slope_jump <= 1e-6 * scale,
                format!("value jump {value_jump:.1e}, slope jump {slope_jump:.1e}"),
            );
        }
    } else {
        b.notes.push("observer saturations have no seam (single-branch or power-sum form)".into());
    }
    if c.n < 2 {
        b.notes.push("no ψ seams for n = 1".into());
        return;
    }
    for j in 1..c.n {
        let mut x: Vec<f64> = (0..c.n).map(|i| 0.3 + 0.1 * i as f64).collect();
        x[j] = c.phi(Variant::Full, j - 1, &x);
        let side = |s: f64| {
            let mut y = x.clone();
            y[j] += s * 1e-8;
            c.psi_grad(Variant::Full, j, &y)
        };
        let (above, below) = (side(1.0), side(-1.0));
        let scale = above.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
        let jump = above.iter().zip(&below).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        b.push(
            format!("ψ_{} gradient seam at χ_{} = φ_{}", j + 1, j + 1, j),
            jump < 1e-4 * scale,
            format!("relative gradient jump {:.1e}", jump / scale),
        );
    }
}

pub fn print_report(r: &VerifyReport) {
    for c in &r.checks {
        println!("  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for n in &r.notes {
        println!("  note: {n}");
    }
    println!("verification: {} ({} checks, {} failed)", if r.passed { "PASS" } else { "FAIL" }, r.checks.len(), r.failures().count());
}
