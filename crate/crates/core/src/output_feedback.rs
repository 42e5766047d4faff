//! Dynamic output feedback for the perturbed chain
//! `ẋ_i = x_{i+1} + δ_i`, `ẋ_n = u + δ_n`, `y = x_1`:
//!
//! `u = L^n φ_n(𝔛̂)`, `𝔛̂' = L(S𝔛̂ + Bφ_n(𝔛̂) + K₁(𝔛̂₁ − y))`.
//!
//! In the rescaled coordinates `e_i = χ̂_i − x_i/L^{i−1}`, `τ = Lt`, the loop
//! becomes `χ̂' = Sχ̂ + Bφ_n(χ̂) + K₁(e₁)`, `E' = SE + K₁(e₁) − δ̃` with
//! `δ̃_i = δ_i/L^i`. Large `L` shrinks feedback-form disturbances, small `L`
//! shrinks feedforward-form ones; the gain is selected by simulated sweeps.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{alpha_schedule, build_controller, controller_lyapunov_degrees, ControllerDesign, ControllerOptions};
use crate::error::{Error, Result};
use crate::hom::{abs_pow, signed_pow, BiLimitSignature, HomFunction, HomVectorField, ScalarFn, Side, Variant, VectorFn};
use crate::lemma::{domination_bound, find_domination_constant, DominationProblem, DominationResult, SearchSpec};
use crate::observer::{
    build_observer, check_ratio_condition, observer_lyapunov_degrees, weights_from_degrees, ChainWeights, DegreePair,
    LyapunovDegrees, ObserverDesign, ObserverOptions,
};
use crate::sampling::random_points_in_shell;
use crate::sim::{integrate, IntegratorConfig, RunSummary, StepScaling, Trace};
use crate::verify::{sampled_decrease, DecreaseConfig, DecreaseReport};

/// Which perturbation structure the gain `L` has to dominate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    /// `δ_i` depends on `x_1, …, x_i`; needs `d0 ≤ d∞` and large `L`.
    Feedback,
    /// `δ_i` depends on `x_{i+2}, …, x_n`; needs `d∞ ≤ d0` and small `L`.
    Feedforward,
}

impl Form {
    pub fn check(self, d: &DegreePair) -> Result<()> {
        let ok = match self {
            Form::Feedback => d.d0 <= d.d_inf,
            Form::Feedforward => d.d_inf <= d.d0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "{self:?} form needs {} but got d0 = {}, d_inf = {}",
                match self {
                    Form::Feedback => "d0 <= d_inf",
                    Form::Feedforward => "d_inf <= d0",
                },
                d.d0,
                d.d_inf
            )))
        }
    }
}

/// Lyapunov degrees admissible for both the observer and the controller, so
/// that `V + 𝔠W` is homogeneous in the bi-limit.
pub fn common_lyapunov_degrees(n: usize, d: &DegreePair) -> Result<LyapunovDegrees> {
    let w = weights_from_degrees(n, d)?;
    let o = observer_lyapunov_degrees(&w, d);
    let c = controller_lyapunov_degrees(&w, d, &alpha_schedule(n, d, &w));
    let d0 = o.d0.max(c.d0);
    if d.is_degenerate() {
        return Ok(LyapunovDegrees { d0, d_inf: d0 });
    }
    let mut d_inf = o.d_inf.max(c.d_inf);
    for (a, b) in w.r0.entries().iter().zip(w.r_inf.entries()) {
        d_inf = d_inf.max(d0 * b / a + 0.1);
    }
    let l = LyapunovDegrees { d0, d_inf };
    check_ratio_condition(&w, d, &l)?;
    Ok(l)
}

/// Settings for synthesizing an observer and a controller together.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairOptions {
    pub observer: ObserverOptions,
    pub controller: ControllerOptions,
}

/// Builds an observer and a controller that share Lyapunov degrees. Degrees
/// set explicitly in either option block take precedence.
pub fn synthesize_pair(n: usize, d: DegreePair, opts: &PairOptions) -> Result<(ObserverDesign, ControllerDesign)> {
    let common = common_lyapunov_degrees(n, &d)?;
    let mut o = opts.observer.clone();
    let mut c = opts.controller.clone();
    let shared = o.lyapunov.or(c.lyapunov).unwrap_or(common);
    o.lyapunov = Some(shared);
    c.lyapunov = Some(shared);
    Ok((build_observer(n, d, &o)?, build_controller(n, d, &c)?))
}

/// Output feedback assembled from an observer and a controller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFeedbackDesign {
    pub observer: ObserverDesign,
    pub controller: ControllerDesign,
    /// The scaling gain `L`.
    pub gain: f64,
    pub form: Form,
    /// Weight `𝔠` of `U = V + 𝔠W`, once computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite_weight: Option<f64>,
}

/// Checks the shared signature and `L > 0`.
pub fn assemble(observer: ObserverDesign, controller: ControllerDesign, gain: f64, form: Form) -> Result<OutputFeedbackDesign> {
    if observer.n != controller.n || observer.degrees != controller.degrees || observer.weights != controller.weights {
        return Err(Error::SignatureMismatch(format!(
            "observer (n = {}, {:?}) and controller (n = {}, {:?}) differ",
            observer.n, observer.degrees, controller.n, controller.degrees
        )));
    }
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::Parameter(format!("gain L = {gain} must be positive")));
    }
    form.check(&observer.degrees)?;
    Ok(OutputFeedbackDesign {
        observer,
        controller,
        gain,
        form,
        composite_weight: None,
    })
}

/// `U = V + 𝔠W` with its tuning and the sampled decrease along the rescaled loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeLyapunov {
    pub weight: f64,
    pub tuning: DominationResult,
    pub decrease: Vec<DecreaseReport>,
}

impl OutputFeedbackDesign {
    pub fn n(&self) -> usize {
        self.observer.n
    }

    pub fn weights(&self) -> &ChainWeights {
        &self.observer.weights
    }

    pub fn with_gain(&self, gain: f64) -> Result<Self> {
        let mut out = assemble(self.observer.clone(), self.controller.clone(), gain, self.form)?;
        out.composite_weight = self.composite_weight;
        Ok(out)
    }

    /// Raw closed loop on `(x, 𝔛̂, z)` at time `t`.
    pub fn raw_rhs(&self, scenario: &DisturbanceScenario, t: f64, s: &[f64], out: &mut [f64]) {
        let n = self.n();
        let l = self.gain;
        let (x, rest) = s.split_at(n);
        let (xh, z) = rest.split_at(n);
        let mut delta = [0.0; MAX_DIM];
        scenario.disturbance(t, x, z, &mut delta[..n]);
        let u = l.powi(n as i32) * self.controller.control(Variant::Full, xh);
        for i in 0..n {
            let drive = if i + 1 < n { x[i + 1] } else { u };
            out[i] = drive + delta[i];
        }
        let k = self.observer.injection(Variant::Full, xh[0] - x[0]);
        let phi = u / l.powi(n as i32);
        for i in 0..n {
            let shift = if i + 1 < n { xh[i + 1] } else { phi };
            out[n + i] = l * (shift + k[i]);
        }
        scenario.aux_rhs(t, x, z, &mut out[2 * n..]);
    }

    /// Rescaled closed loop on `(χ̂, E, z)` at rescaled time `τ = Lt`.
    pub fn rescaled_rhs(&self, scenario: &DisturbanceScenario, tau: f64, s: &[f64], out: &mut [f64]) {
        let n = self.n();
        let l = self.gain;
        let (y, z) = s.split_at(2 * n);
        self.nominal_rhs(Variant::Full, y, &mut out[..2 * n]);
        if scenario.is_none() {
            return;
        }
        let mut x = [0.0; MAX_DIM];
        self.raw_state(y, &mut x[..n]);
        let mut delta = [0.0; MAX_DIM];
        let t = tau / l;
        scenario.disturbance(t, &x[..n], z, &mut delta[..n]);
        for i in 0..n {
            out[n + i] -= delta[i] / l.powi(i as i32 + 1);
        }
        let m = z.len();
        if m > 0 {
            scenario.aux_rhs(t, &x[..n], z, &mut out[2 * n..]);
            out[2 * n..].iter_mut().for_each(|v| *v /= l);
        }
    }

    /// Disturbance-free rescaled loop on `(χ̂, E)`.
    pub fn nominal_rhs(&self, v: Variant, y: &[f64], out: &mut [f64]) {
        let n = self.n();
        let (chi, e) = y.split_at(n);
        let k = self.observer.injection(v, e[0]);
        self.controller.closed_loop_rhs(v, chi, &mut out[..n]);
        self.observer.error_rhs(v, e, &mut out[n..]);
        for i in 0..n {
            out[i] += k[i];
        }
    }

    /// `x_i = L^{i−1}(χ̂_i − e_i)`.
    pub fn raw_state(&self, y: &[f64], x: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            x[i] = self.gain.powi(i as i32) * (y[i] - y[n + i]);
        }
    }

    /// `(χ̂, E)` from the plant state and the observer state.
    pub fn to_rescaled(&self, x: &[f64], xhat: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y = xhat.to_vec();
        y.extend((0..n).map(|i| xhat[i] - x[i] / self.gain.powi(i as i32)));
        y
    }

    fn pair_signature(&self, d0: f64, d_inf: f64) -> BiLimitSignature {
        let w = self.weights();
        BiLimitSignature {
            r0: w.r0.concat(&w.r0),
            d0,
            r_inf: w.r_inf.concat(&w.r_inf),
            d_inf,
        }
    }

    /// The disturbance-free rescaled loop as a vector field on `ℝ^{2n}`.
    pub fn closed_loop_field(&self) -> HomVectorField {
        let sig = self.pair_signature(self.observer.degrees.d0, self.observer.degrees.d_inf);
        let f = |v: Variant| {
            let me = self.clone();
            Arc::new(move |y: &[f64]| {
                let mut out = vec![0.0; y.len()];
                me.nominal_rhs(v, y, &mut out);
                out
            }) as VectorFn
        };
        HomVectorField::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
            .expect("chain degrees give admissible component degrees")
    }

    fn check_common_degrees(&self) -> Result<()> {
        if self.observer.lyapunov != self.controller.lyapunov {
            return Err(Error::SignatureMismatch(format!(
                "composite Lyapunov function needs equal degrees, got V {:?} and W {:?}",
                self.controller.lyapunov, self.observer.lyapunov
            )));
        }
        Ok(())
    }

    /// `η = ∇V·(Sχ̂ + Bφ_n(χ̂) + K₁(e₁))` and `γ = −∇W·(SE + K₁(e₁))`.
    pub fn composite_parts(&self, v: Variant, y: &[f64]) -> (f64, f64) {
        let n = self.n();
        let (chi, e) = y.split_at(n);
        let mut f = [0.0; 2 * MAX_DIM];
        self.nominal_rhs(v, y, &mut f[..2 * n]);
        let (_, gv) = self.controller.lyapunov_value_grad(v, chi);
        let (_, gw) = self.observer.lyapunov_value_grad(v, 0, e);
        let eta = gv.iter().zip(&f[..n]).map(|(a, b)| a * b).sum();
        let gamma = -gw.iter().zip(&f[n..2 * n]).map(|(a, b)| a * b).sum::<f64>();
        (eta, gamma)
    }

    /// `U = V(χ̂) + 𝔠 W(E)` with the given weight.
    pub fn composite_value(&self, v: Variant, weight: f64, y: &[f64]) -> f64 {
        let n = self.n();
        self.controller.lyapunov_value(v, &y[..n]) + weight * self.observer.lyapunov_value(v, &y[n..])
    }

    /// `U̇ = η − 𝔠γ` along the disturbance-free rescaled loop.
    pub fn composite_derivative(&self, v: Variant, weight: f64, y: &[f64]) -> f64 {
        let (eta, gamma) = self.composite_parts(v, y);
        eta - weight * gamma
    }

    /// `U = V + 𝔠W` and `U̇` as function objects on `(χ̂, E)`.
    pub fn composite_functions(&self, weight: f64) -> Result<(HomFunction, HomFunction)> {
        self.check_common_degrees()?;
        let l = self.controller.lyapunov;
        let d = self.observer.degrees;
        let build = |sig: BiLimitSignature, derivative: bool| {
            let f = |v: Variant| {
                let me = self.clone();
                Arc::new(move |y: &[f64]| {
                    if derivative {
                        me.composite_derivative(v, weight, y)
                    } else {
                        me.composite_value(v, weight, y)
                    }
                }) as ScalarFn
            };
            HomFunction::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
        };
        Ok((
            build(self.pair_signature(l.d0, l.d_inf), false),
            build(self.pair_signature(l.d0 + d.d0, l.d_inf + d.d_inf), true),
        ))
    }

    /// Tunes `𝔠` with the domination lemma, stores it and checks the decrease.
    pub fn composite_lyapunov(&mut self, spec: &SearchSpec, cfg: &DecreaseConfig) -> Result<CompositeLyapunov> {
        self.check_common_degrees()?;
        let l = self.controller.lyapunov;
        let d = self.observer.degrees;
        let sig = self.pair_signature(l.d0 + d.d0, l.d_inf + d.d_inf);
        let part = |which: usize| {
            let f = |v: Variant| {
                let me = self.clone();
                Arc::new(move |y: &[f64]| {
                    let p = me.composite_parts(v, y);
                    if which == 0 {
                        p.0
                    } else {
                        p.1
                    }
                }) as ScalarFn
            };
            HomFunction::new(sig.clone(), f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
        };
        let tuning = DominationProblem::new(part(0), part(1)).and_then(|p| find_domination_constant(&p, spec))?;
        let weight = tuning.c;
        self.composite_weight = Some(weight);
        let me = self.clone();
        let decrease = sampled_decrease(&sig, &move |v, y| me.composite_derivative(v, weight, y), cfg);
        Ok(CompositeLyapunov { weight, tuning, decrease })
    }
}

/// Largest chain length handled by the stack buffers of the field evaluations.
pub const MAX_DIM: usize = 16;

/// Disturbances acting on the chain, with optional auxiliary dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceScenario {
    /// The unperturbed chain.
    None,
    /// `n = 2`, `δ₂ = c0 x₂^q + c∞ x₂^p` with `0 < q < p < 2`.
    FeedbackExample { c0: f64, c_inf: f64, q: f64, p: f64 },
    /// `n = 3`, `δ₁ = x₃^{3/2} + z³`, `ż = −z⁴ + x₃`, `z(0) = 0`, with signed
    /// powers `s^a = sign(s)|s|^a`.
    FeedforwardExample,
    /// `δ_i = c0 Σ_j x_j^{a0(i,j)} + c∞ Σ_j x_j^{a∞(i,j)}` with
    /// `a(i,j) = (1 − d(n−i−1))/(1 − d(n−j))`, summed over `j ≤ i` for the
    /// feedback form and `j ≥ i+2` for the feedforward form.
    PowerSum { form: Form, c0: f64, c_inf: f64, d0: f64, d_inf: f64 },
    /// `δ_n = amplitude`, the other channels unperturbed.
    Constant { amplitude: f64 },
}

impl DisturbanceScenario {
    pub fn is_none(&self) -> bool {
        matches!(self, Self::None)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            Self::None => Ok(()),
            Self::FeedbackExample { q, p, .. } => {
                if n != 2 {
                    return Err(Error::DimensionMismatch { expected: 2, got: n });
                }
                if !(0.0 < q && q < p && p < 2.0) {
                    return Err(Error::Parameter(format!("feedback example needs 0 < q < p < 2, got q = {q}, p = {p}")));
                }
                Ok(())
            }
            Self::FeedforwardExample => {
                if n != 3 {
                    return Err(Error::DimensionMismatch { expected: 3, got: n });
                }
                Ok(())
            }
            Self::PowerSum { d0, d_inf, .. } => DegreePair::new(n, d0, d_inf).map(|_| ()),
            Self::Constant { amplitude } => {
                if amplitude.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("disturbance amplitude {amplitude} must be finite")))
                }
            }
        }
    }

    /// Which `L` direction dominates the scenario, if it is perturbed.
    pub fn form(&self) -> Option<Form> {
        match self {
            Self::None | Self::Constant { .. } => None,
            Self::FeedbackExample { .. } => Some(Form::Feedback),
            Self::FeedforwardExample => Some(Form::Feedforward),
            Self::PowerSum { form, .. } => Some(*form),
        }
    }

    pub fn aux_dim(&self) -> usize {
        match self {
            Self::FeedforwardExample => 1,
            _ => 0,
        }
    }

    /// Final-norm tolerance for scenarios whose auxiliary state decays too
    /// slowly for the convergence threshold to be reached on a finite horizon.
    pub fn final_tolerance(&self) -> Option<f64> {
        match self {
            Self::FeedforwardExample => Some(FEEDFORWARD_TOLERANCE),
            _ => None,
        }
    }

    /// Writes `δ(t, x, z)` into `out`.
    pub fn disturbance(&self, _t: f64, x: &[f64], z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match *self {
            Self::None => {}
            Self::FeedbackExample { c0, c_inf, q, p } => {
                out[1] = c0 * signed_pow(x[1], q) + c_inf * signed_pow(x[1], p);
            }
            Self::FeedforwardExample => {
                out[0] = signed_pow(x[2], 1.5) + z[0] * z[0] * z[0];
            }
            Self::PowerSum { form, c0, c_inf, d0, d_inf } => {
                let n = x.len();
                for (i, o) in out.iter_mut().enumerate() {
                    for j in power_sum_range(form, i, n) {
                        *o += c0 * signed_pow(x[j], power_sum_exponent(d0, n, i, j))
                            + c_inf * signed_pow(x[j], power_sum_exponent(d_inf, n, i, j));
                    }
                }
            }
            Self::Constant { amplitude } => {
                if let Some(last) = out.last_mut() {
                    *last = amplitude;
                }
            }
        }
    }

    pub fn aux_rhs(&self, _t: f64, x: &[f64], z: &[f64], out: &mut [f64]) {
        if let Self::FeedforwardExample = self {
            out[0] = -signed_pow(z[0], 4.0) + x[2];
        }
    }

    /// Structural envelope of `|δ_i|` as a function of `x` alone, for
    /// scenarios without auxiliary dynamics.
    pub fn envelope(&self, i: usize, x: &[f64]) -> Option<f64> {
        match *self {
            Self::None => Some(0.0),
            Self::FeedbackExample { c0, c_inf, q, p } => {
                Some(if i == 1 { c0.abs() * abs_pow(x[1], q) + c_inf.abs() * abs_pow(x[1], p) } else { 0.0 })
            }
            Self::FeedforwardExample => None,
            Self::PowerSum { form, c0, c_inf, d0, d_inf } => {
                let n = x.len();
                Some(
                    power_sum_range(form, i, n)
                        .map(|j| {
                            c0.abs() * abs_pow(x[j], power_sum_exponent(d0, n, i, j))
                                + c_inf.abs() * abs_pow(x[j], power_sum_exponent(d_inf, n, i, j))
                        })
                        .sum(),
                )
            }
            Self::Constant { amplitude } => Some(if i + 1 == x.len() { amplitude.abs() } else { 0.0 }),
        }
    }
}

const FEEDFORWARD_TOLERANCE: f64 = 0.05;

fn power_sum_range(form: Form, i: usize, n: usize) -> std::ops::Range<usize> {
    match form {
        Form::Feedback => 0..i + 1,
        Form::Feedforward => (i + 2).min(n)..n,
    }
}

/// `(1 − d(n−i−1))/(1 − d(n−j))` for 1-based `i`, `j`; arguments are 0-based.
fn power_sum_exponent(d: f64, n: usize, i: usize, j: usize) -> f64 {
    let (n, i, j) = (n as f64, i as f64 + 1.0, j as f64 + 1.0);
    (1.0 - d * (n - i - 1.0)) / (1.0 - d * (n - j))
}

/// Declared test set for a gain sweep: raw initial conditions `(x(0), 𝔛̂(0))`
/// and the integrator settings in rescaled time `τ = Lt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Battery {
    pub initial_states: Vec<Vec<f64>>,
    pub integrator: IntegratorConfig,
}

impl Battery {
    /// `count` plant states with `|x|_{r0}` log-uniform in `[lo, hi]` and a
    /// zero observer state. The step is scaled with the loop degrees.
    pub fn sample(w: &ChainWeights, d: &DegreePair, count: usize, lo: f64, hi: f64, seed: u64, integrator: IntegratorConfig) -> Self {
        let n = w.n;
        let initial_states = random_points_in_shell(&w.r0, lo, hi, count, seed)
            .into_iter()
            .map(|mut x| {
                x.resize(2 * n, 0.0);
                x
            })
            .collect();
        let integrator = IntegratorConfig {
            scaling: integrator.scaling.or(Some(StepScaling::new(d.d0, d.d_inf))),
            record_every: 0,
            ..integrator
        };
        Self { initial_states, integrator }
    }
}

/// Result of one run of a battery, in raw time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryRun {
    pub passed: bool,
    pub converged_at: Option<f64>,
    pub final_norm: f64,
    pub blowup: bool,
}

/// Outcome of the battery at one gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub gain: f64,
    pub passed: bool,
    pub failures: usize,
    /// Largest convergence time in raw time among converged runs.
    pub worst_time: Option<f64>,
    pub worst_final_norm: f64,
}

impl OutputFeedbackDesign {
    /// Simulates the rescaled loop from a raw initial `(x, 𝔛̂)`; auxiliary
    /// states start at zero and are not part of the measured norm.
    pub fn simulate(&self, scenario: &DisturbanceScenario, initial: &[f64], cfg: &IntegratorConfig) -> Result<(Trace, RunSummary)> {
        let n = self.n();
        if initial.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: initial.len(),
            });
        }
        if n > MAX_DIM {
            return Err(Error::Parameter(format!("chain length {n} exceeds {MAX_DIM}")));
        }
        scenario.validate(n)?;
        let mut y = self.to_rescaled(&initial[..n], &initial[n..]);
        y.resize(2 * n + scenario.aux_dim(), 0.0);
        let r = self.weights().r0.concat(&self.weights().r0);
        let f = |tau: f64, s: &[f64], out: &mut [f64]| self.rescaled_rhs(scenario, tau, s, out);
        integrate(&f, &y, &r, cfg)
    }

    /// Largest `|δ_i| − envelope_i` over the raw states behind a rescaled
    /// trace; `None` when the scenario has no state-only envelope.
    pub fn audit_disturbance(&self, scenario: &DisturbanceScenario, trace: &Trace) -> Option<f64> {
        let n = self.n();
        let mut x = vec![0.0; n];
        scenario.envelope(0, &x)?;
        let mut delta = vec![0.0; n];
        let mut worst = f64::NEG_INFINITY;
        for s in &trace.states {
            self.raw_state(&s[..2 * n], &mut x);
            scenario.disturbance(0.0, &x, &s[2 * n..], &mut delta);
            for (i, d) in delta.iter().enumerate() {
                worst = worst.max(d.abs() - scenario.envelope(i, &x)?);
            }
        }
        Some(worst)
    }

    /// Runs every initial condition of the battery in parallel.
    pub fn run_battery(&self, scenario: &DisturbanceScenario, battery: &Battery) -> Result<(Rung, Vec<BatteryRun>)> {
        let tol = scenario.final_tolerance();
        let runs = battery
            .initial_states
            .par_iter()
            .map(|x0| {
                let (_, s) = self.simulate(scenario, x0, &battery.integrator)?;
                let blowup = s.blowup.is_some();
                let converged_at = s.converged_at.map(|tau| tau / self.gain);
                let passed = !blowup && (converged_at.is_some() || tol.is_some_and(|t| s.final_norm < t));
                Ok(BatteryRun {
                    passed,
                    converged_at,
                    final_norm: s.final_norm,
                    blowup,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let failures = runs.iter().filter(|r| !r.passed).count();
        let rung = Rung {
            gain: self.gain,
            passed: failures == 0,
            failures,
            worst_time: runs.iter().filter_map(|r| r.converged_at).reduce(f64::max),
            worst_final_norm: runs.iter().map(|r| r.final_norm).fold(0.0, f64::max),
        };
        Ok((rung, runs))
    }
}

/// Geometric gain grid and optional frontier refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Rungs `2^{±k}` for `k = 0..=doublings`.
    pub doublings: u32,
    /// Bisect (geometrically) between the last failing and the first passing rung.
    pub refine: bool,
    pub bisection_steps: u32,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            doublings: 20,
            refine: false,
            bisection_steps: 6,
        }
    }
}

/// A selected gain with the full frontier of tested rungs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub design: OutputFeedbackDesign,
    pub frontier: Vec<Rung>,
    /// Rungs evaluated by the optional refinement, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinement: Vec<Rung>,
    pub battery: Battery,
}

impl Selection {
    /// Every rung on the far side of the selected one also passed.
    pub fn frontier_is_monotone(&self) -> bool {
        let first = self.frontier.iter().position(|r| r.passed);
        first.is_some_and(|k| self.frontier[k..].iter().all(|r| r.passed))
    }
}

/// Sweeps `L = 1, 2, 4, …` and selects the smallest passing rung.
pub fn select_gain_feedback(
    observer: &ObserverDesign,
    controller: &ControllerDesign,
    scenario: &DisturbanceScenario,
    battery: &Battery,
    sweep: &SweepSpec,
) -> Result<Selection> {
    select_gain(observer, controller, scenario, battery, sweep, Form::Feedback)
}

/// Sweeps `L = 1, 1/2, 1/4, …` and selects the largest passing rung.
pub fn select_gain_feedforward(
    observer: &ObserverDesign,
    controller: &ControllerDesign,
    scenario: &DisturbanceScenario,
    battery: &Battery,
    sweep: &SweepSpec,
) -> Result<Selection> {
    select_gain(observer, controller, scenario, battery, sweep, Form::Feedforward)
}

fn select_gain(
    observer: &ObserverDesign,
    controller: &ControllerDesign,
    scenario: &DisturbanceScenario,
    battery: &Battery,
    sweep: &SweepSpec,
    form: Form,
) -> Result<Selection> {
    if let Some(f) = scenario.form() {
        if f != form {
            return Err(Error::Precondition(format!("{f:?}-form scenario swept in the {form:?} direction")));
        }
    }
    let base = assemble(observer.clone(), controller.clone(), 1.0, form)?;
    scenario.validate(base.n())?;
    let sign = if form == Form::Feedback { 1 } else { -1 };
    let frontier = (0..=sweep.doublings as i32)
        .map(|k| base.with_gain(2f64.powi(sign * k))?.run_battery(scenario, battery).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = frontier.iter().position(|r| r.passed) else {
        let report = frontier
            .iter()
            .map(|r| format!("L={:e}:{}", r.gain, if r.passed { "pass" } else { "fail" }))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::Selection {
            form: format!("{form:?}").to_lowercase(),
            tested: frontier.len(),
            frontier: report,
        });
    };
    let mut gain = frontier[first].gain;
    let mut refinement = Vec::new();
    if sweep.refine && first > 0 {
        let (mut fail, mut pass) = (frontier[first - 1].gain, gain);
        for _ in 0..sweep.bisection_steps {
            let mid = (fail * pass).sqrt();
            let rung = base.with_gain(mid)?.run_battery(scenario, battery)?.0;
            if rung.passed {
                pass = mid;
            } else {
                fail = mid;
            }
            refinement.push(rung);
        }
        gain = pass;
    }
    Ok(Selection {
        design: base.with_gain(gain)?,
        frontier,
        refinement,
        battery: battery.clone(),
    })
}

/// Uniform settling-time bound `(1/c)(dV∞/d∞ + dV0/|d0|)` for
/// `V̇ ≤ −c(V^{(dV0+d0)/dV0} + V^{(dV∞+d∞)/dV∞})`.
pub fn finite_time_bound(c: f64, dv0: f64, dv_inf: f64, d: &DegreePair) -> Result<f64> {
    if !(d.d0 < 0.0 && 0.0 < d.d_inf) {
        return Err(Error::Precondition(format!(
            "finite-time bound needs d0 < 0 < d_inf, got ({}, {})",
            d.d0, d.d_inf
        )));
    }
    if !(c > 0.0 && dv0 > 0.0 && dv_inf > 0.0) {
        return Err(Error::Parameter("c and the Lyapunov degrees must be positive".into()));
    }
    Ok((dv_inf / d.d_inf + dv0 / d.d0.abs()) / c)
}

/// Largest sampled `c` with `V̇ ≤ −c(V^{(dV0+d0)/dV0} + V^{(dV∞+d∞)/dV∞})`,
/// for `V` with degrees `(dV0, dV∞)` and `V̇` with degrees `(dV0+d0, dV∞+d∞)`.
pub fn decay_rate(v: &HomFunction, vdot: &HomFunction, spec: &SearchSpec) -> Result<f64> {
    let sv = v.signature().clone();
    let sd = vdot.signature();
    let (a0, ai) = (sd.d0 / sv.d0, sd.d_inf / sv.d_inf);
    let pow_sum = |f: ScalarFn, g: Option<ScalarFn>| -> ScalarFn {
        Arc::new(move |x: &[f64]| {
            let val = f(x).max(0.0);
            val.powf(a0) + g.as_ref().map_or(val.powf(ai), |g| g(x).max(0.0).powf(ai))
        })
    };
    let vf = v.eval_fn().clone();
    let v0 = v.approx(Side::Zero).cloned().ok_or_else(|| Error::Precondition("V lacks a 0-approximation".into()))?;
    let vi = v.approx(Side::Infinity).cloned().ok_or_else(|| Error::Precondition("V lacks an ∞-approximation".into()))?;
    let phi = HomFunction::new(
        sd.clone(),
        pow_sum(vf, None),
        Some(Arc::new(move |x: &[f64]| v0(x).max(0.0).powf(a0)) as ScalarFn),
        Some(Arc::new(move |x: &[f64]| vi(x).max(0.0).powf(ai)) as ScalarFn),
    );
    let neg = |f: &ScalarFn| -> ScalarFn {
        let f = f.clone();
        Arc::new(move |x: &[f64]| -f(x))
    };
    let zeta = HomFunction::new(
        sd.clone(),
        neg(vdot.eval_fn()),
        vdot.approx(Side::Zero).map(neg),
        vdot.approx(Side::Infinity).map(neg),
    );
    Ok(1.0 / domination_bound(&phi, &zeta, spec)?)
}
