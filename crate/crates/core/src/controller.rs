//! Backstepping state feedback `u = φ_n(𝔛)` for the chain of integrators
//! `χ̇_i = χ_{i+1}, χ̇_n = u`.
//!
//! Level `i` defines `ψ_i = −k_i F_i(χ_i^{α_{i−1}} − ψ_{i−1})` with `ψ_0 = 0`,
//! `α_0 = 1`, and `φ_i = ψ_i^{1/α_i}`, where `F_i` is a primitive of the
//! interpolation function (or a sum of two powers in simplified mode). Each
//! gain `k_i`, `i ≥ 2`, is tuned by the domination lemma applied to the
//! derivative of the level Lyapunov function
//! `V_i = V_{i−1} + ∫_{φ_{i−1}}^{χ_i} Σ_t (h^t − φ_{i−1}^t) dh`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::blend::BlendPrimitive;
use crate::error::{Error, Result};
use crate::hom::{abs_pow, signed_pow, BiLimitSignature, HomFunction, HomVectorField, ScalarFn, Variant};
use crate::lemma::{find_domination_constant, DominationProblem, DominationResult, SearchSpec, WeightGrid};
use crate::observer::{check_ratio_condition, unit_weight, weights_from_degrees, ChainWeights, DegreePair, LyapunovDegrees, Mode, Terms};
use crate::verify::{sampled_decrease, DecreaseConfig, DecreaseReport};

const SNAP: f64 = 1e-9;
const DEGREE_MARGIN: f64 = 0.1;

/// Exponents `α_1, …, α_n ≥ 1` of the backstepping recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlphaSchedule(pub Vec<f64>);

impl AlphaSchedule {
    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    /// `α_j` for 0-based level `j`, with `α_{−1} = 1`.
    fn prev(&self, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.0[j - 1]
        }
    }
}

/// Smallest admissible schedule
/// `α_i = max{α_{i−1} r0,i/r0,i+1, α_{i−1} r∞,i/r∞,i+1, 1}` with `r_{n+1} = 1 + d`.
///
/// With `d0, d∞ ≥ 0` every entry is 1; with `d0 ≤ d∞` and `d0 < 0` it is
/// `r0,1/r0,i+1`; with `d∞ ≤ d0` and `d∞ < 0` it is `r∞,1/r∞,i+1`.
pub fn alpha_schedule(n: usize, d: &DegreePair, w: &ChainWeights) -> AlphaSchedule {
    let mut out = Vec::with_capacity(n);
    let mut prev = 1.0;
    for j in 0..n {
        let a0 = prev * w.r0.entries()[j] / w.r0_ext(d, j + 1);
        let ai = prev * w.r_inf.entries()[j] / w.r_inf_ext(d, j + 1);
        let mut a = a0.max(ai).max(1.0);
        if (a - 1.0).abs() < SNAP {
            a = 1.0;
        }
        out.push(a);
        prev = a;
    }
    AlphaSchedule(out)
}

/// Smallest controller Lyapunov degrees with `dV0 > max r0`,
/// `dV0 > (1 + α_i) r0,i+1`, `dV∞ > max r∞` and `dV∞/r∞,i > dV0/r0,i`, plus margin.
pub fn controller_lyapunov_degrees(w: &ChainWeights, d: &DegreePair, a: &AlphaSchedule) -> LyapunovDegrees {
    let mut d0 = w.r0.max() + DEGREE_MARGIN;
    for j in 1..w.n {
        d0 = d0.max((1.0 + a.prev(j)) * w.r0.entries()[j] + DEGREE_MARGIN);
    }
    if d.is_degenerate() {
        return LyapunovDegrees { d0, d_inf: d0 };
    }
    let mut d_inf = w.r_inf.max() + DEGREE_MARGIN;
    for (r0, ri) in w.r0.entries().iter().zip(w.r_inf.entries()) {
        d_inf = d_inf.max(d0 * ri / r0 + DEGREE_MARGIN);
    }
    LyapunovDegrees { d0, d_inf }
}

/// Checks the controller conditions on user-provided Lyapunov degrees.
pub fn check_controller_lyapunov_degrees(
    w: &ChainWeights,
    d: &DegreePair,
    a: &AlphaSchedule,
    l: &LyapunovDegrees,
) -> Result<()> {
    if !(l.d0 > w.r0.max() && l.d_inf > w.r_inf.max()) {
        return Err(Error::Parameter(format!(
            "controller Lyapunov degrees ({}, {}) must exceed the largest weights",
            l.d0, l.d_inf
        )));
    }
    for j in 1..w.n {
        let need = 1.0 + a.prev(j);
        if !(l.d0 / w.r0.entries()[j] >= need && l.d_inf / w.r_inf.entries()[j] >= need) {
            return Err(Error::Parameter(format!(
                "Lyapunov degrees ({}, {}) violate dV/r >= 1 + alpha at coordinate {}",
                l.d0,
                l.d_inf,
                j + 1
            )));
        }
    }
    check_ratio_condition(w, d, l)
}

/// One backstepping level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerLevel {
    pub index: usize,
    pub k: f64,
    pub alpha: f64,
    /// Exponents `(A, B)` of `F_i` at 0 and at infinity.
    pub exponents: (f64, f64),
    /// Multiplier `μ` on `V_i` inside `V_{i+1}`.
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<DominationResult>,
}

/// A synthesized state feedback.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ControllerRecord")]
pub struct ControllerDesign {
    pub n: usize,
    pub degrees: DegreePair,
    pub weights: ChainWeights,
    pub mode: Mode,
    pub alpha: AlphaSchedule,
    pub lyapunov: LyapunovDegrees,
    pub levels: Vec<ControllerLevel>,
    #[serde(skip)]
    prims: Vec<BlendPrimitive>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerRecord {
    n: usize,
    degrees: DegreePair,
    weights: ChainWeights,
    mode: Mode,
    alpha: AlphaSchedule,
    lyapunov: LyapunovDegrees,
    levels: Vec<ControllerLevel>,
}

impl TryFrom<ControllerRecord> for ControllerDesign {
    type Error = Error;
    fn try_from(r: ControllerRecord) -> Result<Self> {
        if r.levels.len() != r.n || r.alpha.0.len() != r.n {
            return Err(Error::DimensionMismatch {
                expected: r.n,
                got: r.levels.len(),
            });
        }
        let expected = weights_from_degrees(r.n, &r.degrees)?;
        if expected != r.weights {
            return Err(Error::SignatureMismatch("weights do not match the degrees".into()));
        }
        let prims = primitives(&r.weights, &r.degrees, &r.alpha, r.mode);
        for (lvl, p) in r.levels.iter().zip(&prims) {
            let (a, b) = p.exponents();
            if (a - lvl.exponents.0).abs() > 1e-9 || (b - lvl.exponents.1).abs() > 1e-9 {
                return Err(Error::Parameter(format!("level {} exponents disagree with the schedule", lvl.index)));
            }
        }
        Ok(Self {
            n: r.n,
            degrees: r.degrees,
            weights: r.weights,
            mode: r.mode,
            alpha: r.alpha,
            lyapunov: r.lyapunov,
            levels: r.levels,
            prims,
        })
    }
}

impl PartialEq for ControllerDesign {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n
            && self.degrees == o.degrees
            && self.weights == o.weights
            && self.mode == o.mode
            && self.alpha == o.alpha
            && self.lyapunov == o.lyapunov
            && self.levels == o.levels
    }
}

fn primitives(w: &ChainWeights, d: &DegreePair, a: &AlphaSchedule, mode: Mode) -> Vec<BlendPrimitive> {
    (0..w.n)
        .map(|j| {
            let ratio = a.0[j] / a.prev(j);
            let ea = ratio * w.r0_ext(d, j + 1) / w.r0.entries()[j];
            let eb = ratio * w.r_inf_ext(d, j + 1) / w.r_inf.entries()[j];
            BlendPrimitive::new(ea, eb, mode)
        })
        .collect()
}

/// Values along the recursion, with gradients of `ψ_j` when requested.
struct Chain {
    psi: Vec<f64>,
    phi: Vec<f64>,
    grad: Vec<Vec<f64>>,
}

impl ControllerDesign {
    pub fn gains(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.k).collect()
    }

    fn sig(&self, dims: usize, d0: f64, d_inf: f64) -> BiLimitSignature {
        BiLimitSignature {
            r0: self.weights.r0.slice(0..dims),
            d0,
            r_inf: self.weights.r_inf.slice(0..dims),
            d_inf,
        }
    }

    fn chain(&self, v: Variant, x: &[f64], levels: usize, with_grad: bool) -> Chain {
        let mut psi = Vec::with_capacity(levels);
        let mut phi = Vec::with_capacity(levels);
        let mut grad: Vec<Vec<f64>> = Vec::with_capacity(if with_grad { levels } else { 0 });
        for j in 0..levels {
            let a_prev = self.alpha.prev(j);
            let psi_prev = if j == 0 { 0.0 } else { psi[j - 1] };
            let delta = signed_pow(x[j], a_prev) - psi_prev;
            let k = self.levels[j].k;
            let p = -k * self.prims[j].eval(v, delta);
            psi.push(p);
            phi.push(signed_pow(p, 1.0 / self.alpha.0[j]));
            if with_grad {
                let slope = k * self.prims[j].deriv(v, delta);
                let mut g: Vec<f64> = if j == 0 {
                    Vec::with_capacity(1)
                } else {
                    grad[j - 1].iter().map(|gp| slope * gp).collect()
                };
                g.push(-slope * a_prev * abs_pow(x[j], a_prev - 1.0));
                grad.push(g);
            }
        }
        Chain { psi, phi, grad }
    }

    /// `ψ_{j+1}` (0-based `j`) at `x = (χ_1, …, χ_{j+1})` or any longer vector.
    pub fn psi(&self, v: Variant, j: usize, x: &[f64]) -> f64 {
        self.chain(v, x, j + 1, false).psi[j]
    }

    /// Gradient of `ψ_{j+1}` with respect to `χ_1, …, χ_{j+1}`.
    pub fn psi_grad(&self, v: Variant, j: usize, x: &[f64]) -> Vec<f64> {
        self.chain(v, x, j + 1, true).grad.pop().expect("at least one level")
    }

    /// `φ_{j+1}` (0-based `j`).
    pub fn phi(&self, v: Variant, j: usize, x: &[f64]) -> f64 {
        self.chain(v, x, j + 1, false).phi[j]
    }

    /// The feedback `u = φ_n(𝔛)`.
    pub fn control(&self, v: Variant, x: &[f64]) -> f64 {
        self.phi(v, self.n - 1, x)
    }

    /// `φ_{j+1}` as a function of `(χ_1, …, χ_{j+1})` with degrees `r_{j+2}`.
    pub fn phi_function(&self, j: usize) -> HomFunction {
        let d = self.degrees;
        let sig = self.sig(j + 1, self.weights.r0_ext(&d, j + 1), self.weights.r_inf_ext(&d, j + 1));
        let f = |v: Variant| {
            let me = self.clone();
            Arc::new(move |x: &[f64]| me.phi(v, j, x)) as ScalarFn
        };
        HomFunction::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
    }

    /// `φ_n` with degrees `1 + d0`, `1 + d∞`.
    pub fn feedback_function(&self) -> HomFunction {
        self.phi_function(self.n - 1)
    }

    /// `ψ_{j+1}` as a function object with degrees `α_{j+1} r_{j+2}`.
    pub fn psi_function(&self, j: usize) -> HomFunction {
        let d = self.degrees;
        let a = self.alpha.0[j];
        let sig = self.sig(j + 1, a * self.weights.r0_ext(&d, j + 1), a * self.weights.r_inf_ext(&d, j + 1));
        let f = |v: Variant| {
            let me = self.clone();
            Arc::new(move |x: &[f64]| me.psi(v, j, x)) as ScalarFn
        };
        HomFunction::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
    }

    /// Writes `S 𝔛 + B φ_n(𝔛)` into `out`.
    pub fn closed_loop_rhs(&self, v: Variant, x: &[f64], out: &mut [f64]) {
        for j in 0..self.n - 1 {
            out[j] = x[j + 1];
        }
        out[self.n - 1] = self.control(v, x);
    }

    /// The closed loop as a vector field with both approximations.
    pub fn closed_loop_field(&self) -> HomVectorField {
        let sig = self.sig(self.n, self.degrees.d0, self.degrees.d_inf);
        let f = |v: Variant| {
            let me = self.clone();
            Arc::new(move |x: &[f64]| {
                let mut out = vec![0.0; me.n];
                me.closed_loop_rhs(v, x, &mut out);
                out
            }) as crate::hom::VectorFn
        };
        HomVectorField::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
            .expect("chain degrees give admissible component degrees")
    }

    fn terms(&self, j: usize, v: Variant) -> Terms {
        let (r0, ri) = (self.weights.r0.entries()[j], self.weights.r_inf.entries()[j]);
        Terms::new(
            (self.lyapunov.d0 - r0) / r0,
            (self.lyapunov.d_inf - ri) / ri,
            self.degrees.is_degenerate(),
            v,
        )
    }

    /// Value and gradient of `V_m` at `x = (χ_1, …, χ_m)`.
    pub fn lyapunov_value_grad(&self, v: Variant, x: &[f64]) -> (f64, Vec<f64>) {
        let m = x.len();
        assert!(m >= 1 && m <= self.n, "lyapunov: dimension {m} outside 1..={}", self.n);
        let ch = self.chain(v, x, m - 1, true);
        let mut grad = vec![0.0; m];
        let first = self.terms(0, v);
        let mut value = first.antiderivative(x[0]);
        grad[0] = first.pow_sum(x[0]);
        for j in 1..m {
            let terms = self.terms(j, v);
            let phi = ch.phi[j - 1];
            let psi = ch.psi[j - 1];
            let alpha = self.alpha.0[j - 1];
            let mu = self.levels[j].weight;
            value = mu * value + terms.gap_integral(x[j], phi);
            grad[..j].iter_mut().for_each(|g| *g *= mu);
            grad[j] += terms.pow_sum(x[j]) - terms.pow_sum(phi);
            // d(φ^t) = (t/α)|ψ|^{t/α − 1} dψ
            let dpow: f64 = terms.iter().map(|t| t / alpha * abs_pow(psi, t / alpha - 1.0)).sum();
            let coef = -(x[j] - phi) * dpow;
            for (g, dpsi) in grad.iter_mut().zip(&ch.grad[j - 1]) {
                *g += coef * dpsi;
            }
        }
        (value, grad)
    }

    pub fn lyapunov_value(&self, v: Variant, x: &[f64]) -> f64 {
        self.lyapunov_value_grad(v, x).0
    }

    /// `V_n` as a function object.
    pub fn lyapunov_function(&self) -> HomFunction {
        let sig = self.sig(self.n, self.lyapunov.d0, self.lyapunov.d_inf);
        let f = |v: Variant| {
            let me = self.clone();
            Arc::new(move |x: &[f64]| me.lyapunov_value(v, x)) as ScalarFn
        };
        HomFunction::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
    }

    /// Derivative of `V_n` along the closed loop.
    pub fn lyapunov_derivative(&self, v: Variant, x: &[f64]) -> f64 {
        let (_, g) = self.lyapunov_value_grad(v, x);
        let mut f = vec![0.0; self.n];
        self.closed_loop_rhs(v, x, &mut f);
        g.iter().zip(&f).map(|(a, b)| a * b).sum()
    }

    /// `V̇_n` along the closed loop as a function object.
    pub fn lyapunov_derivative_function(&self) -> HomFunction {
        let sig = self.sig(
            self.n,
            self.lyapunov.d0 + self.degrees.d0,
            self.lyapunov.d_inf + self.degrees.d_inf,
        );
        let f = |v: Variant| {
            let me = self.clone();
            Arc::new(move |x: &[f64]| me.lyapunov_derivative(v, x)) as ScalarFn
        };
        HomFunction::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
    }

    /// Sampled decrease of `V_n` along the closed loop and both approximations.
    pub fn verify_decrease(&self, cfg: &DecreaseConfig) -> Vec<DecreaseReport> {
        let sig = self.sig(
            self.n,
            self.lyapunov.d0 + self.degrees.d0,
            self.lyapunov.d_inf + self.degrees.d_inf,
        );
        sampled_decrease(&sig, &|v, x| self.lyapunov_derivative(v, x), cfg)
    }

    /// The pair `(T₁, T₂)` tuning level `j` (0-based, `1 ≤ j < n`) on
    /// `(χ_1, …, χ_{j+1})`, with `V̇_{j+1} = T₁ − κ T₂` and `k_{j+1} = κ^{α_{j+1}}`.
    pub fn level_split(&self, j: usize) -> (HomFunction, HomFunction) {
        assert!(j >= 1 && j < self.n, "level_split: level {j} outside 1..{}", self.n);
        let sig = self.sig(j + 1, self.lyapunov.d0 + self.degrees.d0, self.lyapunov.d_inf + self.degrees.d_inf);
        let t1 = |v: Variant| {
            let me = self.clone();
            Arc::new(move |y: &[f64]| me.split_t1(j, v, y)) as ScalarFn
        };
        let t2 = |v: Variant| {
            let me = self.clone();
            Arc::new(move |y: &[f64]| me.split_t2(j, v, y)) as ScalarFn
        };
        (
            HomFunction::new(sig.clone(), t1(Variant::Full), Some(t1(Variant::Zero)), Some(t1(Variant::Infinity))),
            HomFunction::new(sig, t2(Variant::Full), Some(t2(Variant::Zero)), Some(t2(Variant::Infinity))),
        )
    }

    fn split_t1(&self, j: usize, v: Variant, y: &[f64]) -> f64 {
        let (_, g) = self.lyapunov_value_grad(v, &y[..=j]);
        (0..j).map(|m| g[m] * y[m + 1]).sum()
    }

    fn split_t2(&self, j: usize, v: Variant, y: &[f64]) -> f64 {
        let ch = self.chain(v, y, j, false);
        let terms = self.terms(j, v);
        let phi = ch.phi[j - 1];
        let delta = signed_pow(y[j], self.alpha.prev(j)) - ch.psi[j - 1];
        let f = self.prims[j].eval(v, delta);
        (terms.pow_sum(y[j]) - terms.pow_sum(phi)) * signed_pow(f, 1.0 / self.alpha.0[j])
    }
}

/// Synthesis settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerOptions {
    /// `None` picks simplified when `d0 < d∞` and the integral form otherwise.
    pub mode: Option<Mode>,
    pub first_gain: f64,
    pub search: SearchSpec,
    pub level_weights: WeightGrid,
    pub lyapunov: Option<LyapunovDegrees>,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        Self {
            mode: None,
            first_gain: 1.0,
            search: SearchSpec::default(),
            level_weights: WeightGrid::default(),
            lyapunov: None,
        }
    }
}

/// Default mode for the given degrees. With equal degrees both forms are a
/// single power and the integral form keeps unit coefficients.
pub fn default_mode(d: &DegreePair) -> Mode {
    if d.d0 < d.d_inf && !d.is_degenerate() {
        Mode::Simplified
    } else {
        Mode::Paper
    }
}

/// Synthesizes the backstepping feedback, tuning `k_2, …, k_n` in order.
pub fn build_controller(n: usize, d: DegreePair, opts: &ControllerOptions) -> Result<ControllerDesign> {
    let weights = weights_from_degrees(n, &d)?;
    let mode = opts.mode.unwrap_or_else(|| default_mode(&d));
    if mode == Mode::Simplified && d.d0 > d.d_inf {
        return Err(Error::Mode(format!(
            "simplified feedback needs d0 <= d_inf, got ({}, {})",
            d.d0, d.d_inf
        )));
    }
    if !(opts.first_gain > 0.0) {
        return Err(Error::Parameter("first gain must be positive".into()));
    }
    let alpha = alpha_schedule(n, &d, &weights);
    let lyapunov = match opts.lyapunov {
        Some(l) => {
            check_controller_lyapunov_degrees(&weights, &d, &alpha, &l)?;
            l
        }
        None => controller_lyapunov_degrees(&weights, &d, &alpha),
    };
    let prims = primitives(&weights, &d, &alpha, mode);
    let levels = (0..n)
        .map(|j| ControllerLevel {
            index: j + 1,
            k: if j == 0 { opts.first_gain } else { 1.0 },
            alpha: alpha.0[j],
            exponents: prims[j].exponents(),
            weight: 1.0,
            tuning: None,
        })
        .collect();
    let mut design = ControllerDesign {
        n,
        degrees: d,
        weights,
        mode,
        alpha,
        lyapunov,
        levels,
        prims,
    };
    for j in 1..n {
        let (mu, res) = opts
            .level_weights
            .minimize(|mu| {
                design.levels[j].weight = mu;
                let (t1, t2) = design.level_split(j);
                DominationProblem::new(t1, t2).and_then(|p| find_domination_constant(&p, &opts.search))
            })
            .map_err(|e| Error::Synthesis {
                stage: "controller",
                level: j + 1,
                source: Box::new(e),
            })?;
        design.levels[j].weight = mu;
        design.levels[j].k = res.c.powf(design.alpha.0[j]);
        design.levels[j].tuning = Some(res);
    }
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hom::{check_homogeneity_limit, CheckConfig, Side};
    use crate::sampling::homogeneous_sphere;
    use nalgebra::Matrix2;

    fn dp(n: usize, a: f64, b: f64) -> DegreePair {
        DegreePair::new(n, a, b).unwrap()
    }

    fn quick_search() -> SearchSpec {
        SearchSpec::default()
    }

    #[test]
    fn alpha_schedule_cases() {
        let d = dp(3, 0.0, 0.0);
        let w = weights_from_degrees(3, &d).unwrap();
        assert_eq!(alpha_schedule(3, &d, &w).0, vec![1.0; 3]);

        let d = dp(3, 0.2, 0.4);
        let w = weights_from_degrees(3, &d).unwrap();
        assert_eq!(alpha_schedule(3, &d, &w).0, vec![1.0; 3]);

        let d = dp(3, -0.5, 0.2);
        let w = weights_from_degrees(3, &d).unwrap();
        let a = alpha_schedule(3, &d, &w);
        let r0 = w.r0.entries();
        for i in 0..3 {
            let want = r0[0] / w.r0_ext(&d, i + 1);
            assert!((a.0[i] - want).abs() < 1e-12, "i={i} {} vs {want}", a.0[i]);
        }

        let d = dp(3, 0.3, -0.4);
        let w = weights_from_degrees(3, &d).unwrap();
        let a = alpha_schedule(3, &d, &w);
        let ri = w.r_inf.entries();
        for i in 0..3 {
            let want = ri[0] / w.r_inf_ext(&d, i + 1);
            assert!((a.0[i] - want).abs() < 1e-12);
        }

        let d = dp(2, -0.5, 0.0);
        let w = weights_from_degrees(2, &d).unwrap();
        assert_eq!(w.r0.entries(), &[1.5, 1.0]);
        assert!((alpha_schedule(2, &d, &w).0[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn linear_first_level() {
        let opts = ControllerOptions {
            first_gain: 2.5,
            ..Default::default()
        };
        let c = build_controller(1, dp(1, 0.0, 0.0), &opts).unwrap();
        for x in [-3.0, -0.1, 0.0, 0.7, 4.0] {
            assert!((c.phi(Variant::Full, 0, &[x]) + 2.5 * x).abs() < 1e-12);
        }
        assert_eq!(c.phi(Variant::Full, 0, &[0.0]), 0.0);
    }

    #[test]
    fn linear_second_level_and_hurwitz() {
        let c = build_controller(2, dp(2, 0.0, 0.0), &ControllerOptions::default()).unwrap();
        let (k1, k2) = (c.levels[0].k, c.levels[1].k);
        assert!(k1 > 0.0 && k2 > 0.0);
        for x in [[1.0, -2.0], [0.3, 0.4], [-5.0, 1.0]] {
            let want = -k2 * (x[1] + k1 * x[0]);
            assert!((c.psi(Variant::Full, 1, &x) - want).abs() < 1e-10 * want.abs().max(1.0));
        }
        // closed loop matrix [[0,1],[−k₁k₂,−k₂]]
        let a = Matrix2::new(0.0, 1.0, -k1 * k2, -k2);
        for ev in a.complex_eigenvalues().iter() {
            assert!(ev.re < 0.0, "eigenvalue {ev}");
        }
    }

    #[test]
    fn linear_lyapunov_expansion() {
        let opts = ControllerOptions {
            lyapunov: Some(LyapunovDegrees { d0: 2.0, d_inf: 2.0 }),
            ..Default::default()
        };
        let mut c = build_controller(2, dp(2, 0.0, 0.0), &opts).unwrap();
        c.levels[1].k = 3.0;
        let k1 = c.levels[0].k;
        for x in [[1.0, -2.0], [0.3, 0.4], [-5.0, 1.0]] {
            let phi1 = -k1 * x[0];
            let want = x[0] * x[0] + (x[1] - phi1) * (x[1] - phi1);
            assert!((c.lyapunov_value(Variant::Full, &x) - want).abs() < 1e-12 * want.max(1.0));
        }
    }

    fn designs() -> Vec<ControllerDesign> {
        let s = quick_search();
        let with = |n, a, b, mode| {
            build_controller(
                n,
                dp(n, a, b),
                &ControllerOptions {
                    mode,
                    search: s.clone(),
                    ..Default::default()
                },
            )
            .unwrap()
        };
        vec![
            with(2, 0.0, 0.5, None),
            with(2, 0.0, 0.5, Some(Mode::Paper)),
            with(2, 0.3, -0.2, None),
            with(3, -0.2, 0.3, None),
        ]
    }

    #[test]
    fn sign_gradient_and_seam_properties() {
        use rand::{Rng, SeedableRng};
        for c in designs() {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
            let n = c.n;
            for _ in 0..2000 {
                let x: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * 10f64.powf(rng.gen::<f64>() * 4.0 - 2.0)).collect();
                for j in 0..n {
                    let psi = c.psi(Variant::Full, j, &x);
                    let prev = if j == 0 { 0.0 } else { c.phi(Variant::Full, j - 1, &x) };
                    let gap = x[j] - prev;
                    assert!(psi * gap <= 0.0, "sign violated at {x:?} level {j}");
                    if gap.abs() > 1e-9 * x[j].abs().max(1e-9) {
                        assert!(psi != 0.0);
                    }
                }
            }
            // gradient continuity across the manifold χ_{j+1} = φ_j (Δ = 0)
            let j = n - 1;
            let mut x: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
            x[j] = c.phi(Variant::Full, j - 1, &x);
            let side = |s: f64| {
                let mut y = x.clone();
                y[j] += s * 1e-8;
                c.psi_grad(Variant::Full, j, &y)
            };
            let (above, below) = (side(1.0), side(-1.0));
            let scale = above.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
            for (a, b) in above.iter().zip(&below) {
                assert!((a - b).abs() < 1e-4 * scale, "gradient jump {a} vs {b}");
            }
            // analytic gradient of V_n against finite differences
            let x: Vec<f64> = (0..n).map(|i| 0.4 - 0.25 * i as f64).collect();
            let (_, g) = c.lyapunov_value_grad(Variant::Full, &x);
            for m in 0..n {
                let h = 1e-6 * x[m].abs().max(1e-2);
                let mut p = x.clone();
                p[m] += h;
                let mut q = x.clone();
                q[m] -= h;
                let fd = (c.lyapunov_value(Variant::Full, &p) - c.lyapunov_value(Variant::Full, &q)) / (2.0 * h);
                assert!((fd - g[m]).abs() < 1e-5 * g[m].abs().max(1.0), "m={m} fd={fd} g={}", g[m]);
            }
        }
    }

    #[test]
    fn feedback_is_homogeneous_and_decreasing() {
        // degree gaps of 0.5 make the deviation decay like λ^0.5, so the
        // ladder is extended to reach the default tolerance
        let cfg = CheckConfig {
            decades: 12,
            ..CheckConfig::default()
        };
        for c in designs() {
            let phi = c.feedback_function();
            let sig = phi.signature();
            assert!((sig.d0 - (1.0 + c.degrees.d0)).abs() < 1e-12);
            assert!((sig.d_inf - (1.0 + c.degrees.d_inf)).abs() < 1e-12);
            for side in [Side::Zero, Side::Infinity] {
                // deviations relative to the size of the approximation on the sphere
                let r = sig.weights(side);
                let approx = phi.approx(side).unwrap();
                let size = homogeneous_sphere(r, 64 * c.n, cfg.seed, true)
                    .iter()
                    .map(|x| approx(x).abs())
                    .fold(0.0, f64::max);
                let f = |x: &[f64]| phi.eval(x) / size;
                let a = |x: &[f64]| approx(x) / size;
                let rep = check_homogeneity_limit(&f, r, sig.degree(side), &a, side, &cfg).unwrap();
                assert!(rep.passed(), "{:?} {side}: {:?}", c.degrees, rep.deviations);
            }
            let dec = c.verify_decrease(&DecreaseConfig {
                points_per_dim: 32,
                rungs: 7,
                ..Default::default()
            });
            for r in dec {
                assert!(r.passed, "{:?} {:?}", c.degrees, r);
            }
        }
    }

    #[test]
    fn split_identity_holds() {
        let c = &designs()[3];
        let (t1, t2) = c.level_split(2);
        let kappa = c.levels[2].k.powf(1.0 / c.alpha.0[2]);
        for x in [[0.2, -0.4, 0.9], [1.5, 0.3, -2.0]] {
            let lhs = c.lyapunov_derivative(Variant::Full, &x);
            let rhs = t1.eval(&x) - kappa * t2.eval(&x);
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn simplified_mode_requires_ordered_degrees() {
        let opts = ControllerOptions {
            mode: Some(Mode::Simplified),
            ..Default::default()
        };
        assert!(matches!(build_controller(2, dp(2, 0.3, 0.0), &opts), Err(Error::Mode(_))));
    }

    #[test]
    fn design_serializes_round_trip() {
        let c = &designs()[1];
        let json = serde_json::to_string(c).unwrap();
        let back: ControllerDesign = serde_json::from_str(&json).unwrap();
        assert_eq!(&back, c);
        let x = [0.7, -1.3];
        assert_eq!(back.control(Variant::Full, &x), c.control(Variant::Full, &x));
    }
}
