//! Recursive output-injection design for the chain of integrators
//! `ẋ_i = x_{i+1}, ẋ_n = u, y = x_1`.
//!
//! The injection is `K_n(e) = −q_n(ℓ_n e)` and
//! `K_i(e) = (−q_i(ℓ_i e), K_{i+1}(q_i(ℓ_i e)))`, where each `q_i` is an odd,
//! increasing saturation-like function that is homogeneous in the bi-limit.
//! Each `ℓ_i` is tuned by the domination lemma applied to the split
//! `T₁ − ℓ T₂` of the derivative of the level Lyapunov function.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hom::{abs_pow, signed_pow, BiLimitSignature, HomFunction, HomVectorField, Variant, WeightVector};
use crate::lemma::{find_domination_constant, DominationProblem, DominationResult, SearchSpec, WeightGrid};

/// Vector field degrees `(d0, d_inf)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreePair {
    pub d0: f64,
    pub d_inf: f64,
}

/// Upper end of the admissible degree interval `(−1, 1/(n−1))`.
pub fn degree_upper_bound(n: usize) -> f64 {
    if n <= 1 {
        f64::INFINITY
    } else {
        1.0 / (n - 1) as f64
    }
}

impl DegreePair {
    pub fn new(n: usize, d0: f64, d_inf: f64) -> Result<Self> {
        let d = Self { d0, d_inf };
        d.validate(n)?;
        Ok(d)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let upper = degree_upper_bound(n);
        for (name, value) in [("d0", self.d0), ("d_inf", self.d_inf)] {
            if !(value > -1.0 && value < upper) {
                return Err(Error::DegreeRange { name, value, upper, n });
            }
        }
        Ok(())
    }

    /// Both degrees coincide, so every bi-limit object is standard homogeneous.
    pub fn is_degenerate(&self) -> bool {
        (self.d0 - self.d_inf).abs() < 1e-12
    }
}

/// Chain weights `r_{0,i} = 1 − d0 (n − i)`, `r_{∞,i} = 1 − d_inf (n − i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainWeights {
    pub n: usize,
    pub r0: WeightVector,
    pub r_inf: WeightVector,
}

impl ChainWeights {
    /// Weight of coordinate `j` (0-based), extended by `j = n ↦ 1 + d`.
    pub fn r0_ext(&self, d: &DegreePair, j: usize) -> f64 {
        1.0 - d.d0 * (self.n as f64 - 1.0 - j as f64)
    }

    pub fn r_inf_ext(&self, d: &DegreePair, j: usize) -> f64 {
        1.0 - d.d_inf * (self.n as f64 - 1.0 - j as f64)
    }
}

pub fn weights_from_degrees(n: usize, d: &DegreePair) -> Result<ChainWeights> {
    if n == 0 {
        return Err(Error::Parameter("chain dimension must be at least 1".into()));
    }
    d.validate(n)?;
    let w = |deg: f64| WeightVector::new((0..n).map(|j| 1.0 - deg * (n - 1 - j) as f64).collect());
    Ok(ChainWeights {
        n,
        r0: w(d.d0)?,
        r_inf: w(d.d_inf)?,
    })
}

/// Saturation family selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Two-branch functions glued at `|s| = 1` (observer) or integrals of the
    /// interpolation function (controller).
    Paper,
    /// Sums of two signed powers.
    Simplified,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Mode::Paper),
            "simplified" => Ok(Mode::Simplified),
            other => Err(Error::Mode(format!("unknown mode '{other}', expected paper or simplified"))),
        }
    }
}

/// The function `q_i` with exponents `e0 = (r0+d0)/r0` near 0 and
/// `e∞ = (r∞+d∞)/r∞` at infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationFn {
    pub index: usize,
    pub r0: f64,
    pub d0: f64,
    pub r_inf: f64,
    pub d_inf: f64,
    pub mode: Mode,
}

impl SaturationFn {
    pub fn new(index: usize, r0: f64, d0: f64, r_inf: f64, d_inf: f64, mode: Mode) -> Result<Self> {
        if !(r0 + d0 > 0.0 && r_inf + d_inf > 0.0 && r0 > 0.0 && r_inf > 0.0) {
            return Err(Error::Parameter(format!(
                "q_{index}: need r0 + d0 > 0 and r_inf + d_inf > 0, got ({r0}, {d0}, {r_inf}, {d_inf})"
            )));
        }
        if mode == Mode::Simplified && !(0.0 <= d0 && d0 <= d_inf) {
            return Err(Error::Mode(format!(
                "simplified saturation needs 0 <= d0 <= d_inf, got d0 = {d0}, d_inf = {d_inf}"
            )));
        }
        Ok(Self {
            index,
            r0,
            d0,
            r_inf,
            d_inf,
            mode,
        })
    }

    pub fn exponents(&self) -> (f64, f64) {
        ((self.r0 + self.d0) / self.r0, (self.r_inf + self.d_inf) / self.r_inf)
    }

    fn coefficients(&self) -> (f64, f64) {
        let (e0, ei) = self.exponents();
        (1.0 / e0, 1.0 / ei)
    }

    pub fn is_degenerate(&self) -> bool {
        let (e0, ei) = self.exponents();
        (e0 - ei).abs() < 1e-12
    }

    /// Coefficient of the single power used by an approximation in simplified mode.
    fn simplified_weight(&self) -> f64 {
        if self.is_degenerate() {
            2.0
        } else {
            1.0
        }
    }

    pub fn eval(&self, v: Variant, s: f64) -> f64 {
        let (e0, ei) = self.exponents();
        match self.mode {
            Mode::Paper => {
                let (c0, ci) = self.coefficients();
                match v {
                    Variant::Zero => c0 * signed_pow(s, e0),
                    Variant::Infinity => ci * signed_pow(s, ei),
                    Variant::Full => {
                        if s.abs() <= 1.0 {
                            c0 * signed_pow(s, e0)
                        } else {
                            s.signum() * (ci * s.abs().powf(ei) + c0 - ci)
                        }
                    }
                }
            }
            Mode::Simplified => match v {
                Variant::Zero => self.simplified_weight() * signed_pow(s, e0),
                Variant::Infinity => self.simplified_weight() * signed_pow(s, ei),
                Variant::Full => signed_pow(s, e0) + signed_pow(s, ei),
            },
        }
    }

    /// Derivative, finite away from 0.
    pub fn deriv(&self, v: Variant, s: f64) -> f64 {
        let (e0, ei) = self.exponents();
        let a = s.abs();
        match self.mode {
            Mode::Paper => match v {
                Variant::Zero => a.powf(e0 - 1.0),
                Variant::Infinity => a.powf(ei - 1.0),
                Variant::Full => {
                    if a <= 1.0 {
                        a.powf(e0 - 1.0)
                    } else {
                        a.powf(ei - 1.0)
                    }
                }
            },
            Mode::Simplified => match v {
                Variant::Zero => self.simplified_weight() * e0 * a.powf(e0 - 1.0),
                Variant::Infinity => self.simplified_weight() * ei * a.powf(ei - 1.0),
                Variant::Full => e0 * a.powf(e0 - 1.0) + ei * a.powf(ei - 1.0),
            },
        }
    }

    pub fn inverse(&self, v: Variant, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let (e0, ei) = self.exponents();
        let a = y.abs();
        let mag = match self.mode {
            Mode::Paper => {
                let (c0, ci) = self.coefficients();
                match v {
                    Variant::Zero => (a / c0).powf(1.0 / e0),
                    Variant::Infinity => (a / ci).powf(1.0 / ei),
                    Variant::Full => {
                        if a <= c0 {
                            (a / c0).powf(1.0 / e0)
                        } else {
                            ((a - c0 + ci) / ci).powf(1.0 / ei)
                        }
                    }
                }
            }
            Mode::Simplified => match v {
                Variant::Zero => (a / self.simplified_weight()).powf(1.0 / e0),
                Variant::Infinity => (a / self.simplified_weight()).powf(1.0 / ei),
                Variant::Full => {
                    if self.is_degenerate() {
                        (a / 2.0).powf(1.0 / e0)
                    } else {
                        solve_power_sum(a, e0, ei)
                    }
                }
            },
        };
        y.signum() * mag
    }
}

/// Solves `s^p + s^q = y` for `s >= 0` with `p, q >= 1` by Newton's method from
/// the upper bracket, which converges monotonically for this convex equation.
fn solve_power_sum(y: f64, p: f64, q: f64) -> f64 {
    let mut s = y.powf(1.0 / p).min(y.powf(1.0 / q));
    for _ in 0..200 {
        let g = s.powf(p) + s.powf(q) - y;
        let dg = p * s.powf(p - 1.0) + q * s.powf(q - 1.0);
        if !(dg > 0.0) {
            break;
        }
        let next = (s - g / dg).max(0.0);
        if (next - s).abs() <= 1e-16 * s.max(1e-300) {
            s = next;
            break;
        }
        s = next;
    }
    s
}

pub fn make_saturation(i: usize, w: &ChainWeights, d: &DegreePair, mode: Mode) -> Result<SaturationFn> {
    if i == 0 || i > w.n {
        return Err(Error::Parameter(format!("level {i} outside 1..={}", w.n)));
    }
    SaturationFn::new(i, w.r0.entries()[i - 1], d.d0, w.r_inf.entries()[i - 1], d.d_inf, mode)
}

/// Terminal injection `K_n(e) = −q_n(ℓ_n e)` on the last coordinate (weight 1).
pub fn terminal_injection(ell_n: f64, d: &DegreePair) -> Result<HomFunction> {
    if !(ell_n > 0.0) {
        return Err(Error::Parameter(format!("terminal gain must be positive, got {ell_n}")));
    }
    let q = SaturationFn::new(1, 1.0, d.d0, 1.0, d.d_inf, Mode::Paper)?;
    let sig = BiLimitSignature::new(WeightVector::standard(1), 1.0 + d.d0, WeightVector::standard(1), 1.0 + d.d_inf)?;
    let f = |v: Variant| {
        let q = q.clone();
        Arc::new(move |x: &[f64]| -q.eval(v, ell_n * x[0])) as crate::hom::ScalarFn
    };
    Ok(HomFunction::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity))))
}

/// Degrees of the Lyapunov functions used for tuning and verification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovDegrees {
    pub d0: f64,
    pub d_inf: f64,
}

const DEGREE_MARGIN: f64 = 0.1;

/// Smallest observer Lyapunov degrees satisfying
/// `dW0 > 2 max r0 + d0`, `dW∞ > 2 max r∞ + d∞` and `dW∞/r∞,i > dW0/r0,i`, plus margin.
pub fn observer_lyapunov_degrees(w: &ChainWeights, d: &DegreePair) -> LyapunovDegrees {
    let d0 = 2.0 * w.r0.max() + d.d0 + DEGREE_MARGIN;
    if d.is_degenerate() {
        return LyapunovDegrees { d0, d_inf: d0 };
    }
    let mut d_inf = 2.0 * w.r_inf.max() + d.d_inf + DEGREE_MARGIN;
    for (a, b) in w.r0.entries().iter().zip(w.r_inf.entries()) {
        d_inf = d_inf.max(d0 * b / a + DEGREE_MARGIN);
    }
    LyapunovDegrees { d0, d_inf }
}

/// Checks the observer conditions on user-provided Lyapunov degrees.
pub fn check_observer_lyapunov_degrees(w: &ChainWeights, d: &DegreePair, l: &LyapunovDegrees) -> Result<()> {
    if !(l.d0 >= 2.0 * w.r0.max() + d.d0 && l.d_inf >= 2.0 * w.r_inf.max() + d.d_inf) {
        return Err(Error::Parameter(format!(
            "observer Lyapunov degrees ({}, {}) must be at least 2 max r + d at both ends",
            l.d0, l.d_inf
        )));
    }
    check_ratio_condition(w, d, l)
}

pub(crate) fn check_ratio_condition(w: &ChainWeights, d: &DegreePair, l: &LyapunovDegrees) -> Result<()> {
    if d.is_degenerate() {
        if (l.d0 - l.d_inf).abs() > 1e-12 {
            return Err(Error::Parameter("equal vector field degrees need equal Lyapunov degrees".into()));
        }
        return Ok(());
    }
    for (a, b) in w.r0.entries().iter().zip(w.r_inf.entries()) {
        if l.d_inf / b <= l.d0 / a {
            return Err(Error::Parameter(format!(
                "Lyapunov degrees ({}, {}) violate d_inf/r_inf > d0/r0 for weights ({a}, {b})",
                l.d0, l.d_inf
            )));
        }
    }
    Ok(())
}

/// Power exponents `t` used by a level of a Lyapunov function.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Terms {
    pub(crate) t: [f64; 2],
    pub(crate) len: usize,
}

impl Terms {
    pub(crate) fn new(a: f64, b: f64, degenerate: bool, v: Variant) -> Self {
        match (v, degenerate) {
            (Variant::Full, _) | (_, true) => Terms { t: [a, b], len: 2 },
            (Variant::Zero, false) => Terms { t: [a, 0.0], len: 1 },
            (Variant::Infinity, false) => Terms { t: [b, 0.0], len: 1 },
        }
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.t[..self.len].iter().copied()
    }

    /// `Σ_t s^t` (signed powers).
    pub(crate) fn pow_sum(&self, s: f64) -> f64 {
        self.iter().map(|t| signed_pow(s, t)).sum()
    }

    /// `Σ_t |s|^{t+1}/(t+1)`.
    pub(crate) fn antiderivative(&self, s: f64) -> f64 {
        self.iter().map(|t| abs_pow(s, t + 1.0) / (t + 1.0)).sum()
    }

    /// `Σ_t t |s|^{t−1}`, the derivative of `pow_sum`.
    pub(crate) fn pow_sum_deriv(&self, s: f64) -> f64 {
        self.iter().map(|t| t * abs_pow(s, t - 1.0)).sum()
    }

    /// `∫_φ^χ Σ_t (h^t − φ^t) dh`.
    pub(crate) fn gap_integral(&self, chi: f64, phi: f64) -> f64 {
        self.antiderivative(chi) - self.antiderivative(phi) - self.pow_sum(phi) * (chi - phi)
    }
}

/// One level of the injection recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverLevel {
    pub index: usize,
    pub ell: f64,
    pub q: SaturationFn,
    /// Multiplier `μ` on `W_{k+1}` inside `W_k`.
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<DominationResult>,
}

pub(crate) fn unit_weight() -> f64 {
    1.0
}

/// A synthesized observer for the n-integrator chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverDesign {
    pub n: usize,
    pub degrees: DegreePair,
    pub weights: ChainWeights,
    pub mode: Mode,
    pub lyapunov: LyapunovDegrees,
    pub levels: Vec<ObserverLevel>,
}

/// Synthesis settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverOptions {
    pub mode: Mode,
    pub terminal_gain: f64,
    pub search: SearchSpec,
    pub level_weights: WeightGrid,
    pub lyapunov: Option<LyapunovDegrees>,
}

impl Default for ObserverOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Paper,
            terminal_gain: 1.0,
            search: SearchSpec::default(),
            level_weights: WeightGrid::default(),
            lyapunov: None,
        }
    }
}

impl ObserverDesign {
    pub fn gains(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.ell).collect()
    }

    fn terms(&self, k: usize, v: Variant) -> Terms {
        let (r0, ri) = (self.weights.r0.entries()[k], self.weights.r_inf.entries()[k]);
        Terms::new(
            (self.lyapunov.d0 - r0) / r0,
            (self.lyapunov.d_inf - ri) / ri,
            self.degrees.is_degenerate(),
            v,
        )
    }

    /// `K_{from+1}(e)` (0-based `from`), a vector of length `n − from`.
    pub fn injection_from(&self, v: Variant, from: usize, e: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n - from);
        let mut arg = e;
        for lvl in &self.levels[from..] {
            let val = lvl.q.eval(v, lvl.ell * arg);
            out.push(-val);
            arg = val;
        }
        out
    }

    /// The output injection `K_1(e_1)`.
    pub fn injection(&self, v: Variant, e1: f64) -> Vec<f64> {
        self.injection_from(v, 0, e1)
    }

    /// Writes `S E + K_1(e_1)` into `out`.
    pub fn error_rhs(&self, v: Variant, e: &[f64], out: &mut [f64]) {
        let mut arg = e[0];
        for (k, lvl) in self.levels.iter().enumerate() {
            let val = lvl.q.eval(v, lvl.ell * arg);
            let shift = if k + 1 < self.n { e[k + 1] } else { 0.0 };
            out[k] = shift - val;
            arg = val;
        }
    }

    /// The autonomous error field `Ė = S E + K_1(e_1)`.
    pub fn error_field(&self) -> HomVectorField {
        let sig = BiLimitSignature {
            r0: self.weights.r0.clone(),
            d0: self.degrees.d0,
            r_inf: self.weights.r_inf.clone(),
            d_inf: self.degrees.d_inf,
        };
        let f = |v: Variant| {
            let me = self.clone();
            Arc::new(move |e: &[f64]| {
                let mut out = vec![0.0; me.n];
                me.error_rhs(v, e, &mut out);
                out
            }) as crate::hom::VectorFn
        };
        HomVectorField::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
            .expect("chain degrees give admissible component degrees")
    }

    /// Component `j` (0-based) of `K_1` as a scalar function of `e_1`, with
    /// weight `r_{0,1}` and degrees `r_{0,j} + d0`, `r_{∞,j} + d∞`.
    pub fn injection_component(&self, j: usize) -> HomFunction {
        let w = &self.weights;
        let sig = BiLimitSignature {
            r0: WeightVector::new(vec![w.r0.entries()[0]]).unwrap(),
            d0: w.r0.entries()[j] + self.degrees.d0,
            r_inf: WeightVector::new(vec![w.r_inf.entries()[0]]).unwrap(),
            d_inf: w.r_inf.entries()[j] + self.degrees.d_inf,
        };
        let f = |v: Variant| {
            let me = self.clone();
            Arc::new(move |x: &[f64]| me.injection(v, x[0])[j]) as crate::hom::ScalarFn
        };
        HomFunction::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
    }

    /// Value and gradient of the level Lyapunov function `W_{from+1}` on
    /// `E = (e_{from+1}, …, e_n)`.
    pub fn lyapunov_value_grad(&self, v: Variant, from: usize, e: &[f64]) -> (f64, Vec<f64>) {
        let m = self.n - from;
        assert_eq!(e.len(), m, "lyapunov: dimension mismatch");
        let mut grad = vec![0.0; m];
        let last = self.terms(self.n - 1, v);
        let mut value = last.antiderivative(e[m - 1]);
        grad[m - 1] = last.pow_sum(e[m - 1]);
        for j in (0..m - 1).rev() {
            let k = from + j;
            let lvl = &self.levels[k];
            let terms = self.terms(k, v);
            let s = lvl.ell * e[j];
            let q_inv = lvl.q.inverse(v, e[j + 1]);
            value = lvl.weight * value + terms.gap_integral(s, q_inv);
            grad[j + 1..].iter_mut().for_each(|g| *g *= lvl.weight);
            grad[j] = lvl.ell * (terms.pow_sum(s) - terms.pow_sum(q_inv));
            grad[j + 1] += cross_term(&terms, &lvl.q, v, s, q_inv);
        }
        (value, grad)
    }

    pub fn lyapunov_value(&self, v: Variant, e: &[f64]) -> f64 {
        self.lyapunov_value_grad(v, 0, e).0
    }

    /// Derivative of `W_1` along the error field.
    pub fn lyapunov_derivative(&self, v: Variant, e: &[f64]) -> f64 {
        let (_, g) = self.lyapunov_value_grad(v, 0, e);
        let mut f = vec![0.0; self.n];
        self.error_rhs(v, e, &mut f);
        g.iter().zip(&f).map(|(a, b)| a * b).sum()
    }

    /// `W_1` as a function object with its approximations.
    pub fn lyapunov_function(&self) -> HomFunction {
        let sig = BiLimitSignature {
            r0: self.weights.r0.clone(),
            d0: self.lyapunov.d0,
            r_inf: self.weights.r_inf.clone(),
            d_inf: self.lyapunov.d_inf,
        };
        let f = |v: Variant| {
            let me = self.clone();
            Arc::new(move |e: &[f64]| me.lyapunov_value(v, e)) as crate::hom::ScalarFn
        };
        HomFunction::new(sig, f(Variant::Full), Some(f(Variant::Zero)), Some(f(Variant::Infinity)))
    }

    /// The pair `(T₁, T₂)` of level `k` (0-based, `k < n − 1`) on `(ϑ, e_{k+2}, …, e_n)`.
    pub fn level_split(&self, k: usize) -> (HomFunction, HomFunction) {
        let w = &self.weights;
        let sig = BiLimitSignature {
            r0: w.r0.slice(k..self.n),
            d0: self.lyapunov.d0 + self.degrees.d0,
            r_inf: w.r_inf.slice(k..self.n),
            d_inf: self.lyapunov.d_inf + self.degrees.d_inf,
        };
        let t1 = |v: Variant| {
            let me = self.clone();
            Arc::new(move |y: &[f64]| me.split_t1(k, v, y)) as crate::hom::ScalarFn
        };
        let t2 = |v: Variant| {
            let me = self.clone();
            Arc::new(move |y: &[f64]| me.split_t2(k, v, y)) as crate::hom::ScalarFn
        };
        (
            HomFunction::new(sig.clone(), t1(Variant::Full), Some(t1(Variant::Zero)), Some(t1(Variant::Infinity))),
            HomFunction::new(sig, t2(Variant::Full), Some(t2(Variant::Zero)), Some(t2(Variant::Infinity))),
        )
    }

    fn split_t2(&self, k: usize, v: Variant, y: &[f64]) -> f64 {
        let q = &self.levels[k].q;
        let terms = self.terms(k, v);
        let q_inv = q.inverse(v, y[1]);
        (terms.pow_sum(y[0]) - terms.pow_sum(q_inv)) * (q.eval(v, y[0]) - y[1])
    }

    fn split_t1(&self, k: usize, v: Variant, y: &[f64]) -> f64 {
        let q = &self.levels[k].q;
        let terms = self.terms(k, v);
        let rest = &y[1..];
        let (_, mut grad) = self.lyapunov_value_grad(v, k + 1, rest);
        grad.iter_mut().for_each(|g| *g *= self.levels[k].weight);
        let q_inv = q.inverse(v, rest[0]);
        grad[0] += cross_term(&terms, q, v, y[0], q_inv);
        let inj = self.injection_from(v, k + 1, q.eval(v, y[0]));
        let m = rest.len();
        (0..m)
            .map(|j| {
                let shift = if j + 1 < m { rest[j + 1] } else { 0.0 };
                grad[j] * (shift + inj[j])
            })
            .sum()
    }
}

/// `∂/∂y ∫_{q⁻¹(y)}^{s} Σ_t (h^t − q⁻¹(y)^t) dh = −Σ_t t|Q|^{t−1}(s − Q) / q'(Q)`.
fn cross_term(terms: &Terms, q: &SaturationFn, v: Variant, s: f64, q_inv: f64) -> f64 {
    if q_inv == 0.0 {
        return 0.0;
    }
    let val = -terms.pow_sum_deriv(q_inv) * (s - q_inv) / q.deriv(v, q_inv);
    if val.is_finite() {
        val
    } else {
        0.0
    }
}

/// Synthesizes the observer level by level, from `K_n` down to `K_1`.
pub fn build_observer(n: usize, d: DegreePair, opts: &ObserverOptions) -> Result<ObserverDesign> {
    let weights = weights_from_degrees(n, &d)?;
    let lyapunov = match opts.lyapunov {
        Some(l) => {
            check_observer_lyapunov_degrees(&weights, &d, &l)?;
            l
        }
        None => observer_lyapunov_degrees(&weights, &d),
    };
    if !(opts.terminal_gain > 0.0) {
        return Err(Error::Parameter("terminal gain must be positive".into()));
    }
    let levels = (1..=n)
        .map(|i| {
            Ok(ObserverLevel {
                index: i,
                ell: if i == n { opts.terminal_gain } else { 1.0 },
                q: make_saturation(i, &weights, &d, opts.mode)?,
                weight: 1.0,
                tuning: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut design = ObserverDesign {
        n,
        degrees: d,
        weights,
        mode: opts.mode,
        lyapunov,
        levels,
    };
    for k in (0..n.saturating_sub(1)).rev() {
        let (mu, res) = opts
            .level_weights
            .minimize(|mu| {
                design.levels[k].weight = mu;
                let (t1, t2) = design.level_split(k);
                DominationProblem::new(t1, t2).and_then(|p| find_domination_constant(&p, &opts.search))
            })
            .map_err(|e| Error::Synthesis {
                stage: "observer",
                level: k + 1,
                source: Box::new(e),
            })?;
        design.levels[k].weight = mu;
        design.levels[k].ell = res.c;
        design.levels[k].tuning = Some(res);
    }
    Ok(design)
}
