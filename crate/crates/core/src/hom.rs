//! Homogeneous algebra: signed powers, weighted dilations, homogeneous norms,
//! polar coordinates, the interpolation function `h(a, b) = a(1+b)/(1+a)`,
//! function objects that carry bi-limit signatures, and a numerical checker
//! of homogeneity in the 0-limit and in the ∞-limit.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::homogeneous_sphere;

/// Scalar function object on `R^n`.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Vector-valued function object on `R^n`.
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Signed power `sign(w)|w|^r`, with `signed_pow(0, r) = 0` for every `r`.
#[inline]
pub fn signed_pow(w: f64, r: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else if r == 1.0 {
        w
    } else {
        w.signum() * w.abs().powf(r)
    }
}

/// `|w|^r` with the convention `0^r = 0` for `r > 0` and `0^0 = 1`.
#[inline]
pub fn abs_pow(w: f64, r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else if w == 0.0 {
        0.0
    } else {
        w.abs().powf(r)
    }
}

/// Checked form of the interpolation function `h(a, b) = a(1+b)/(1+a)`.
pub fn interp_h(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::Domain(format!(
            "interpolation function needs nonnegative arguments, got ({a}, {b})"
        )));
    }
    Ok(h_blend(a, b))
}

/// Unchecked interpolation function for hot loops; callers guarantee `a, b >= 0`.
#[inline]
pub fn h_blend(a: f64, b: f64) -> f64 {
    if a.is_infinite() {
        return b;
    }
    a * (1.0 + b) / (1.0 + a)
}

/// Strictly positive weights, one per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some(bad) = entries.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidWeights(format!("entry {bad} is not a positive finite number")));
        }
        Ok(Self(entries))
    }

    /// All weights equal to one.
    pub fn standard(n: usize) -> Self {
        Self(vec![1.0; n.max(1)])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// Concatenation `(self, other)`.
    pub fn concat(&self, other: &WeightVector) -> WeightVector {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        WeightVector(v)
    }

    /// Sub-vector of the entries `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> WeightVector {
        WeightVector(self.0[range].to_vec())
    }

    /// `λ^r ⋄ x`. Panics on dimension mismatch; see [`dilate`] for the checked form.
    #[inline]
    pub fn dilate(&self, lambda: f64, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.0.len(), "dilate: dimension mismatch");
        if lambda == 1.0 {
            return x.to_vec();
        }
        self.0.iter().zip(x).map(|(r, v)| lambda.powf(*r) * v).collect()
    }

    /// `|x|_r = Σ |x_i|^{1/r_i}`. Panics on dimension mismatch.
    #[inline]
    pub fn norm(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.0.len(), "hom_norm: dimension mismatch");
        self.0.iter().zip(x).map(|(r, v)| abs_pow(*v, 1.0 / r)).sum()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Vec<f64> {
        w.0
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Checked dilation `λ^r ⋄ x`.
pub fn dilate(lambda: f64, r: &WeightVector, x: &[f64]) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("dilation factor must be positive, got {lambda}")));
    }
    check_dim(r.len(), x.len())?;
    Ok(r.dilate(lambda, x))
}

/// Checked homogeneous norm.
pub fn hom_norm(x: &[f64], r: &WeightVector) -> Result<f64> {
    check_dim(r.len(), x.len())?;
    Ok(r.norm(x))
}

/// Polar coordinates `x = λ^r ⋄ θ` with `|θ|_r = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarDecomposition {
    pub lambda: f64,
    pub theta: Vec<f64>,
}

pub fn polar_decompose(x: &[f64], r: &WeightVector) -> Result<PolarDecomposition> {
    let lambda = hom_norm(x, r)?;
    if lambda == 0.0 {
        return Err(Error::Domain("polar decomposition undefined at origin".into()));
    }
    Ok(PolarDecomposition {
        lambda,
        theta: r.dilate(1.0 / lambda, x),
    })
}

/// Weights and degrees of a function homogeneous in the bi-limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLimitSignature {
    pub r0: WeightVector,
    pub d0: f64,
    pub r_inf: WeightVector,
    pub d_inf: f64,
}

impl BiLimitSignature {
    pub fn new(r0: WeightVector, d0: f64, r_inf: WeightVector, d_inf: f64) -> Result<Self> {
        check_dim(r0.len(), r_inf.len())?;
        Ok(Self { r0, d0, r_inf, d_inf })
    }

    /// Signature of a standard homogeneous function (same weight and degree at both ends).
    pub fn standard(r: WeightVector, d: f64) -> Self {
        Self {
            r0: r.clone(),
            d0: d,
            r_inf: r,
            d_inf: d,
        }
    }

    pub fn dim(&self) -> usize {
        self.r0.len()
    }

    pub fn weights(&self, side: Side) -> &WeightVector {
        match side {
            Side::Zero => &self.r0,
            Side::Infinity => &self.r_inf,
        }
    }

    pub fn degree(&self, side: Side) -> f64 {
        match side {
            Side::Zero => self.d0,
            Side::Infinity => self.d_inf,
        }
    }

    /// Vector-field admissibility: `d + r_i >= 0` at both ends.
    pub fn validate_vector_field(&self) -> Result<()> {
        for side in [Side::Zero, Side::Infinity] {
            let d = self.degree(side);
            if let Some(r) = self.weights(side).entries().iter().find(|r| d + **r < 0.0) {
                return Err(Error::Precondition(format!(
                    "vector field degree {d} with weight {r} gives a negative component degree"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn approx_eq(&self, other: &BiLimitSignature, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()));
        self.dim() == other.dim()
            && close(self.d0, other.d0)
            && close(self.d_inf, other.d_inf)
            && self.r0.entries().iter().zip(other.r0.entries()).all(|(a, b)| close(*a, *b))
            && self.r_inf.entries().iter().zip(other.r_inf.entries()).all(|(a, b)| close(*a, *b))
    }
}

/// Which end of the dilation ladder a limit refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Zero,
    Infinity,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Zero => write!(f, "zero"),
            Side::Infinity => write!(f, "infinity"),
        }
    }
}

/// Selects a function or one of its homogeneous approximations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Zero,
    Infinity,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::Zero, Variant::Infinity];
}

impl From<Side> for Variant {
    fn from(s: Side) -> Self {
        match s {
            Side::Zero => Variant::Zero,
            Side::Infinity => Variant::Infinity,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => write!(f, "full"),
            Variant::Zero => write!(f, "0-approximation"),
            Variant::Infinity => write!(f, "∞-approximation"),
        }
    }
}

/// Scalar function with a bi-limit signature and optional homogeneous approximations.
#[derive(Clone)]
pub struct HomFunction {
    eval: ScalarFn,
    sig: BiLimitSignature,
    approx0: Option<ScalarFn>,
    approx_inf: Option<ScalarFn>,
}

impl fmt::Debug for HomFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomFunction")
            .field("sig", &self.sig)
            .field("approx0", &self.approx0.is_some())
            .field("approx_inf", &self.approx_inf.is_some())
            .finish()
    }
}

impl HomFunction {
    pub fn new(
        sig: BiLimitSignature,
        eval: ScalarFn,
        approx0: Option<ScalarFn>,
        approx_inf: Option<ScalarFn>,
    ) -> Self {
        Self {
            eval,
            sig,
            approx0,
            approx_inf,
        }
    }

    /// A standard homogeneous function, which is its own approximation at both ends.
    pub fn standard(r: WeightVector, d: f64, f: ScalarFn) -> Self {
        Self {
            eval: f.clone(),
            sig: BiLimitSignature::standard(r, d),
            approx0: Some(f.clone()),
            approx_inf: Some(f),
        }
    }

    pub fn signature(&self) -> &BiLimitSignature {
        &self.sig
    }

    pub fn dim(&self) -> usize {
        self.sig.dim()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn approx(&self, side: Side) -> Option<&ScalarFn> {
        match side {
            Side::Zero => self.approx0.as_ref(),
            Side::Infinity => self.approx_inf.as_ref(),
        }
    }

    pub fn eval_fn(&self) -> &ScalarFn {
        &self.eval
    }

    /// Evaluates the full function (`None`) or one of its approximations.
    pub fn eval_variant(&self, variant: Option<Side>, x: &[f64]) -> Option<f64> {
        match variant {
            None => Some(self.eval(x)),
            Some(side) => self.approx(side).map(|f| f(x)),
        }
    }

    /// Product `φ·ζ` when `ζ`'s weights are a multiple `k·r` of `φ`'s at each end.
    /// The result carries `ζ`'s weights and degree `k d_φ + d_ζ`.
    pub fn product(&self, zeta: &HomFunction) -> Result<HomFunction> {
        check_dim(self.dim(), zeta.dim())?;
        let mut degs = [0.0; 2];
        for (k, side) in [Side::Zero, Side::Infinity].into_iter().enumerate() {
            let rp = self.sig.weights(side).entries();
            let rz = zeta.sig.weights(side).entries();
            let ratio = rz[0] / rp[0];
            if rp.iter().zip(rz).any(|(a, b)| (b / a - ratio).abs() > 1e-9 * ratio.abs().max(1.0)) {
                return Err(Error::Precondition(format!(
                    "product: weights at the {side} end are not proportional"
                )));
            }
            degs[k] = ratio * self.sig.degree(side) + zeta.sig.degree(side);
        }
        let sig = BiLimitSignature::new(zeta.sig.r0.clone(), degs[0], zeta.sig.r_inf.clone(), degs[1])?;
        let mul = |a: Option<&ScalarFn>, b: Option<&ScalarFn>| -> Option<ScalarFn> {
            match (a, b) {
                (Some(a), Some(b)) => {
                    let (a, b) = (a.clone(), b.clone());
                    Some(Arc::new(move |x: &[f64]| a(x) * b(x)))
                }
                _ => None,
            }
        };
        let (f, g) = (self.eval.clone(), zeta.eval.clone());
        Ok(HomFunction::new(
            sig,
            Arc::new(move |x: &[f64]| f(x) * g(x)),
            mul(self.approx0.as_ref(), zeta.approx0.as_ref()),
            mul(self.approx_inf.as_ref(), zeta.approx_inf.as_ref()),
        ))
    }

    /// Sum `φ+ζ` of functions sharing weights. At each end the term with the
    /// dominating degree (lower at 0, higher at ∞) provides the approximation;
    /// equal degrees add their approximations.
    pub fn sum(&self, zeta: &HomFunction) -> Result<HomFunction> {
        check_dim(self.dim(), zeta.dim())?;
        let mut parts: Vec<(f64, Option<ScalarFn>)> = Vec::new();
        for side in [Side::Zero, Side::Infinity] {
            let rp = self.sig.weights(side).entries();
            let rz = zeta.sig.weights(side).entries();
            if rp.iter().zip(rz).any(|(a, b)| (a - b).abs() > 1e-9 * a.max(1.0)) {
                return Err(Error::Precondition(format!(
                    "sum: weights at the {side} end differ, degree ratios are not comparable"
                )));
            }
            let (dp, dz) = (self.sig.degree(side), zeta.sig.degree(side));
            let (ap, az) = (self.approx(side).cloned(), zeta.approx(side).cloned());
            let pick_phi = match side {
                Side::Zero => dp < dz,
                Side::Infinity => dp > dz,
            };
            if (dp - dz).abs() <= 1e-9 * dp.abs().max(1.0) {
                let a = match (ap, az) {
                    (Some(a), Some(b)) => Some(Arc::new(move |x: &[f64]| a(x) + b(x)) as ScalarFn),
                    _ => None,
                };
                parts.push((dp, a));
            } else if pick_phi {
                parts.push((dp, ap));
            } else {
                parts.push((dz, az));
            }
        }
        let sig = BiLimitSignature::new(
            self.sig.r0.clone(),
            parts[0].0,
            self.sig.r_inf.clone(),
            parts[1].0,
        )?;
        let (f, g) = (self.eval.clone(), zeta.eval.clone());
        let a_inf = parts.pop().and_then(|p| p.1);
        let a0 = parts.pop().and_then(|p| p.1);
        Ok(HomFunction::new(sig, Arc::new(move |x: &[f64]| f(x) + g(x)), a0, a_inf))
    }

    /// Composition `ζ∘φ` with `ζ: R → R` homogeneous with weight `r_ζ`, degree `d_ζ`
    /// at each end and `φ` of positive degrees. The degree becomes `d_ζ d_φ / r_ζ`.
    pub fn compose_after(zeta: &HomFunction, phi: &HomFunction) -> Result<HomFunction> {
        check_dim(1, zeta.dim())?;
        let mut degs = [0.0; 2];
        for (k, side) in [Side::Zero, Side::Infinity].into_iter().enumerate() {
            let dphi = phi.sig.degree(side);
            if dphi <= 0.0 {
                return Err(Error::Precondition(format!(
                    "composition needs a positive inner degree at the {side} end"
                )));
            }
            degs[k] = zeta.sig.degree(side) * dphi / zeta.sig.weights(side).entries()[0];
        }
        let sig = BiLimitSignature::new(phi.sig.r0.clone(), degs[0], phi.sig.r_inf.clone(), degs[1])?;
        let comp = |z: Option<&ScalarFn>, p: Option<&ScalarFn>| -> Option<ScalarFn> {
            match (z, p) {
                (Some(z), Some(p)) => {
                    let (z, p) = (z.clone(), p.clone());
                    Some(Arc::new(move |x: &[f64]| z(&[p(x)])))
                }
                _ => None,
            }
        };
        let (z, p) = (zeta.eval.clone(), phi.eval.clone());
        Ok(HomFunction::new(
            sig,
            Arc::new(move |x: &[f64]| z(&[p(x)])),
            comp(zeta.approx0.as_ref(), phi.approx0.as_ref()),
            comp(zeta.approx_inf.as_ref(), phi.approx_inf.as_ref()),
        ))
    }
}

/// Vector field with a bi-limit signature; component `i` has degrees
/// `d0 + r0[i]` and `d_inf + r_inf[i]`.
#[derive(Clone)]
pub struct HomVectorField {
    eval: VectorFn,
    sig: BiLimitSignature,
    approx0: Option<VectorFn>,
    approx_inf: Option<VectorFn>,
}

impl fmt::Debug for HomVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomVectorField").field("sig", &self.sig).finish()
    }
}

impl HomVectorField {
    pub fn new(
        sig: BiLimitSignature,
        eval: VectorFn,
        approx0: Option<VectorFn>,
        approx_inf: Option<VectorFn>,
    ) -> Result<Self> {
        sig.validate_vector_field()?;
        Ok(Self {
            eval,
            sig,
            approx0,
            approx_inf,
        })
    }

    pub fn signature(&self) -> &BiLimitSignature {
        &self.sig
    }

    pub fn dim(&self) -> usize {
        self.sig.dim()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn eval_fn(&self) -> &VectorFn {
        &self.eval
    }

    pub fn approx(&self, side: Side) -> Option<&VectorFn> {
        match side {
            Side::Zero => self.approx0.as_ref(),
            Side::Infinity => self.approx_inf.as_ref(),
        }
    }

    /// The full field (`None`) or one of its approximations.
    pub fn variant(&self, variant: Option<Side>) -> Option<VectorFn> {
        match variant {
            None => Some(self.eval.clone()),
            Some(side) => self.approx(side).cloned(),
        }
    }
}

/// Blend `x ↦ h(φ₀(x), φ∞(x))` of two positive definite standard homogeneous
/// functions of positive degree. The result approximates `φ₀` near the origin
/// and `φ∞` at infinity.
pub fn blend_positive_definite(phi0: &HomFunction, phi_inf: &HomFunction) -> Result<HomFunction> {
    check_dim(phi0.dim(), phi_inf.dim())?;
    for (name, f, side) in [("phi0", phi0, Side::Zero), ("phi_inf", phi_inf, Side::Infinity)] {
        let d = f.sig.degree(side);
        if d <= 0.0 {
            return Err(Error::Construction(format!("{name} must have a positive degree, got {d}")));
        }
        let r = f.sig.weights(side);
        for x in homogeneous_sphere(r, 64 * r.len(), 0x5eed, true) {
            let v = f.eval(&x);
            if !(v > 0.0) {
                return Err(Error::Construction(format!(
                    "{name} is not positive definite: value {v} at {x:?}"
                )));
            }
        }
    }
    let sig = BiLimitSignature::new(
        phi0.sig.r0.clone(),
        phi0.sig.d0,
        phi_inf.sig.r_inf.clone(),
        phi_inf.sig.d_inf,
    )?;
    let (a, b) = (phi0.eval.clone(), phi_inf.eval.clone());
    Ok(HomFunction::new(
        sig,
        Arc::new(move |x: &[f64]| h_blend(a(x).max(0.0), b(x).max(0.0))),
        Some(phi0.eval.clone()),
        Some(phi_inf.eval.clone()),
    ))
}

/// Settings of the homogeneity checker.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    /// Sphere samples per coordinate.
    pub points_per_dim: usize,
    /// Number of decades on the λ ladder (rungs are `10^0 … 10^∓decades`).
    pub decades: usize,
    /// Deviation allowed at the extreme rung.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            points_per_dim: 64,
            decades: 6,
            tolerance: 1e-3,
            seed: 0x0b11_1317,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Outcome of [`check_homogeneity_limit`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub side: Side,
    pub degree: f64,
    pub lambdas: Vec<f64>,
    pub deviations: Vec<f64>,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offending_sample: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl HomogeneityReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn final_deviation(&self) -> f64 {
        self.deviations.last().copied().unwrap_or(f64::NAN)
    }
}

/// Estimates `sup_θ |f(λ^r⋄θ)/λ^d − approx(θ)|` on the unit sphere `S_r` along a
/// geometric λ ladder towards `side`. The verdict is PASS when the deviation at
/// the extreme rung is at most the tolerance and the last three rungs do not
/// increase.
pub fn check_homogeneity_limit(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    r: &WeightVector,
    d: f64,
    approx: &(dyn Fn(&[f64]) -> f64 + Sync),
    side: Side,
    cfg: &CheckConfig,
) -> Result<HomogeneityReport> {
    let n = r.len();
    let samples = homogeneous_sphere(r, cfg.points_per_dim * n, cfg.seed, true);
    let approx_vals: Vec<f64> = samples.iter().map(|x| approx(x)).collect();
    if approx_vals.iter().all(|v| *v == 0.0) {
        return Err(Error::Precondition(
            "approximation vanishes identically on the sample sphere".into(),
        ));
    }
    let lambdas: Vec<f64> = (0..=cfg.decades)
        .map(|k| match side {
            Side::Zero => 10f64.powi(-(k as i32)),
            Side::Infinity => 10f64.powi(k as i32),
        })
        .collect();
    let mut deviations = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let scale = lambda.powf(d);
        let mut worst = 0.0f64;
        for (x, a) in samples.iter().zip(&approx_vals) {
            let v = f(&r.dilate(lambda, x)) / scale;
            let dev = (v - a).abs();
            if !dev.is_finite() {
                return Ok(HomogeneityReport {
                    side,
                    degree: d,
                    lambdas: lambdas[..deviations.len() + 1].to_vec(),
                    deviations: {
                        deviations.push(f64::INFINITY);
                        deviations
                    },
                    verdict: Verdict::Fail,
                    offending_sample: Some(r.dilate(lambda, x)),
                    note: Some("non-finite evaluation".into()),
                });
            }
            worst = worst.max(dev);
        }
        deviations.push(worst);
    }
    let k = deviations.len();
    let slack = |a: f64, b: f64| a <= b * (1.0 + 1e-6) + 1e-15;
    let tail_ok = k < 3 || (slack(deviations[k - 1], deviations[k - 2]) && slack(deviations[k - 2], deviations[k - 3]));
    let end_ok = slack(deviations[k - 1], cfg.tolerance);
    Ok(HomogeneityReport {
        side,
        degree: d,
        lambdas,
        deviations,
        verdict: if tail_ok && end_ok { Verdict::Pass } else { Verdict::Fail },
        offending_sample: None,
        note: None,
    })
}

/// Runs the checker on a [`HomFunction`] against its stored approximation.
pub fn check_function(f: &HomFunction, side: Side, cfg: &CheckConfig) -> Result<HomogeneityReport> {
    let approx = f
        .approx(side)
        .ok_or_else(|| Error::Precondition(format!("no {side} approximation attached")))?;
    let eval = f.eval_fn();
    check_homogeneity_limit(
        eval.as_ref(),
        f.sig.weights(side),
        f.sig.degree(side),
        approx.as_ref(),
        side,
        cfg,
    )
}

/// Component-wise checker for a vector field (component `i` with degree `d + r_i`).
pub fn check_vector_field(field: &HomVectorField, side: Side, cfg: &CheckConfig) -> Result<Vec<HomogeneityReport>> {
    let approx = field
        .approx(side)
        .ok_or_else(|| Error::Precondition(format!("no {side} approximation attached")))?;
    let r = field.sig.weights(side);
    let d = field.sig.degree(side);
    (0..field.dim())
        .map(|i| {
            let f = |x: &[f64]| field.eval(x)[i];
            let a = |x: &[f64]| approx(x)[i];
            check_homogeneity_limit(&f, r, d + r.entries()[i], &a, side, cfg)
        })
        .collect()
}
