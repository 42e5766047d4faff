//! Sampled search for a domination constant `c` with `η − cγ < 0` away from
//! the origin, for `η, γ` homogeneous in the bi-limit and `γ ≥ 0`.
//!
//! The search checks three regimes: the 0-approximations on the unit sphere
//! `S_{r0}`, the ∞-approximations on `S_{r∞}`, and the functions themselves on
//! a compact annulus obtained by dilating sphere points with both weight
//! families. Values on the annulus are normalized by `λ^d` so that margins are
//! comparable across rungs.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hom::{HomFunction, ScalarFn, Side, WeightVector};
use crate::sampling::{homogeneous_sphere, log_ladder};

/// Sampling and schedule settings of the search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpec {
    /// Sphere samples per coordinate (axis points `±e_i` are always added).
    pub points_per_dim: usize,
    /// Multiplier applied to `points_per_dim`, used for denser re-checks.
    pub density: usize,
    pub annulus_lo: f64,
    pub annulus_hi: f64,
    pub annulus_rungs: usize,
    pub eps_zero: f64,
    pub c_start: f64,
    pub c_max: f64,
    pub bisection_steps: u32,
    pub safety: f64,
    /// Required normalized margin; `0` means strict negativity.
    pub margin: f64,
    pub seed: u64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            points_per_dim: 64,
            density: 1,
            annulus_lo: 1e-3,
            annulus_hi: 1e3,
            annulus_rungs: 40,
            eps_zero: 1e-8,
            c_start: 1.0,
            c_max: 1e9,
            bisection_steps: 20,
            safety: 1.25,
            margin: 0.0,
            seed: 0x1e44a3,
        }
    }
}

impl SearchSpec {
    fn sphere_count(&self, n: usize) -> usize {
        self.points_per_dim * self.density.max(1) * n
    }

    /// Bisection resolution relative to the bracketing interval.
    pub fn resolution(&self) -> f64 {
        self.c_start * 0.5f64.powi(self.bisection_steps as i32)
    }
}

/// Sampled region of the certificate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    SphereZero,
    SphereInfinity,
    AnnulusZeroWeights,
    AnnulusInfinityWeights,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Region::SphereZero => "0-approximation on S_r0",
            Region::SphereInfinity => "∞-approximation on S_r∞",
            Region::AnnulusZeroWeights => "annulus (r0 dilations)",
            Region::AnnulusInfinityWeights => "annulus (r∞ dilations)",
        };
        f.write_str(s)
    }
}

/// Minimum of the normalized `cγ − η` over one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionCertificate {
    pub region: Region,
    pub samples: usize,
    pub min_margin: f64,
    pub worst_sample: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationResult {
    /// Returned constant, `safety × c_verified`.
    pub c: f64,
    /// Smallest constant of the schedule that passed.
    pub c_verified: f64,
    /// Margins evaluated at `c`.
    pub certificate: Vec<RegionCertificate>,
    pub seed: u64,
    pub total_samples: usize,
}

impl DominationResult {
    pub fn min_margin(&self) -> f64 {
        self.certificate.iter().map(|r| r.min_margin).fold(f64::INFINITY, f64::min)
    }
}

/// `η` and `γ` sharing a bi-limit signature, both with approximations attached.
#[derive(Clone, Debug)]
pub struct DominationProblem {
    pub eta: HomFunction,
    pub gamma: HomFunction,
}

impl DominationProblem {
    pub fn new(eta: HomFunction, gamma: HomFunction) -> Result<Self> {
        if !eta.signature().approx_eq(gamma.signature(), 1e-12) {
            return Err(Error::SignatureMismatch(format!(
                "eta {:?} vs gamma {:?}",
                eta.signature(),
                gamma.signature()
            )));
        }
        for side in [Side::Zero, Side::Infinity] {
            if eta.approx(side).is_none() || gamma.approx(side).is_none() {
                return Err(Error::Precondition(format!("missing {side} approximation")));
            }
        }
        Ok(Self { eta, gamma })
    }

    pub fn dim(&self) -> usize {
        self.eta.dim()
    }
}

struct SampleSet {
    region: Region,
    points: Vec<Vec<f64>>,
    eta: Vec<f64>,
    gamma: Vec<f64>,
}

impl SampleSet {
    fn passes(&self, c: f64, margin: f64) -> bool {
        self.eta.iter().zip(&self.gamma).all(|(e, g)| e - c * g < -margin)
    }

    fn certificate(&self, c: f64) -> RegionCertificate {
        let (mut worst, mut idx) = (f64::INFINITY, 0);
        for (k, (e, g)) in self.eta.iter().zip(&self.gamma).enumerate() {
            let m = c * g - e;
            if m < worst {
                worst = m;
                idx = k;
            }
        }
        RegionCertificate {
            region: self.region,
            samples: self.points.len(),
            min_margin: worst,
            worst_sample: self.points.get(idx).cloned().unwrap_or_default(),
        }
    }
}

/// Evaluates a region; the zero-set precondition is tested on sphere samples only.
fn sample_region(
    region: Region,
    points: Vec<Vec<f64>>,
    scales: Vec<f64>,
    eta: &ScalarFn,
    gamma: &ScalarFn,
    eps_zero: f64,
    zero_set_test: bool,
) -> Result<SampleSet> {
    let values: Vec<(f64, f64)> = points
        .par_iter()
        .zip(scales.par_iter())
        .map(|(x, s)| (eta(x) / s, gamma(x) / s))
        .collect();
    for (x, (e, g)) in points.iter().zip(&values) {
        if !(e.is_finite() && g.is_finite()) {
            return Err(Error::Hypothesis {
                region: region.to_string(),
                sample: x.clone(),
                detail: format!("non-finite evaluation (eta={e}, gamma={g})"),
            });
        }
        if *g < -eps_zero {
            return Err(Error::Hypothesis {
                region: region.to_string(),
                sample: x.clone(),
                detail: format!("gamma is negative ({g})"),
            });
        }
        if zero_set_test && *g < eps_zero && *e >= 0.0 {
            return Err(Error::Hypothesis {
                region: region.to_string(),
                sample: x.clone(),
                detail: format!("gamma vanishes ({g}) where eta = {e} is not negative"),
            });
        }
    }
    let (eta, gamma) = values.into_iter().unzip();
    Ok(SampleSet {
        region,
        points,
        eta,
        gamma,
    })
}

fn build_samples(p: &DominationProblem, spec: &SearchSpec) -> Result<Vec<SampleSet>> {
    let sig = p.eta.signature().clone();
    let n = p.dim();
    let count = spec.sphere_count(n);
    let mut sets = Vec::with_capacity(4);
    for (k, side) in [Side::Zero, Side::Infinity].into_iter().enumerate() {
        let r = sig.weights(side);
        let pts = homogeneous_sphere(r, count, spec.seed.wrapping_add(k as u64), true);
        let ones = vec![1.0; pts.len()];
        sets.push(sample_region(
            if side == Side::Zero { Region::SphereZero } else { Region::SphereInfinity },
            pts,
            ones,
            p.eta.approx(side).expect("checked at construction"),
            p.gamma.approx(side).expect("checked at construction"),
            spec.eps_zero,
            true,
        )?);
    }
    let ladder = log_ladder(spec.annulus_lo, spec.annulus_hi, spec.annulus_rungs);
    for (k, side) in [Side::Zero, Side::Infinity].into_iter().enumerate() {
        let r: &WeightVector = sig.weights(side);
        let d = sig.degree(side);
        let sphere = homogeneous_sphere(r, count, spec.seed.wrapping_add(17 + k as u64), true);
        let mut pts = Vec::with_capacity(sphere.len() * ladder.len());
        let mut scales = Vec::with_capacity(sphere.len() * ladder.len());
        for &lambda in &ladder {
            let s = lambda.powf(d);
            for theta in &sphere {
                pts.push(r.dilate(lambda, theta));
                scales.push(s);
            }
        }
        sets.push(sample_region(
            if side == Side::Zero { Region::AnnulusZeroWeights } else { Region::AnnulusInfinityWeights },
            pts,
            scales,
            p.eta.eval_fn(),
            p.gamma.eval_fn(),
            spec.eps_zero,
            false,
        )?);
    }
    Ok(sets)
}

/// Log grid for the multiplier `μ` placed on the inner Lyapunov function of a
/// recursive design. The scan starts at `μ = 1` and walks `10^{∓k/per_decade}`
/// in both directions, up to `decades` decades each way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightGrid {
    /// `0` keeps `μ = 1`.
    pub decades: u32,
    pub per_decade: u32,
    /// Grid points without improvement before a direction is abandoned.
    pub patience: u32,
}

impl Default for WeightGrid {
    fn default() -> Self {
        Self {
            decades: 16,
            per_decade: 2,
            patience: 3,
        }
    }
}

impl WeightGrid {
    pub fn fixed() -> Self {
        Self {
            decades: 0,
            ..Self::default()
        }
    }

    /// Returns the multiplier with the smallest gain. Failures at `μ ≠ 1` are
    /// skipped; the error at `μ = 1` is returned when no multiplier succeeds.
    pub fn minimize(&self, mut solve: impl FnMut(f64) -> Result<DominationResult>) -> Result<(f64, DominationResult)> {
        let per = self.per_decade.max(1);
        let mut best = None;
        let first_err = match solve(1.0) {
            Ok(res) => {
                best = Some((1.0, res));
                None
            }
            Err(e) => Some(e),
        };
        for sign in [-1.0, 1.0] {
            let mut stale = 0;
            for k in 1..=self.decades * per {
                let mu = 10f64.powf(sign * k as f64 / per as f64);
                match solve(mu) {
                    Ok(res) if best.as_ref().map_or(true, |(_, b): &(f64, DominationResult)| res.c < b.c) => {
                        best = Some((mu, res));
                        stale = 0;
                    }
                    _ if best.is_some() => stale += 1,
                    _ => {}
                }
                if stale >= self.patience {
                    break;
                }
            }
        }
        match (best, first_err) {
            (Some(b), _) => Ok(b),
            (None, Some(e)) => Err(e),
            (None, None) => unreachable!("μ = 1 either succeeds or fails"),
        }
    }
}

/// Doubling-then-bisection search for the smallest scheduled `c` making
/// `η − cγ` negative on every sampled region.
pub fn find_domination_constant(p: &DominationProblem, spec: &SearchSpec) -> Result<DominationResult> {
    let sets = build_samples(p, spec)?;
    let pass = |c: f64| sets.iter().all(|s| s.passes(c, spec.margin));
    let mut c = spec.c_start;
    while !pass(c) {
        c *= 2.0;
        if c > spec.c_max {
            return Err(Error::NoFiniteConstant { c_max: spec.c_max });
        }
    }
    let mut hi = c;
    if c > spec.c_start {
        let mut lo = c / 2.0;
        for _ in 0..spec.bisection_steps {
            let mid = 0.5 * (lo + hi);
            if pass(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let c = spec.safety * hi;
    Ok(DominationResult {
        c,
        c_verified: hi,
        certificate: sets.iter().map(|s| s.certificate(c)).collect(),
        seed: spec.seed,
        total_samples: sets.iter().map(|s| s.points.len()).sum(),
    })
}

/// Recomputes the sampled certificate at a given `c`.
pub fn certify(p: &DominationProblem, spec: &SearchSpec, c: f64) -> Result<Vec<RegionCertificate>> {
    Ok(build_samples(p, spec)?.iter().map(|s| s.certificate(c)).collect())
}

/// Constant `c` with `φ ≤ cζ` on the samples, for `ζ` positive definite whose
/// degrees dominate those of `φ` (lower or equal at 0, higher or equal at ∞).
pub fn domination_bound(phi: &HomFunction, zeta: &HomFunction, spec: &SearchSpec) -> Result<f64> {
    let (sp, sz) = (phi.signature(), zeta.signature());
    if sp.d0 < sz.d0 || sp.d_inf > sz.d_inf {
        return Err(Error::Precondition(format!(
            "degree ordering violated: need d_phi0 >= d_zeta0 ({} vs {}) and d_phi_inf <= d_zeta_inf ({} vs {})",
            sp.d0, sz.d0, sp.d_inf, sz.d_inf
        )));
    }
    for side in [Side::Zero, Side::Infinity] {
        let r = sz.weights(side);
        let approx = zeta
            .approx(side)
            .ok_or_else(|| Error::Precondition(format!("zeta lacks a {side} approximation")))?;
        for x in homogeneous_sphere(r, spec.sphere_count(r.len()), spec.seed ^ 0xabc, true) {
            if !(approx(&x) > 0.0 && zeta.eval(&x) > 0.0) {
                return Err(Error::Precondition(format!("zeta is not positive definite at {x:?}")));
            }
        }
    }
    let gamma = HomFunction::new(
        sz.clone(),
        zeta.eval_fn().clone(),
        zeta.approx(Side::Zero).cloned(),
        zeta.approx(Side::Infinity).cloned(),
    );
    // Re-tag φ with ζ's signature: under the ordering its approximation at an
    // end with strictly larger (resp. smaller) degree vanishes in the limit.
    let phi_approx = |side: Side| -> Result<Option<ScalarFn>> {
        let (dp, dz) = (sp.degree(side), sz.degree(side));
        if (dp - dz).abs() <= 1e-12 * dz.abs().max(1.0) {
            phi.approx(side)
                .cloned()
                .map(Some)
                .ok_or_else(|| Error::Precondition(format!("phi lacks a {side} approximation")))
        } else {
            Ok(None)
        }
    };
    let eta_part = |a: Option<ScalarFn>, z: &ScalarFn| -> ScalarFn {
        let z = z.clone();
        match a {
            Some(a) => std::sync::Arc::new(move |x: &[f64]| a(x) + z(x)),
            None => z,
        }
    };
    let (f, g) = (phi.eval_fn().clone(), zeta.eval_fn().clone());
    let eta = HomFunction::new(
        sz.clone(),
        std::sync::Arc::new(move |x: &[f64]| f(x) + g(x)),
        Some(eta_part(phi_approx(Side::Zero)?, gamma.approx(Side::Zero).unwrap())),
        Some(eta_part(phi_approx(Side::Infinity)?, gamma.approx(Side::Infinity).unwrap())),
    );
    let res = find_domination_constant(&DominationProblem::new(eta, gamma)?, spec)?;
    Ok((res.c_verified - 1.0).max(spec.resolution()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn quad(f: fn(&[f64]) -> f64) -> HomFunction {
        HomFunction::standard(WeightVector::standard(2), 2.0, Arc::new(f))
    }

    fn lp9() -> DominationProblem {
        DominationProblem::new(quad(|x| x[0] * x[1] - x[0] * x[0]), quad(|x| x[1] * x[1])).unwrap()
    }

    #[test]
    fn two_dimensional_constant_and_grid_oracle() {
        let res = find_domination_constant(&lp9(), &SearchSpec::default()).unwrap();
        assert!(res.c >= 0.25);
        assert!(res.certificate.iter().all(|r| r.min_margin > 0.0));
        // oracle: max over x1 of x1 x2 - x1^2 is x2^2/4, so any c > 1/4 works
        for i in 0..=100 {
            for j in 0..=100 {
                let x = [-10.0 + 0.2 * i as f64, -10.0 + 0.2 * j as f64];
                if x == [0.0, 0.0] {
                    continue;
                }
                assert!(x[0] * x[1] - x[0] * x[0] - res.c * x[1] * x[1] < 0.0 || x[0] == 0.0 && x[1] == 0.0);
            }
        }
    }

    #[test]
    fn negative_eta_accepts_schedule_start() {
        let p = DominationProblem::new(quad(|x| -(x[0] * x[0] + x[1] * x[1])), quad(|x| x[0] * x[0] + x[1] * x[1])).unwrap();
        let res = find_domination_constant(&p, &SearchSpec::default()).unwrap();
        assert_eq!(res.c_verified, 1.0);
        assert_eq!(res.c, 1.25);
    }

    #[test]
    fn equal_eta_gamma_needs_c_above_one() {
        let sq = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
        let p = DominationProblem::new(quad(sq), quad(sq)).unwrap();
        let res = find_domination_constant(&p, &SearchSpec::default()).unwrap();
        assert!(res.c_verified > 1.0 && res.c_verified < 1.0 + 1e-5);
        // oracle: η − cγ = (1 − c)|x|² < 0 for every c > 1
        assert!(res.min_margin() > 0.0);
    }

    #[test]
    fn zero_set_violation_is_a_hypothesis_failure() {
        let p = DominationProblem::new(quad(|x| x[0] * x[0] + x[1] * x[1]), quad(|x| x[1] * x[1])).unwrap();
        let err = find_domination_constant(&p, &SearchSpec::default()).unwrap_err();
        match err {
            Error::Hypothesis { sample, .. } => assert!(sample[1].abs() < 1e-4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cap_yields_no_finite_constant() {
        let p = DominationProblem::new(quad(|x| x[0] * x[1]), quad(|x| 1e-6 * (x[1] * x[1] + x[0] * x[0]))).unwrap();
        let spec = SearchSpec {
            c_max: 1e5,
            ..SearchSpec::default()
        };
        assert!(matches!(find_domination_constant(&p, &spec), Err(Error::NoFiniteConstant { .. })));
    }

    #[test]
    fn signature_mismatch_rejected() {
        let a = quad(|x| x[0]);
        let b = HomFunction::standard(WeightVector::standard(2), 3.0, Arc::new(|x: &[f64]| x[0]));
        assert!(matches!(DominationProblem::new(a, b), Err(Error::SignatureMismatch(_))));
    }

    #[test]
    fn bound_examples() {
        let r = WeightVector::standard(1);
        let zeta = HomFunction::new(
            crate::hom::BiLimitSignature::new(r.clone(), 2.0, r.clone(), 4.0).unwrap(),
            Arc::new(|x: &[f64]| x[0].powi(2) + x[0].powi(4)),
            Some(Arc::new(|x: &[f64]| x[0].powi(2))),
            Some(Arc::new(|x: &[f64]| x[0].powi(4))),
        );
        let cube = HomFunction::standard(r.clone(), 3.0, Arc::new(|x: &[f64]| x[0].abs().powi(3)));
        let spec = SearchSpec::default();
        let c = domination_bound(&cube, &zeta, &spec).unwrap();
        assert!(c <= 1.0, "c = {c}");
        let zero = HomFunction::standard(r.clone(), 3.0, Arc::new(|_: &[f64]| 0.0));
        assert_eq!(domination_bound(&zero, &zeta, &spec).unwrap(), spec.resolution());
        let z2 = zeta.clone();
        let twice = HomFunction::new(
            zeta.signature().clone(),
            Arc::new(move |x: &[f64]| 2.0 * z2.eval(x)),
            Some(Arc::new(|x: &[f64]| 2.0 * x[0].powi(2))),
            Some(Arc::new(|x: &[f64]| 2.0 * x[0].powi(4))),
        );
        let c = domination_bound(&twice, &zeta, &spec).unwrap();
        assert!((c - 2.0).abs() < 0.2, "c = {c}");
        let steep = HomFunction::standard(r, 5.0, Arc::new(|x: &[f64]| x[0].abs().powi(5)));
        assert!(matches!(domination_bound(&steep, &zeta, &spec), Err(Error::Precondition(_))));
    }
}
