//! Sampled Lyapunov decrease checks for closed loops that are homogeneous in
//! the bi-limit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hom::{BiLimitSignature, Side, Variant};
use crate::sampling::{homogeneous_sphere, log_ladder};

/// Sample layout of a decrease check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecreaseConfig {
    pub points_per_dim: usize,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub rungs: usize,
    pub seed: u64,
}

impl Default for DecreaseConfig {
    fn default() -> Self {
        Self {
            points_per_dim: 64,
            lambda_lo: 1e-3,
            lambda_hi: 1e3,
            rungs: 13,
            seed: 0x5eed_dec,
        }
    }
}

/// Outcome of the check for one variant of the closed loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseReport {
    pub variant: Variant,
    pub samples: usize,
    /// Largest value of `V̇(x)/λ^d` over the samples; negative on success.
    pub worst: f64,
    pub worst_sample: Vec<f64>,
    pub passed: bool,
}

/// Evaluates `vdot(variant, x)` on sphere points of both weight families
/// dilated over the `λ` ladder, and requires strict negativity everywhere.
///
/// `sig` carries the weights and the degrees of `V̇` used for normalization.
pub fn sampled_decrease(
    sig: &BiLimitSignature,
    vdot: &(dyn Fn(Variant, &[f64]) -> f64 + Sync),
    cfg: &DecreaseConfig,
) -> Vec<DecreaseReport> {
    let n = sig.dim();
    let ladder = log_ladder(cfg.lambda_lo, cfg.lambda_hi, cfg.rungs);
    let mut points: Vec<(Vec<f64>, f64)> = Vec::new();
    for (k, side) in [Side::Zero, Side::Infinity].into_iter().enumerate() {
        let r = sig.weights(side);
        let d = sig.degree(side);
        let sphere = homogeneous_sphere(r, cfg.points_per_dim * n, cfg.seed.wrapping_add(k as u64), true);
        for &lambda in &ladder {
            let scale = lambda.powf(d);
            for x in &sphere {
                points.push((r.dilate(lambda, x), scale));
            }
        }
    }
    Variant::ALL
        .iter()
        .map(|&variant| {
            let (worst, idx) = points
                .par_iter()
                .enumerate()
                .map(|(i, (x, scale))| {
                    let v = vdot(variant, x) / scale;
                    (if v.is_nan() { f64::INFINITY } else { v }, i)
                })
                .reduce(|| (f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
            DecreaseReport {
                variant,
                samples: points.len(),
                worst,
                worst_sample: points[idx].0.clone(),
                passed: worst < 0.0,
            }
        })
        .collect()
}
