//! Deterministic quasi-uniform sampling of Euclidean and homogeneous spheres.
//!
//! Points come from a Cranley-Patterson rotated Halton sequence whose shift is
//! drawn from a seeded ChaCha generator, so a seed reproduces the sample set
//! bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hom::WeightVector;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in base `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % b) as f64 * f;
        index /= b;
        f *= inv;
    }
    out
}

/// `count` points of a shifted Halton sequence in `[0,1)^dim`.
pub fn halton_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "halton_points supports at most {} dims", PRIMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|k| {
            (0..dim)
                .map(|j| {
                    let v = radical_inverse(k as u64 + 1, PRIMES[j]) + shift[j];
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}

/// `count` quasi-uniform points on the Euclidean unit sphere of `R^n`.
pub fn euclidean_sphere(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match n {
        0 => Vec::new(),
        1 => (0..count)
            .map(|k| vec![if k % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phase: f64 = rng.gen();
            (0..count)
                .map(|k| {
                    let t = std::f64::consts::TAU * (k as f64 + phase) / count as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        3 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phase: f64 = rng.gen();
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * k as f64 + std::f64::consts::TAU * phase;
                    vec![rho * t.cos(), rho * t.sin(), z]
                })
                .collect()
        }
        _ => {
            let pairs = n.div_ceil(2);
            halton_points(2 * pairs, count, seed)
                .into_iter()
                .map(|u| {
                    let mut g = Vec::with_capacity(2 * pairs);
                    for p in 0..pairs {
                        let u1 = u[2 * p].clamp(1e-12, 1.0 - 1e-12);
                        let radius = (-2.0 * u1.ln()).sqrt();
                        let angle = std::f64::consts::TAU * u[2 * p + 1];
                        g.push(radius * angle.cos());
                        g.push(radius * angle.sin());
                    }
                    g.truncate(n);
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                    g.iter().map(|v| v / norm).collect()
                })
                .collect()
        }
    }
}

/// Quasi-uniform points on the unit homogeneous sphere `S_r`.
///
/// Euclidean sphere samples are mapped to `S_r` by polar projection. When
/// `with_axes` is set, the `2n` points `±e_i` are prepended so that zero sets
/// lying on coordinate axes are always probed.
pub fn homogeneous_sphere(r: &WeightVector, count: usize, seed: u64, with_axes: bool) -> Vec<Vec<f64>> {
    let n = r.len();
    let mut out = Vec::with_capacity(count + if with_axes { 2 * n } else { 0 });
    if with_axes {
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[i] = s;
                out.push(e);
            }
        }
    }
    for u in euclidean_sphere(n, count, seed) {
        let norm = r.norm(&u);
        out.push(r.dilate(1.0 / norm, &u));
    }
    out
}

/// Logarithmically spaced ladder `lo .. hi` with `rungs` entries.
pub fn log_ladder(lo: f64, hi: f64, rungs: usize) -> Vec<f64> {
    if rungs == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..rungs)
        .map(|k| (a + (b - a) * k as f64 / (rungs - 1) as f64).exp())
        .collect()
}

/// Uniform random points with homogeneous norm log-uniform in `[lo, hi]`.
pub fn random_points_in_shell(r: &WeightVector, lo: f64, hi: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = r.len();
    (0..count)
        .map(|_| {
            let mut g: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            if g.iter().all(|v| v.abs() < 1e-6) {
                g[0] = 1.0;
            }
            let theta = r.dilate(1.0 / r.norm(&g), &g);
            let level = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp();
            r.dilate(level, &theta)
        })
        .collect()
}
