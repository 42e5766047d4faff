//! Primitives `F(u) = ∫₀^u h(|s|^{A−1}, |s|^{B−1}) ds` of the interpolation
//! function, used by the backstepping feedback, and their power-sum
//! counterparts.
//!
//! For `A = B` and `A = 1` the primitive has a closed form. Otherwise `ln F`
//! is tabulated against `t = ln u` with quintic Hermite interpolation; node
//! values come from Gauss-Legendre quadrature between nodes, and the exact
//! asymptotic power laws are used beyond the table ends.

use std::sync::Arc;

use crate::hom::{abs_pow, signed_pow, Variant};
use crate::observer::Mode;

const SNAP: f64 = 1e-9;
const STEP: f64 = 0.02;
const REL_TAIL: f64 = 1e-13;

/// Odd, increasing primitive with exponents `A` at 0 and `B` at infinity.
#[derive(Clone, Debug)]
pub struct BlendPrimitive {
    a: f64,
    b: f64,
    kappa: f64,
    mode: Mode,
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Power,
    LinearLow,
    PowerSum,
    Table(Arc<LogTable>),
}

#[derive(Debug)]
struct LogTable {
    t0: f64,
    h: f64,
    /// `ln F`, its first and second derivatives in `t`, at the nodes.
    q: Vec<f64>,
    q1: Vec<f64>,
    q2: Vec<f64>,
}

fn snap(x: f64) -> f64 {
    if (x - 1.0).abs() < SNAP {
        1.0
    } else {
        x
    }
}

impl BlendPrimitive {
    pub fn new(a: f64, b: f64, mode: Mode) -> Self {
        let (a, b) = (snap(a), snap(b));
        assert!(a >= 1.0 && b >= 1.0, "primitive exponents must be at least 1, got ({a}, {b})");
        let kappa = match mode {
            Mode::Paper => (1.0 + (b == 1.0) as u8 as f64) / (1.0 + (a == 1.0) as u8 as f64),
            Mode::Simplified => 1.0,
        };
        let kind = if (a - b).abs() < 1e-12 {
            Kind::Power
        } else if mode == Mode::Simplified {
            Kind::PowerSum
        } else if a == 1.0 {
            Kind::LinearLow
        } else {
            Kind::Table(Arc::new(LogTable::build(a, b)))
        };
        Self { a, b, kappa, mode, kind }
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.kind, Kind::Power)
    }

    /// Derivative of the full primitive.
    pub fn integrand(&self, u: f64) -> f64 {
        let m = u.abs();
        match self.mode {
            Mode::Paper => crate::hom::h_blend(abs_pow(m, self.a - 1.0), abs_pow(m, self.b - 1.0)),
            Mode::Simplified => {
                if matches!(self.kind, Kind::Power) {
                    2.0 * self.a * abs_pow(m, self.a - 1.0)
                } else {
                    self.a * abs_pow(m, self.a - 1.0) + self.b * abs_pow(m, self.b - 1.0)
                }
            }
        }
    }

    /// Coefficient of the single power law in each approximation.
    fn approx_coef(&self, exp: f64) -> f64 {
        match self.mode {
            Mode::Paper => self.kappa / exp,
            Mode::Simplified => {
                if self.is_degenerate() {
                    2.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn eval(&self, v: Variant, u: f64) -> f64 {
        match v {
            Variant::Zero => self.approx_coef(self.a) * signed_pow(u, self.a),
            Variant::Infinity => self.approx_coef(self.b) * signed_pow(u, self.b),
            Variant::Full => match &self.kind {
                Kind::Power => self.approx_coef(self.a) * signed_pow(u, self.a),
                Kind::PowerSum => signed_pow(u, self.a) + signed_pow(u, self.b),
                Kind::LinearLow => 0.5 * (u + signed_pow(u, self.b) / self.b),
                Kind::Table(tab) => {
                    if u == 0.0 {
                        return 0.0;
                    }
                    u.signum() * tab.eval(u.abs(), self.a, self.b, self.kappa)
                }
            },
        }
    }

    pub fn deriv(&self, v: Variant, u: f64) -> f64 {
        let m = u.abs();
        match v {
            Variant::Zero => self.approx_coef(self.a) * self.a * abs_pow(m, self.a - 1.0),
            Variant::Infinity => self.approx_coef(self.b) * self.b * abs_pow(m, self.b - 1.0),
            Variant::Full => self.integrand(u),
        }
    }
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        -0.960_289_856_497_536_3,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    let w = [
        0.101_228_536_290_376_26,
        0.222_381_034_453_374_47,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362,
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_47,
        0.101_228_536_290_376_26,
    ];
    (x, w)
}

/// `(u f(u), u f(u) + u² f'(u))` at `u = e^t` for the interpolation integrand, written
/// with the logistic weight `w = p/(1+p)` so that large `t` does not overflow.
fn integrand_terms(t: f64, a: f64, b: f64) -> (f64, f64) {
    let u = t.exp();
    let w = 1.0 / (1.0 + (-(a - 1.0) * t).exp());
    let q = ((b - 1.0) * t).exp();
    let f = w * (1.0 + q);
    let uf = u * f;
    let extra = (a - 1.0) * w * (1.0 - w) * (1.0 + q) + (b - 1.0) * w * q;
    (uf, uf + u * extra)
}

impl LogTable {
    fn build(a: f64, b: f64) -> Self {
        let mut e = a - 1.0;
        if b > 1.0 {
            e = e.min(b - 1.0);
        }
        let tail = REL_TAIL.ln();
        let t_lo = (tail / e).max(-700.0 / a).max(-700.0);
        let t_hi = (-tail / e).min(700.0 / b).min(700.0);
        let count = ((t_hi - t_lo) / STEP).ceil() as usize + 1;
        let h = (t_hi - t_lo) / (count - 1) as f64;
        let kappa = (1.0 + (b == 1.0) as u8 as f64) / 1.0;
        let (gx, gw) = gauss_legendre_8();
        let mut g = Vec::with_capacity(count);
        let mut q = Vec::with_capacity(count);
        let mut q1 = Vec::with_capacity(count);
        let mut q2 = Vec::with_capacity(count);
        let mut acc = kappa * (a * t_lo).exp() / a;
        for k in 0..count {
            let t = t_lo + h * k as f64;
            if k > 0 {
                let mid = t - 0.5 * h;
                let inc: f64 = gx
                    .iter()
                    .zip(&gw)
                    .map(|(x, w)| w * integrand_terms(mid + 0.5 * h * x, a, b).0)
                    .sum::<f64>()
                    * 0.5
                    * h;
                acc += inc;
            }
            g.push(acc);
            let (g1, g2) = integrand_terms(t, a, b);
            let r1 = g1 / acc;
            q.push(acc.ln());
            q1.push(r1);
            q2.push(g2 / acc - r1 * r1);
        }
        Self { t0: t_lo, h, q, q1, q2 }
    }

    fn eval(&self, m: f64, a: f64, b: f64, kappa: f64) -> f64 {
        let t = m.ln();
        let last = self.q.len() - 1;
        if t <= self.t0 {
            return kappa * m.powf(a) / a;
        }
        let t_end = self.t0 + self.h * last as f64;
        if t >= t_end {
            let g_end = self.q[last].exp();
            let u_end = t_end.exp();
            return g_end + kappa * (m.powf(b) - u_end.powf(b)) / b;
        }
        let pos = (t - self.t0) / self.h;
        let k = (pos.floor() as usize).min(last - 1);
        let x = pos - k as f64;
        let h = self.h;
        let (x2, x3) = (x * x, x * x * x);
        let (x4, x5) = (x3 * x, x3 * x2);
        let h0 = 1.0 - 10.0 * x3 + 15.0 * x4 - 6.0 * x5;
        let h1 = x - 6.0 * x3 + 8.0 * x4 - 3.0 * x5;
        let h2 = 0.5 * (x2 - 3.0 * x3 + 3.0 * x4 - x5);
        let h3 = 0.5 * (x3 - 2.0 * x4 + x5);
        let h4 = -4.0 * x3 + 7.0 * x4 - 3.0 * x5;
        let h5 = 10.0 * x3 - 15.0 * x4 + 6.0 * x5;
        let val = self.q[k] * h0
            + h * self.q1[k] * h1
            + h * h * self.q2[k] * h2
            + h * h * self.q2[k + 1] * h3
            + h * self.q1[k + 1] * h4
            + self.q[k + 1] * h5;
        val.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson reference for the primitive.
    fn reference(a: f64, b: f64, u: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, fa: f64, fm: f64, fb: f64, whole: f64, depth: u32) -> f64 {
            let m = 0.5 * (lo + hi);
            let (lm, rm) = (0.5 * (lo + m), 0.5 * (m + hi));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - lo) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (hi - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 1e-15 * whole.abs().max(1e-300) * 15.0 {
                return left + right + (left + right - whole) / 15.0;
            }
            simpson(f, lo, m, fa, flm, fm, left, depth - 1) + simpson(f, m, hi, fm, frm, fb, right, depth - 1)
        }
        let f = |s: f64| crate::hom::h_blend(s.powf(a - 1.0), s.powf(b - 1.0));
        let (fa, fm, fb) = (f(0.0), f(0.5 * u), f(u));
        let whole = u / 6.0 * (fa + 4.0 * fm + fb);
        simpson(&f, 0.0, u, fa, fm, fb, whole, 40)
    }

    #[test]
    fn hermite_basis_reproduces_quintics() {
        // a table built on ln F is exact for F = e^{p(t)} with p quintic;
        // check the basis directly on p(x) = x^5 − 2x^3 + x on [0, 1]
        let p = |x: f64| x.powi(5) - 2.0 * x.powi(3) + x;
        let dp = |x: f64| 5.0 * x.powi(4) - 6.0 * x * x + 1.0;
        let ddp = |x: f64| 20.0 * x.powi(3) - 12.0 * x;
        let tab = LogTable {
            t0: 0.0,
            h: 1.0,
            q: vec![p(0.0), p(1.0)],
            q1: vec![dp(0.0), dp(1.0)],
            q2: vec![ddp(0.0), ddp(1.0)],
        };
        for k in 1..10 {
            let x = k as f64 / 10.0;
            let got = tab.eval(x.exp(), 2.0, 3.0, 1.0).ln();
            assert!((got - p(x)).abs() < 1e-13, "x={x} got={got} want={}", p(x));
        }
    }

    #[test]
    fn table_matches_quadrature() {
        for (a, b) in [(1.5, 2.0), (2.0, 1.5), (1.5, 1.0), (3.0, 1.25), (1.2, 4.0)] {
            let prim = BlendPrimitive::new(a, b, Mode::Paper);
            for u in [1e-4, 0.01, 0.3, 1.0, 2.7, 40.0, 1e3] {
                let want = reference(a, b, u);
                let got = prim.eval(Variant::Full, u);
                assert!((got - want).abs() <= 1e-9 * want, "A={a} B={b} u={u} got={got} want={want}");
                assert_eq!(prim.eval(Variant::Full, -u), -got);
            }
        }
    }

    #[test]
    fn closed_forms() {
        let lin = BlendPrimitive::new(1.0, 1.0, Mode::Paper);
        assert_eq!(lin.eval(Variant::Full, 2.5), 2.5);
        let low = BlendPrimitive::new(1.0, 1.5, Mode::Paper);
        for u in [0.2, 1.0, 9.0] {
            assert!((low.eval(Variant::Full, u) - reference(1.0, 1.5, u)).abs() < 1e-9 * u);
        }
        let deg = BlendPrimitive::new(1.5, 1.5, Mode::Paper);
        assert!((deg.eval(Variant::Full, 4.0) - 8.0 / 1.5).abs() < 1e-12);
        let simp = BlendPrimitive::new(1.0, 1.5, Mode::Simplified);
        assert!((simp.eval(Variant::Full, 4.0) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn approximations_are_the_limits() {
        for (a, b) in [(1.5, 2.0), (2.0, 1.5), (1.0, 1.5), (1.5, 1.0)] {
            let prim = BlendPrimitive::new(a, b, Mode::Paper);
            let small = 1e-9;
            let ratio0 = prim.eval(Variant::Full, small) / prim.eval(Variant::Zero, small);
            assert!((ratio0 - 1.0).abs() < 1e-3, "A={a} B={b} ratio0={ratio0}");
            let big = 1e9;
            let ratio_inf = prim.eval(Variant::Full, big) / prim.eval(Variant::Infinity, big);
            assert!((ratio_inf - 1.0).abs() < 1e-3, "A={a} B={b} ratio_inf={ratio_inf}");
        }
    }

    #[test]
    fn derivative_is_consistent() {
        let prim = BlendPrimitive::new(1.7, 1.2, Mode::Paper);
        for u in [0.05, 0.9, 1.1, 30.0] {
            let h = 1e-6 * u;
            let fd = (prim.eval(Variant::Full, u + h) - prim.eval(Variant::Full, u - h)) / (2.0 * h);
            assert!((fd - prim.deriv(Variant::Full, u)).abs() < 1e-6 * fd.abs());
        }
    }
}
