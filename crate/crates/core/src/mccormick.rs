//! Generalized McCormick relaxation arithmetic.
//!
//! A [`McCormick`] value carries the convex and concave relaxation values of a
//! factorable quantity at one evaluation point, together with an interval
//! enclosing that quantity over the whole subdomain. Composition follows the
//! usual rules: sums and scalings act componentwise, products use the bilinear
//! envelope, and univariate functions use convex/concave envelopes composed
//! through the mid (median) rule. Every operation ends with a cut against the
//! enclosure so that `range.lo <= cv <= cc <= range.hi`.
//!
//! Subgradients are not propagated.

use std::ops::{Add, Neg, Sub};

use crate::error::{Error, Result};
use crate::interval::Interval;

/// Crossing tolerance when wrapping externally computed relaxation pairs.
pub const PAIR_TOLERANCE: f64 = 1e-9;

const TANGENT_TOL: f64 = 1e-12;
const TANGENT_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCormick {
    cv: f64,
    cc: f64,
    range: Interval,
}

/// Median of three numbers.
#[inline]
pub fn mid3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

/// Secant of `f` through `(lo, f(lo))` and `(hi, f(hi))`, evaluated at `x`.
#[inline]
fn secant(lo: f64, hi: f64, f_lo: f64, f_hi: f64, x: f64) -> f64 {
    if hi > lo {
        f_lo + (f_hi - f_lo) / (hi - lo) * (x - lo)
    } else {
        f_lo
    }
}

impl McCormick {
    /// Constant (exact) relaxation.
    pub fn constant(c: f64) -> Self {
        Self {
            cv: c,
            cc: c,
            range: Interval::point(c),
        }
    }

    /// Identity relaxation of a coordinate ranging over `range`.
    pub fn variable(value: f64, range: Interval) -> Result<Self> {
        if !range.contains(value) {
            return Err(Error::OutOfRange {
                value,
                lo: range.lo(),
                hi: range.hi(),
            });
        }
        Ok(Self {
            cv: value,
            cc: value,
            range,
        })
    }

    /// Wraps a relaxation pair computed elsewhere (e.g. state relaxations)
    /// together with bounds on the relaxed quantity.
    ///
    /// Both values are projected onto `bounds`. A pair that is still crossed
    /// by more than [`PAIR_TOLERANCE`] is rejected; smaller crossings are
    /// collapsed to their midpoint.
    pub fn from_state(cv: f64, cc: f64, bounds: Interval) -> Result<Self> {
        if !cv.is_finite() || !cc.is_finite() {
            return Err(Error::InvalidRelaxationPair { cv, cc });
        }
        let mut lo = bounds.clamp(cv);
        let mut hi = bounds.clamp(cc);
        if lo > hi {
            let scale = 1f64.max(cv.abs()).max(cc.abs());
            if lo - hi > PAIR_TOLERANCE * scale {
                return Err(Error::InvalidRelaxationPair { cv: lo, cc: hi });
            }
            let m = 0.5 * (lo + hi);
            lo = m;
            hi = m;
        }
        Ok(Self {
            cv: lo,
            cc: hi,
            range: bounds,
        })
    }

    /// Builds a value from raw parts and applies the final cut.
    fn cut(cv: f64, cc: f64, range: Interval) -> Self {
        let mut cv = range.clamp(cv);
        let mut cc = range.clamp(cc);
        if cv > cc {
            // Only reachable through rounding.
            let m = 0.5 * (cv + cc);
            cv = m;
            cc = m;
        }
        Self { cv, cc, range }
    }

    #[inline]
    pub fn cv(&self) -> f64 {
        self.cv
    }

    #[inline]
    pub fn cc(&self) -> f64 {
        self.cc
    }

    #[inline]
    pub fn range(&self) -> Interval {
        self.range
    }

    pub fn is_finite(&self) -> bool {
        self.cv.is_finite() && self.cc.is_finite() && self.range.is_finite()
    }

    pub fn scale(&self, c: f64) -> Self {
        let (cv, cc) = if c >= 0.0 {
            (c * self.cv, c * self.cc)
        } else {
            (c * self.cc, c * self.cv)
        };
        Self::cut(cv, cc, self.range.scale(c))
    }

    pub fn add_constant(&self, c: f64) -> Self {
        Self::cut(self.cv + c, self.cc + c, self.range + Interval::point(c))
    }

    pub fn mul(&self, rhs: &McCormick) -> Self {
        let (x, y) = (self, rhs);
        let (xl, xu) = (x.range.lo(), x.range.hi());
        let (yl, yu) = (y.range.lo(), y.range.hi());

        // min/max of a linear function of x over [x.cv, x.cc]
        let lin_min = |c: f64, v: &McCormick| (c * v.cv).min(c * v.cc);
        let lin_max = |c: f64, v: &McCormick| (c * v.cv).max(c * v.cc);

        let under1 = lin_min(yl, x) + lin_min(xl, y) - xl * yl;
        let under2 = lin_min(yu, x) + lin_min(xu, y) - xu * yu;
        let over1 = lin_max(yl, x) + lin_max(xu, y) - xu * yl;
        let over2 = lin_max(yu, x) + lin_max(xl, y) - xl * yu;

        Self::cut(under1.max(under2), over1.min(over2), x.range * y.range)
    }

    /// Relaxation of `1/x` on a sign-definite range.
    pub fn recip(&self) -> Result<Self> {
        let range = self.range.recip()?;
        let (lo, hi) = (self.range.lo(), self.range.hi());
        let inv = |x: f64| 1.0 / x;
        let (cv, cc) = if lo > 0.0 {
            // convex decreasing
            (inv(self.cc), secant(lo, hi, inv(lo), inv(hi), self.cv))
        } else {
            // concave decreasing
            (secant(lo, hi, inv(lo), inv(hi), self.cc), inv(self.cv))
        };
        Ok(Self::cut(cv, cc, range))
    }

    pub fn div(&self, rhs: &McCormick) -> Result<Self> {
        Ok(self.mul(&rhs.recip()?))
    }

    pub fn exp(&self) -> Self {
        let (lo, hi) = (self.range.lo(), self.range.hi());
        let cv = self.cv.exp();
        let cc = secant(lo, hi, lo.exp(), hi.exp(), self.cc);
        Self::cut(cv, cc, self.range.exp())
    }

    pub fn powi(&self, k: u32) -> Self {
        match k {
            0 => return Self::constant(1.0),
            1 => return *self,
            _ => {}
        }
        let range = self.range.powi(k);
        let (lo, hi) = (self.range.lo(), self.range.hi());
        let f = |x: f64| x.powi(k as i32);
        let sec = |x: f64| secant(lo, hi, f(lo), f(hi), x);

        let (cv, cc) = if k.is_multiple_of(2) {
            // convex; minimizer at the point of the range closest to zero
            let xmin = self.range.clamp(0.0);
            let xmax = if f(hi) >= f(lo) { hi } else { lo };
            (f(mid3(self.cv, self.cc, xmin)), sec(mid3(self.cv, self.cc, xmax)))
        } else if lo >= 0.0 {
            // convex increasing
            (f(self.cv), sec(self.cc))
        } else if hi <= 0.0 {
            // concave increasing
            (sec(self.cv), f(self.cc))
        } else {
            // both envelopes of an odd power are nondecreasing
            (
                odd_power_convex_envelope(k, lo, hi, self.cv),
                -odd_power_convex_envelope(k, -hi, -lo, -self.cc),
            )
        };
        Self::cut(cv, cc, range)
    }
}

/// Solves for the tangency point `z` in `(0, -lo)` of the line through
/// `(lo, lo^k)` that touches `x^k`, for odd `k >= 3` and `lo < 0`.
///
/// The condition is `(k-1) z^k - k lo z^(k-1) + lo^k = 0`.
pub fn odd_power_tangent_point(k: u32, lo: f64) -> f64 {
    debug_assert!(k % 2 == 1 && k >= 3 && lo < 0.0);
    let kf = k as f64;
    let ki = k as i32;
    let h = |z: f64| (kf - 1.0) * z.powi(ki) - kf * lo * z.powi(ki - 1) + lo.powi(ki);
    let dh = |z: f64| kf * (kf - 1.0) * z.powi(ki - 1) - kf * (kf - 1.0) * lo * z.powi(ki - 2);

    // h(0) = lo^k < 0 and h(-lo) = (2k - 2)(-lo)^k > 0
    let (mut a, mut b) = (0.0, -lo);
    let mut z = 0.5 * (a + b);
    for _ in 0..TANGENT_MAX_ITER {
        let hz = h(z);
        if hz < 0.0 {
            a = z;
        } else {
            b = z;
        }
        let d = dh(z);
        let newton = z - hz / d;
        let next = if d > 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - z).abs() <= TANGENT_TOL * (-lo) {
            return next;
        }
        z = next;
    }
    z
}

/// Convex envelope of `x^k` (odd `k`, `lo < 0 < hi`) evaluated at `x`.
fn odd_power_convex_envelope(k: u32, lo: f64, hi: f64, x: f64) -> f64 {
    let f = |v: f64| v.powi(k as i32);
    let z = odd_power_tangent_point(k, lo);
    if z >= hi {
        secant(lo, hi, f(lo), f(hi), x)
    } else if x <= z {
        secant(lo, z, f(lo), f(z), x)
    } else {
        f(x)
    }
}

impl Add for McCormick {
    type Output = McCormick;
    fn add(self, rhs: McCormick) -> McCormick {
        McCormick::cut(self.cv + rhs.cv, self.cc + rhs.cc, self.range + rhs.range)
    }
}

impl Sub for McCormick {
    type Output = McCormick;
    fn sub(self, rhs: McCormick) -> McCormick {
        McCormick::cut(self.cv - rhs.cc, self.cc - rhs.cv, self.range - rhs.range)
    }
}

impl Neg for McCormick {
    type Output = McCormick;
    fn neg(self) -> McCormick {
        McCormick {
            cv: -self.cc,
            cc: -self.cv,
            range: -self.range,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi)
    }

    fn raw(cv: f64, cc: f64, lo: f64, hi: f64) -> McCormick {
        McCormick::from_state(cv, cc, iv(lo, hi)).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn variable_seeding() {
        let v = McCormick::variable(0.2, iv(0.1, 0.3)).unwrap();
        assert_eq!((v.cv(), v.cc(), v.range()), (0.2, 0.2, iv(0.1, 0.3)));
        let v = McCormick::variable(0.7, iv(0.7, 1.3)).unwrap();
        assert_eq!((v.cv(), v.cc()), (0.7, 0.7));
        assert!(matches!(
            McCormick::variable(0.5, iv(0.6, 1.0)),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn state_wrapping() {
        let v = McCormick::from_state(0.9, 1.1, iv(0.7, 1.3)).unwrap();
        assert_eq!((v.cv(), v.cc()), (0.9, 1.1));
        let v = McCormick::from_state(0.6, 1.1, iv(0.7, 1.3)).unwrap();
        assert_eq!((v.cv(), v.cc()), (0.7, 1.1));
        assert!(matches!(
            McCormick::from_state(1.2, 0.8, iv(0.7, 1.3)),
            Err(Error::InvalidRelaxationPair { .. })
        ));
        // flattened pair below the bounds projects onto the lower bound
        let v = McCormick::from_state(0.5, 0.5, iv(0.7, 1.3)).unwrap();
        assert_eq!((v.cv(), v.cc()), (0.7, 0.7));
        // crossing inside tolerance collapses
        let v = McCormick::from_state(1.0 + 1e-12, 1.0, iv(0.7, 1.3)).unwrap();
        assert_eq!(v.cv(), v.cc());
    }

    #[test]
    fn linear_rules() {
        let a = raw(1.0, 2.0, 0.0, 3.0);
        let b = raw(0.0, 1.0, -1.0, 2.0);
        let s = a + b;
        assert_eq!((s.cv(), s.cc(), s.range()), (1.0, 3.0, iv(-1.0, 5.0)));
        let n = -a;
        assert_eq!((n.cv(), n.cc(), n.range()), (-2.0, -1.0, iv(-3.0, 0.0)));
        let m = a.scale(-2.0);
        assert_eq!((m.cv(), m.cc(), m.range()), (-4.0, -2.0, iv(-6.0, 0.0)));
        let d = a - b;
        assert_eq!((d.cv(), d.cc(), d.range()), (0.0, 2.0, iv(-2.0, 4.0)));
    }

    /// Brute-force bilinear envelope: max/min over the four McCormick planes
    /// evaluated at a point (identity relaxations).
    fn bilinear_planes(x: f64, y: f64, xb: Interval, yb: Interval) -> (f64, f64) {
        let (xl, xu, yl, yu) = (xb.lo(), xb.hi(), yb.lo(), yb.hi());
        let under = [xl * y + yl * x - xl * yl, xu * y + yu * x - xu * yu];
        let over = [xu * y + yl * x - xu * yl, xl * y + yu * x - xl * yu];
        (under[0].max(under[1]), over[0].min(over[1]))
    }

    #[test]
    fn bilinear_product() {
        let x = McCormick::variable(0.5, iv(0.0, 1.0)).unwrap();
        let y = McCormick::variable(0.5, iv(0.0, 1.0)).unwrap();
        let p = x.mul(&y);
        let (cv, cc) = bilinear_planes(0.5, 0.5, iv(0.0, 1.0), iv(0.0, 1.0));
        assert_eq!((cv, cc), (0.0, 0.5));
        assert_eq!((p.cv(), p.cc(), p.range()), (0.0, 0.5, iv(0.0, 1.0)));

        let two = McCormick::constant(2.0);
        let p = two.mul(&x);
        assert_eq!((p.cv(), p.cc()), (1.0, 1.0));

        let z = McCormick::variable(0.0, iv(0.0, 1.0)).unwrap();
        let p = z.mul(&z);
        let (cv, cc) = bilinear_planes(0.0, 0.0, iv(0.0, 1.0), iv(0.0, 1.0));
        assert_eq!((p.cv(), p.cc()), (cv, cc));
        assert_eq!((p.cv(), p.cc()), (0.0, 0.0));
    }

    #[test]
    fn bilinear_matches_planes_on_grid() {
        let xb = iv(-1.0, 2.0);
        let yb = iv(0.5, 3.0);
        for i in 0..=10 {
            for j in 0..=10 {
                let x = xb.lo() + xb.width() * i as f64 / 10.0;
                let y = yb.lo() + yb.width() * j as f64 / 10.0;
                let p = McCormick::variable(x, xb)
                    .unwrap()
                    .mul(&McCormick::variable(y, yb).unwrap());
                let (cv, cc) = bilinear_planes(x, y, xb, yb);
                assert!(close(p.cv(), cv) && close(p.cc(), cc), "{x} {y}");
            }
        }
    }

    #[test]
    fn cubic_on_positive_box() {
        let x = McCormick::variable(1.0, iv(0.7, 1.3)).unwrap();
        let c = x.powi(3);
        assert!(close(c.cv(), 1.0));
        let secant = (0.343 * 0.3 + 2.197 * 0.3) / 0.6;
        assert!(close(c.cc(), secant), "{} vs {secant}", c.cc());
        assert!(0.343 - 1e-12 <= c.cv() && c.cc() <= 2.197 + 1e-12);
    }

    #[test]
    fn cubic_on_symmetric_box() {
        let x = McCormick::variable(0.0, iv(-1.0, 1.0)).unwrap();
        let c = x.powi(3);
        assert!(close(c.cv(), -c.cc()));
        assert!(c.cv() <= 0.0 && 0.0 <= c.cc());
        // tangent point of the cubic is -lo/2 = 0.5, secant from -1 to 0.5
        // has slope 0.75, so cv(0) = -1 + 0.75 = -0.25
        assert!(close(c.cv(), -0.25));
    }

    #[test]
    fn cubic_tangent_point_closed_form() {
        for lo in [-0.1, -1.0, -2.5, -7.0] {
            let z = odd_power_tangent_point(3, lo);
            assert!((z - (-lo / 2.0)).abs() <= 1e-12 * lo.abs(), "{lo}: {z}");
        }
        // k = 5: brute-force the tangency condition by bisection on a fine grid
        let lo = -1.3f64;
        let z = odd_power_tangent_point(5, lo);
        let lhs = (z.powi(5) - lo.powi(5)) / (z - lo);
        let rhs = 5.0 * z.powi(4);
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs());
    }

    #[test]
    fn degenerate_exactness() {
        let two = McCormick::variable(2.0, Interval::point(2.0)).unwrap();
        let c = two.powi(3);
        assert_eq!((c.cv(), c.cc()), (8.0, 8.0));
        let z = McCormick::constant(0.0).exp();
        assert_eq!((z.cv(), z.cc()), (1.0, 1.0));
        let r = two.recip().unwrap();
        assert_eq!((r.cv(), r.cc()), (0.5, 0.5));
    }

    #[test]
    fn exponential() {
        let x = McCormick::variable(0.0, iv(-1.0, 1.0)).unwrap();
        let e = x.exp();
        assert_eq!(e.cv(), 1.0);
        let secant_mid = (1f64.exp() + (-1f64).exp()) / 2.0;
        assert!(close(e.cc(), secant_mid));
        assert!((e.cc() - 1.5431).abs() < 1e-4);

        let x = McCormick::variable(-1.0, iv(-1.0, 1.0)).unwrap();
        let e = x.exp();
        assert!(close(e.cv(), (-1f64).exp()) && close(e.cc(), (-1f64).exp()));
    }

    #[test]
    fn even_power_spanning_zero() {
        let x = McCormick::variable(0.5, iv(-1.0, 2.0)).unwrap();
        let s = x.powi(2);
        assert_eq!(s.cv(), 0.25);
        // secant of x^2 over [-1, 2] is x + 2
        assert!(close(s.cc(), 2.5));
        assert_eq!(s.range(), iv(0.0, 4.0));
    }

    #[test]
    fn reciprocal_rules() {
        let x = McCormick::variable(2.0, iv(1.0, 4.0)).unwrap();
        let r = x.recip().unwrap();
        assert!(close(r.cv(), 0.5));
        // secant of 1/x over [1,4] at 2: 1 - 0.25*(2-1) = 0.75
        assert!(close(r.cc(), 0.75));
        let n = McCormick::variable(-2.0, iv(-4.0, -1.0)).unwrap();
        let r = n.recip().unwrap();
        assert!(close(r.cv(), -0.75) && close(r.cc(), -0.5));
        let s = McCormick::variable(0.0, iv(-1.0, 1.0)).unwrap();
        assert!(s.recip().is_err());
    }

    #[test]
    fn mid3_is_median() {
        assert_eq!(mid3(1.0, 2.0, 3.0), 2.0);
        assert_eq!(mid3(3.0, 1.0, 2.0), 2.0);
        assert_eq!(mid3(2.0, 3.0, 1.0), 2.0);
        assert_eq!(mid3(1.0, 1.0, 0.0), 1.0);
    }
}
