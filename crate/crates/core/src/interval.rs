//! Closed real intervals and boxes.
//!
//! Arithmetic uses plain round-to-nearest floating point, with no outward
//! rounding. Enclosure guarantees therefore hold up to machine-epsilon effects;
//! callers that want slack can widen results with [`Interval::inflate`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval `[lo, hi]` with finite endpoints and `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    /// Panics if the endpoints are not finite or are out of order.
    pub fn new(lo: f64, hi: f64) -> Self {
        Self::try_new(lo, hi).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "interval endpoints must be finite, got [{lo}, {hi}]"
            )));
        }
        if lo > hi {
            return Err(Error::InvalidInput(format!(
                "interval endpoints out of order: [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self::new(x, x)
    }

    /// Smallest interval containing both numbers, in either order.
    pub fn hull_of(a: f64, b: f64) -> Self {
        Self::new(a.min(b), a.max(b))
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Widens both endpoints by `rel * max(|lo|, |hi|)`.
    pub fn inflate(&self, rel: f64) -> Interval {
        if rel <= 0.0 {
            return *self;
        }
        let r = rel * self.lo.abs().max(self.hi.abs());
        Interval {
            lo: self.lo - r,
            hi: self.hi + r,
        }
    }

    /// Projects `x` onto the interval.
    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    pub fn scale(&self, c: f64) -> Interval {
        let a = self.lo * c;
        let b = self.hi * c;
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn recip(&self) -> Result<Interval> {
        if self.contains_zero() {
            return Err(Error::DivisionByZeroInterval {
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(Interval {
            lo: 1.0 / self.hi,
            hi: 1.0 / self.lo,
        })
    }

    /// `self / rhs`, computed as `self * (1 / rhs)`.
    pub fn div(&self, rhs: &Interval) -> Result<Interval> {
        Ok(*self * rhs.recip()?)
    }

    /// Tight image of `x -> x^k`.
    pub fn powi(&self, k: u32) -> Interval {
        match k {
            0 => Interval::point(1.0),
            1 => *self,
            _ if k % 2 == 1 || self.lo >= 0.0 => Interval {
                lo: self.lo.powi(k as i32),
                hi: self.hi.powi(k as i32),
            },
            _ if self.hi <= 0.0 => Interval {
                lo: self.hi.powi(k as i32),
                hi: self.lo.powi(k as i32),
            },
            _ => Interval {
                lo: 0.0,
                hi: self.lo.abs().max(self.hi.abs()).powi(k as i32),
            },
        }
    }

    pub fn exp(&self) -> Interval {
        Interval {
            lo: self.lo.exp(),
            hi: self.hi.exp(),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval {
            lo: self.lo + rhs.lo,
            hi: self.hi + rhs.hi,
        }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval {
            lo: self.lo - rhs.hi,
            hi: self.hi - rhs.lo,
        }
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let p = [self.lo * rhs.lo, self.lo * rhs.hi, self.hi * rhs.lo, self.hi * rhs.hi];
        let mut lo = p[0];
        let mut hi = p[0];
        for &v in &p[1..] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Interval { lo, hi }
    }
}

/// A nonempty Cartesian product of intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalBox(Vec<Interval>);

impl IntervalBox {
    pub fn new(components: Vec<Interval>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("interval box must be nonempty".into()));
        }
        Ok(Self(components))
    }

    /// Degenerate box `[x, x]`.
    pub fn point(x: &[f64]) -> Result<Self> {
        for &v in x {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite coordinate {v}")));
            }
        }
        Self::new(x.iter().map(|&v| Interval::point(v)).collect())
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let comps = bounds
            .iter()
            .map(|&(lo, hi)| Interval::try_new(lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[Interval] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval> {
        self.0.iter()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.0.iter().map(Interval::mid).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.0.iter().map(Interval::width).collect()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.0.len() && self.0.iter().zip(x).all(|(iv, &v)| iv.contains(v))
    }

    pub fn is_subset_of(&self, other: &IntervalBox) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a.is_subset_of(b))
    }

    /// Componentwise projection of `x` onto the box.
    pub fn clamp_point(&self, x: &mut [f64]) {
        for (v, iv) in x.iter_mut().zip(&self.0) {
            *v = iv.clamp(*v);
        }
    }
}

impl std::ops::Index<usize> for IntervalBox {
    type Output = Interval;
    fn index(&self, i: usize) -> &Interval {
        &self.0[i]
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" x ")?;
            }
            write!(f, "{iv}")?;
        }
        Ok(())
    }
}
