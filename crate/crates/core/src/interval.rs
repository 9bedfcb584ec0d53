//! Closed real intervals and axis-aligned boxes.
//!
//! Endpoints are computed in round-to-nearest; enclosures are exact up to
//! floating-point rounding of the endpoints themselves.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan(), "inverted interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn hull(a: f64, b: f64) -> Self {
        Interval { lo: a.min(b), hi: a.max(b) }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        if self.lo.is_infinite() || self.hi.is_infinite() {
            if self.lo.is_infinite() && self.hi.is_infinite() {
                return 0.0;
            }
            return if self.lo.is_infinite() { self.hi } else { self.lo };
        }
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    /// Closed-set intersection test.
    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    /// Smallest |x| over the interval.
    pub fn mag_lo(&self) -> f64 {
        if self.contains_zero() {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    /// Largest |x| over the interval.
    pub fn mag_hi(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn abs(self) -> Interval {
        Interval { lo: self.mag_lo(), hi: self.mag_hi() }
    }

    pub fn sqr(self) -> Interval {
        let a = self.lo * self.lo;
        let b = self.hi * self.hi;
        if self.contains_zero() {
            Interval { lo: 0.0, hi: a.max(b) }
        } else {
            Interval::hull(a, b)
        }
    }

    pub fn powi(self, n: i32) -> Interval {
        if n == 0 {
            return Interval::point(1.0);
        }
        if n < 0 {
            return Interval::point(1.0).div(self.powi(-n)).unwrap_or(Interval::new(f64::NEG_INFINITY, f64::INFINITY));
        }
        if n % 2 == 0 {
            let m = self.abs();
            Interval { lo: m.lo.powi(n), hi: m.hi.powi(n) }
        } else {
            Interval { lo: self.lo.powi(n), hi: self.hi.powi(n) }
        }
    }

    /// `None` when the divisor contains zero.
    pub fn div(self, rhs: Interval) -> Option<Interval> {
        if rhs.contains_zero() {
            return None;
        }
        let c = [self.lo / rhs.lo, self.lo / rhs.hi, self.hi / rhs.lo, self.hi / rhs.hi];
        Some(min_max(&c))
    }

    pub fn min(self, other: Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.min(other.hi) }
    }

    pub fn max(self, other: Interval) -> Interval {
        Interval { lo: self.lo.max(other.lo), hi: self.hi.max(other.hi) }
    }

    /// Image under a nondecreasing map.
    pub fn map_monotone(self, f: impl Fn(f64) -> f64) -> Interval {
        Interval { lo: f(self.lo), hi: f(self.hi) }
    }

    pub fn scale(self, k: f64) -> Interval {
        Interval::hull(self.lo * k, self.hi * k)
    }
}

fn min_max(v: &[f64]) -> Interval {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        // 0 * inf products are treated as 0
        let x = if x.is_nan() { 0.0 } else { x };
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Interval { lo, hi }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval { lo: self.lo + rhs.lo, hi: self.hi + rhs.hi }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval { lo: self.lo - rhs.hi, hi: self.hi - rhs.lo }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        min_max(&[self.lo * rhs.lo, self.lo * rhs.hi, self.hi * rhs.lo, self.hi * rhs.hi])
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Axis-aligned box, one closed interval per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalBox(pub Vec<Interval>);

impl IntervalBox {
    pub fn new(dims: Vec<Interval>) -> Self {
        IntervalBox(dims)
    }

    /// Builds a box from `[lo, hi]` pairs; `None` if any pair is inverted.
    pub fn from_bounds(bounds: &[[f64; 2]]) -> Option<Self> {
        bounds
            .iter()
            .map(|&[lo, hi]| (lo <= hi).then_some(Interval { lo, hi }))
            .collect::<Option<Vec<_>>>()
            .map(IntervalBox)
    }

    pub fn point(x: &[f64]) -> Self {
        IntervalBox(x.iter().map(|&v| Interval::point(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(Interval::mid).collect()
    }

    /// Half the diagonal length.
    pub fn radius(&self) -> f64 {
        0.5 * self.0.iter().map(|i| i.width() * i.width()).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.0.iter().zip(x).all(|(i, &v)| i.contains(v))
    }

    pub fn intersects(&self, other: &IntervalBox) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a.intersects(b))
    }

    pub fn intersection(&self, other: &IntervalBox) -> Option<IntervalBox> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.intersection(b))
            .collect::<Option<Vec<_>>>()
            .map(IntervalBox)
    }

    pub fn is_subset_of(&self, other: &IntervalBox) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a.is_subset_of(b))
    }

    pub fn dilate(&self, r: f64) -> IntervalBox {
        IntervalBox(self.0.iter().map(|i| Interval { lo: i.lo - r, hi: i.hi + r }).collect())
    }

    /// Splits along the widest dimension.
    pub fn bisect(&self) -> (IntervalBox, IntervalBox) {
        let (k, _) = self
            .0
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.width().total_cmp(&b.1.width()))
            .expect("empty box");
        let m = self.0[k].mid();
        let mut left = self.clone();
        let mut right = self.clone();
        left.0[k].hi = m;
        right.0[k].lo = m;
        (left, right)
    }

    /// Euclidean distance between two boxes (0 when they intersect).
    pub fn distance_to(&self, other: &IntervalBox) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| {
                let gap = (b.lo - a.hi).max(a.lo - b.hi).max(0.0);
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Enclosure of the Euclidean distance from points of `self` to `target`.
    pub fn distance_interval_to(&self, target: &IntervalBox) -> Interval {
        let mut lo2 = 0.0;
        let mut hi2 = 0.0;
        for (x, a) in self.0.iter().zip(&target.0) {
            // per-axis excess max(a.lo - x, 0, x - a.hi) is monotone on each side
            let below = Interval::new((a.lo - x.hi).max(0.0), (a.lo - x.lo).max(0.0));
            let above = Interval::new((x.lo - a.hi).max(0.0), (x.hi - a.hi).max(0.0));
            let e = below.max(above);
            lo2 += e.lo * e.lo;
            hi2 += e.hi * e.hi;
        }
        Interval::new(lo2.sqrt(), hi2.sqrt())
    }

    pub fn distance_point(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(a, &v)| {
                let e = (a.lo - v).max(v - a.hi).max(0.0);
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Closest point of the box to `x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.0.iter().zip(x).map(|(a, &v)| v.clamp(a.lo, a.hi)).collect()
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius()
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(" x "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplication_covers_sign_cases() {
        let a = Interval::new(-1.0, 2.0);
        let b = Interval::new(-3.0, 0.5);
        assert_eq!(a * b, Interval::new(-6.0, 3.0));
    }

    #[test]
    fn even_power_of_straddling_interval_starts_at_zero() {
        assert_eq!(Interval::new(-2.0, 1.0).powi(2), Interval::new(0.0, 4.0));
        assert_eq!(Interval::new(-2.0, 1.0).powi(3), Interval::new(-8.0, 1.0));
    }

    #[test]
    fn division_by_zero_containing_interval_is_rejected() {
        assert!(Interval::new(1.0, 2.0).div(Interval::new(-1.0, 1.0)).is_none());
    }

    #[test]
    fn box_distance_interval() {
        let a = IntervalBox::from_bounds(&[[-0.2, 0.2]]).unwrap();
        let cell = IntervalBox::from_bounds(&[[0.3, 0.4]]).unwrap();
        let d = cell.distance_interval_to(&a);
        assert!((d.lo - 0.1).abs() < 1e-15 && (d.hi - 0.2).abs() < 1e-15);
        assert_eq!(cell.distance_to(&a), d.lo);
        let inside = IntervalBox::from_bounds(&[[-0.1, 0.1]]).unwrap();
        assert_eq!(inside.distance_interval_to(&a), Interval::point(0.0));
    }
}
