//! Class-K comparison functions `α(s) = a s^p` and their extended variants.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassKError {
    #[error("argument {s} outside the domain {domain}")]
    OutOfDomain { s: f64, domain: Interval },
    #[error("invalid class-K parameters a = {a}, p = {p}")]
    Invalid { a: f64, p: f64 },
}

/// `α(s) = a s^p` on `[0, s_max]`, with `a > 0`, `p >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassK {
    pub a: f64,
    pub p: f64,
    pub s_max: f64,
}

impl ClassK {
    pub fn new(a: f64, p: f64, s_max: f64) -> Result<Self, ClassKError> {
        if !(a > 0.0 && a.is_finite() && p >= 1.0 && p.is_finite()) {
            return Err(ClassKError::Invalid { a, p });
        }
        Ok(ClassK { a, p, s_max })
    }

    pub fn identity(s_max: f64) -> Self {
        ClassK { a: 1.0, p: 1.0, s_max }
    }

    /// Value at `s >= 0`; no domain check.
    pub fn eval(&self, s: f64) -> f64 {
        self.a * s.max(0.0).powf(self.p)
    }

    pub fn eval_checked(&self, s: f64) -> Result<f64, ClassKError> {
        if s < 0.0 || s > self.s_max * (1.0 + 1e-9) {
            return Err(ClassKError::OutOfDomain { s, domain: Interval::new(0.0, self.s_max) });
        }
        Ok(self.eval(s))
    }

    pub fn eval_interval(&self, s: Interval) -> Interval {
        s.map_monotone(|v| self.eval(v))
    }

    pub fn inverse(&self, v: f64) -> f64 {
        (v.max(0.0) / self.a).powf(1.0 / self.p)
    }

    pub fn inverse_interval(&self, v: Interval) -> Interval {
        v.map_monotone(|y| self.inverse(y))
    }

    pub fn scaled(&self, k: f64) -> ClassK {
        ClassK { a: self.a * k, ..*self }
    }
}

/// `α0(s) = -α3(α2⁻¹(c - s))`, an extended class-K function stored with its
/// literal domain. `c = 0` gives the form used with `B = -V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha0 {
    pub alpha2: ClassK,
    pub alpha3: ClassK,
    pub c: f64,
    pub domain: Interval,
}

impl Alpha0 {
    /// Domain `[c - α2(s_max), c]`.
    pub fn new(alpha2: ClassK, alpha3: ClassK, c: f64) -> Self {
        let lo = c - alpha2.eval(alpha2.s_max);
        Alpha0 { alpha2, alpha3, c, domain: Interval::new(lo, c) }
    }

    pub fn eval(&self, s: f64) -> Result<f64, ClassKError> {
        let tol = 1e-12 * (1.0 + self.domain.mag_hi());
        if !(s >= self.domain.lo - tol && s <= self.domain.hi + tol) {
            return Err(ClassKError::OutOfDomain { s, domain: self.domain });
        }
        Ok(-self.alpha3.eval(self.alpha2.inverse(self.c - s)))
    }

    /// Enclosure over `s`; fails if `s` leaves the domain.
    pub fn eval_interval(&self, s: Interval) -> Result<Interval, ClassKError> {
        let lo = self.eval(s.lo)?;
        let hi = self.eval(s.hi)?;
        Ok(Interval::new(lo, hi))
    }
}

/// A user-supplied extended class-K function `α(s) = k s` (for conditions
/// that take an arbitrary α), or `-α0` derived from a Lyapunov certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ExtAlpha {
    Linear { k: f64 },
    NegAlpha0(Alpha0),
    Alpha0(Alpha0),
}

impl ExtAlpha {
    pub fn eval_interval(&self, s: Interval) -> Result<Interval, ClassKError> {
        match self {
            ExtAlpha::Linear { k } => Ok(s.scale(*k)),
            ExtAlpha::NegAlpha0(a) => Ok(-a.eval_interval(s)?),
            ExtAlpha::Alpha0(a) => a.eval_interval(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `α(s) <= y` at every sample.
    Lower,
    /// `α(s) >= y` at every sample.
    Upper,
}

/// Candidate exponents from 1 to 4.
pub fn exponent_grid(step: f64) -> Vec<f64> {
    let n = (3.0 / step).round() as usize;
    (0..=n).map(|k| 1.0 + 3.0 * k as f64 / n as f64).collect()
}

/// Tightest coefficient for exponent `p`, if the samples admit one.
pub fn coefficient(samples: &[(f64, f64)], p: f64, side: Side) -> Option<f64> {
    let mut a = match side {
        Side::Lower => f64::INFINITY,
        Side::Upper => 0.0,
    };
    for &(s, y) in samples {
        if !(s > 0.0 && y > 0.0) {
            return None;
        }
        let r = y / s.powf(p);
        a = match side {
            Side::Lower => a.min(r),
            Side::Upper => a.max(r),
        };
    }
    (a > 0.0 && a.is_finite()).then_some(a)
}

fn worst_tightness(samples: &[(f64, f64)], a: f64, p: f64, side: Side) -> f64 {
    samples
        .iter()
        .map(|&(s, y)| {
            let v = a * s.powf(p);
            match side {
                Side::Lower => v / y,
                Side::Upper => y / v,
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Fits `a s^p` on one side of the samples, choosing `p` from `grid` to
/// maximize the worst ratio between the fit and the data.
pub fn fit(samples: &[(f64, f64)], side: Side, grid: &[f64]) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for &p in grid {
        let Some(a) = coefficient(samples, p, side) else { continue };
        let t = worst_tightness(samples, a, p, side);
        if best.map_or(true, |(_, _, bt)| t > bt) {
            best = Some((a, p, t));
        }
    }
    best.map(|(a, p, _)| (a, p))
}

/// Fits a lower and an upper bound sharing one exponent, so the lower fit
/// never exceeds the upper one.
pub fn fit_sandwich(samples: &[(f64, f64)], grid: &[f64]) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for &p in grid {
        let (Some(lo), Some(hi)) = (coefficient(samples, p, Side::Lower), coefficient(samples, p, Side::Upper)) else {
            continue;
        };
        let t = worst_tightness(samples, lo, p, Side::Lower).min(worst_tightness(samples, hi, p, Side::Upper));
        if best.map_or(true, |b| t > b.3) {
            best = Some((lo, hi, p, t));
        }
    }
    best.map(|(lo, hi, p, _)| (lo, hi, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_basics() {
        let a = ClassK::new(2.0, 2.0, 1.0).unwrap();
        assert_eq!(a.eval(0.5), 0.5);
        assert!((a.inverse(a.eval(0.3)) - 0.3).abs() < 1e-15);
        assert!(a.eval_checked(2.0).is_err());
        assert!(ClassK::new(1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn alpha0_domain_is_enforced() {
        let a2 = ClassK::new(1.0, 2.0, 0.3).unwrap();
        let a3 = ClassK::new(0.2, 1.0, 0.3).unwrap();
        let z = Alpha0::new(a2, a3, 0.0);
        assert!((z.eval(-0.0625).unwrap() + 0.05).abs() < 1e-15);
        assert!(z.eval(0.01).is_err());
        let zc = Alpha0::new(a2, a3, 0.0625);
        assert!((zc.eval(0.0).unwrap() + 0.05).abs() < 1e-15);
        assert_eq!(zc.eval(0.0625).unwrap(), 0.0);
    }

    #[test]
    fn fits_recover_exact_monomials() {
        let samples: Vec<(f64, f64)> = (1..50).map(|k| {
            let s = k as f64 / 50.0;
            (s, 3.0 * s * s)
        }).collect();
        let grid = exponent_grid(0.25);
        let (a, p) = fit(&samples, Side::Lower, &grid).unwrap();
        assert!((a - 3.0).abs() < 1e-12 && p == 2.0);
        let (lo, hi, p) = fit_sandwich(&samples, &grid).unwrap();
        assert!(p == 2.0 && (lo - 3.0).abs() < 1e-12 && (hi - 3.0).abs() < 1e-12);
        assert!(fit(&[(0.1, -1.0)], Side::Lower, &grid).is_none());
    }
}
