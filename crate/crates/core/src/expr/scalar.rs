//! Number types an [`Expr`](super::Expr) can be evaluated over.
//!
//! `f64` and [`Interval`] are the plain carriers; [`Dual`] wraps either of
//! them with a forward-mode gradient.

use std::ops::{Add, Mul, Neg, Sub};

use super::EvalError;
use crate::interval::Interval;

/// C¹ positive part: zero for `u <= 0`, quadratic on `(0, 1/k)`, then `u - 1/(2k)`.
pub fn smoothplus(u: f64, k: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u * k < 1.0 {
        0.5 * k * u * u
    } else {
        u - 0.5 / k
    }
}

/// Derivative of [`smoothplus`] in `u`.
pub fn smoothplus_deriv(u: f64, k: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u * k < 1.0 {
        k * u
    } else {
        1.0
    }
}

pub trait Scalar: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> {
    /// A constant; `nvars` sizes the gradient of dual numbers.
    fn constant(c: f64, nvars: usize) -> Self;
    fn div(self, rhs: Self) -> Result<Self, EvalError>;
    fn powi(self, n: i32) -> Result<Self, EvalError>;
    fn exp(self) -> Self;
    fn sqrt(self) -> Result<Self, EvalError>;
    fn abs(self) -> Result<Self, EvalError>;
    fn min(self, rhs: Self) -> Result<Self, EvalError>;
    fn max(self, rhs: Self) -> Result<Self, EvalError>;
    fn smoothplus(self, k: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64, _: usize) -> Self {
        c
    }
    fn div(self, rhs: Self) -> Result<Self, EvalError> {
        if rhs == 0.0 {
            Err(EvalError::DivisionByZero)
        } else {
            Ok(self / rhs)
        }
    }
    fn powi(self, n: i32) -> Result<Self, EvalError> {
        if n < 0 && self == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(f64::powi(self, n))
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Result<Self, EvalError> {
        if self < 0.0 {
            Err(EvalError::Domain(format!("sqrt of negative value {self}")))
        } else {
            Ok(f64::sqrt(self))
        }
    }
    fn abs(self) -> Result<Self, EvalError> {
        Ok(f64::abs(self))
    }
    fn min(self, rhs: Self) -> Result<Self, EvalError> {
        Ok(f64::min(self, rhs))
    }
    fn max(self, rhs: Self) -> Result<Self, EvalError> {
        Ok(f64::max(self, rhs))
    }
    fn smoothplus(self, k: f64) -> Self {
        smoothplus(self, k)
    }
}

impl Scalar for Interval {
    fn constant(c: f64, _: usize) -> Self {
        Interval::point(c)
    }
    fn div(self, rhs: Self) -> Result<Self, EvalError> {
        Interval::div(self, rhs).ok_or(EvalError::DivisionByZero)
    }
    fn powi(self, n: i32) -> Result<Self, EvalError> {
        if n < 0 && self.contains_zero() {
            return Err(EvalError::DivisionByZero);
        }
        Ok(Interval::powi(self, n))
    }
    fn exp(self) -> Self {
        self.map_monotone(f64::exp)
    }
    fn sqrt(self) -> Result<Self, EvalError> {
        if self.lo < 0.0 {
            Err(EvalError::Domain(format!("sqrt over {self}, which contains negatives")))
        } else {
            Ok(self.map_monotone(f64::sqrt))
        }
    }
    fn abs(self) -> Result<Self, EvalError> {
        Ok(Interval::abs(self))
    }
    fn min(self, rhs: Self) -> Result<Self, EvalError> {
        Ok(Interval::min(self, rhs))
    }
    fn max(self, rhs: Self) -> Result<Self, EvalError> {
        Ok(Interval::max(self, rhs))
    }
    fn smoothplus(self, k: f64) -> Self {
        self.map_monotone(|u| smoothplus(u, k))
    }
}

/// Value plus gradient with respect to every state variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual<T> {
    pub value: T,
    pub grad: Vec<T>,
}

/// Operations a dual number needs from its carrier.
pub trait DualBase: Scalar + Copy {
    /// Enclosure of the smoothplus derivative over the carrier.
    fn smoothplus_slope(self, k: f64) -> Self;
}

impl DualBase for f64 {
    fn smoothplus_slope(self, k: f64) -> Self {
        smoothplus_deriv(self, k)
    }
}

impl DualBase for Interval {
    fn smoothplus_slope(self, k: f64) -> Self {
        self.map_monotone(|u| smoothplus_deriv(u, k))
    }
}

impl<T: DualBase> Dual<T> {
    pub fn variable(value: T, index: usize, nvars: usize) -> Self {
        let mut grad = vec![T::constant(0.0, 0); nvars];
        grad[index] = T::constant(1.0, 0);
        Dual { value, grad }
    }

    fn chain(&self, value: T, slope: T) -> Self {
        Dual { value, grad: self.grad.iter().map(|&g| g * slope).collect() }
    }
}

impl<T: DualBase> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual {
            value: self.value + rhs.value,
            grad: self.grad.iter().zip(&rhs.grad).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: DualBase> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual {
            value: self.value - rhs.value,
            grad: self.grad.iter().zip(&rhs.grad).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: DualBase> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Dual {
            value: self.value * rhs.value,
            grad: self
                .grad
                .iter()
                .zip(&rhs.grad)
                .map(|(&a, &b)| a * rhs.value + self.value * b)
                .collect(),
        }
    }
}

impl<T: DualBase> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { value: -self.value, grad: self.grad.into_iter().map(|g| -g).collect() }
    }
}

impl<T: DualBase> Scalar for Dual<T> {
    fn constant(c: f64, nvars: usize) -> Self {
        Dual { value: T::constant(c, 0), grad: vec![T::constant(0.0, 0); nvars] }
    }

    fn div(self, rhs: Self) -> Result<Self, EvalError> {
        let value = self.value.div(rhs.value)?;
        let denom = rhs.value * rhs.value;
        let grad = self
            .grad
            .iter()
            .zip(&rhs.grad)
            .map(|(&a, &b)| (a * rhs.value - self.value * b).div(denom))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dual { value, grad })
    }

    fn powi(self, n: i32) -> Result<Self, EvalError> {
        if n == 0 {
            return Ok(Self::constant(1.0, self.grad.len()));
        }
        let value = self.value.powi(n)?;
        let slope = self.value.powi(n - 1)? * T::constant(n as f64, 0);
        Ok(self.chain(value, slope))
    }

    fn exp(self) -> Self {
        let value = self.value.exp();
        self.chain(value, value)
    }

    fn sqrt(self) -> Result<Self, EvalError> {
        let value = self.value.sqrt()?;
        let slope = T::constant(0.5, 0).div(value).map_err(|_| {
            EvalError::NonDifferentiable("sqrt at zero")
        })?;
        Ok(self.chain(value, slope))
    }

    fn abs(self) -> Result<Self, EvalError> {
        Err(EvalError::NonDifferentiable("abs"))
    }

    fn min(self, _: Self) -> Result<Self, EvalError> {
        Err(EvalError::NonDifferentiable("min"))
    }

    fn max(self, _: Self) -> Result<Self, EvalError> {
        Err(EvalError::NonDifferentiable("max"))
    }

    fn smoothplus(self, k: f64) -> Self {
        let value = self.value.smoothplus(k);
        let slope = self.value.smoothplus_slope(k);
        self.chain(value, slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothplus_is_c1_at_the_joints() {
        let k = 200.0;
        let eps = 1e-9;
        for u0 in [0.0, 1.0 / k] {
            let left = smoothplus(u0 - eps, k);
            let right = smoothplus(u0 + eps, k);
            assert!((left - right).abs() < 1e-8);
            assert!((smoothplus_deriv(u0 - eps, k) - smoothplus_deriv(u0 + eps, k)).abs() < 1e-6);
        }
        assert_eq!(smoothplus(-3.0, k), 0.0);
        assert!((smoothplus(1.0, k) - (1.0 - 0.0025)).abs() < 1e-15);
    }
}
