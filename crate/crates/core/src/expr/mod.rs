//! Scalar expressions over state variables `x1..xn`.
//!
//! Expressions define vector fields, sets, and certificate candidates. They
//! can be evaluated pointwise, differentiated in forward mode, and bounded
//! over boxes with the natural interval extension.

mod parse;
pub mod scalar;

use std::fmt;
use std::ops;

use thiserror::Error;

use crate::interval::{Interval, IntervalBox};
pub use parse::{parse, ParseError, ParseErrorKind};
pub use scalar::{smoothplus, Dual, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
    /// `smoothplus(u, k)`: C¹ positive part with sharpness `k > 0`.
    SmoothPlus,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::SmoothPlus => "smoothplus",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "smoothplus" => Func::SmoothPlus,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Sqrt | Func::Abs => 1,
            Func::Min | Func::Max | Func::SmoothPlus => 2,
        }
    }

    pub fn is_differentiable(self) -> bool {
        !matches!(self, Func::Abs | Func::Min | Func::Max)
    }
}

/// Expression tree. Literals are non-negative; negation is explicit.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based variable index (`x1` is `Var(0)`).
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expression is not differentiable: {0}")]
    NonDifferentiable(&'static str),
    #[error("expression uses x{needed} but only {given} values were supplied")]
    Dimension { needed: usize, given: usize },
    #[error("smoothplus sharpness must be a positive constant")]
    BadSharpness,
}

impl Expr {
    /// Literal; negative values become `Neg(Num(|c|))` so printing round-trips.
    pub fn num(c: f64) -> Expr {
        if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
            Expr::Neg(Box::new(Expr::Num(-c)))
        } else {
            Expr::Num(c)
        }
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn powi(self, n: i32) -> Expr {
        Expr::Pow(Box::new(self), n)
    }

    pub fn call(func: Func, args: Vec<Expr>) -> Expr {
        Expr::Call(func, args)
    }

    pub fn smoothplus(self, k: f64) -> Expr {
        Expr::Call(Func::SmoothPlus, vec![self, Expr::num(k)])
    }

    pub fn sqrt(self) -> Expr {
        Expr::Call(Func::Sqrt, vec![self])
    }

    /// Number of variables referenced: one more than the highest index.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Pow(e, _) => e.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.arity().max(b.arity()),
            Expr::Call(_, args) => args.iter().map(Expr::arity).max().unwrap_or(0),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => true,
            Expr::Neg(e) | Expr::Pow(e, _) => e.is_differentiable(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.is_differentiable() && b.is_differentiable()
            }
            Expr::Call(f, args) => f.is_differentiable() && args.iter().all(Expr::is_differentiable),
        }
    }

    /// Evaluates over any [`Scalar`] carrier; `vars[i]` is the value of `x{i+1}`.
    pub fn eval_with<S: Scalar>(&self, vars: &[S]) -> Result<S, EvalError> {
        let nvars = vars.len();
        match self {
            Expr::Num(c) => Ok(S::constant(*c, nvars)),
            Expr::Var(i) => vars
                .get(*i)
                .cloned()
                .ok_or(EvalError::Dimension { needed: i + 1, given: nvars }),
            Expr::Neg(e) => Ok(-e.eval_with(vars)?),
            Expr::Add(a, b) => Ok(a.eval_with(vars)? + b.eval_with(vars)?),
            Expr::Sub(a, b) => Ok(a.eval_with(vars)? - b.eval_with(vars)?),
            Expr::Mul(a, b) => Ok(a.eval_with(vars)? * b.eval_with(vars)?),
            Expr::Div(a, b) => a.eval_with(vars)?.div(b.eval_with(vars)?),
            Expr::Pow(e, n) => e.eval_with(vars)?.powi(*n),
            Expr::Call(f, args) => {
                let a0 = args[0].eval_with(vars)?;
                match f {
                    Func::Exp => Ok(a0.exp()),
                    Func::Sqrt => a0.sqrt(),
                    Func::Abs => a0.abs(),
                    Func::Min => a0.min(args[1].eval_with(vars)?),
                    Func::Max => a0.max(args[1].eval_with(vars)?),
                    Func::SmoothPlus => {
                        let k = args[1].eval_with::<f64>(&[])?;
                        if !(k > 0.0 && k.is_finite()) {
                            return Err(EvalError::BadSharpness);
                        }
                        Ok(a0.smoothplus(k))
                    }
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.eval_with(x)
    }

    /// Exact forward-mode gradient at `x`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        Ok(self.value_and_grad(x)?.1)
    }

    pub fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), EvalError> {
        let n = x.len();
        let vars: Vec<Dual<f64>> = x.iter().enumerate().map(|(i, &v)| Dual::variable(v, i, n)).collect();
        let d = self.eval_with(&vars)?;
        Ok((d.value, d.grad))
    }

    /// Natural interval extension over `b`.
    pub fn eval_interval(&self, b: &IntervalBox) -> Result<Interval, EvalError> {
        self.eval_with(&b.0)
    }

    /// Enclosures of the value and of every partial derivative over `b`.
    pub fn grad_interval(&self, b: &IntervalBox) -> Result<(Interval, Vec<Interval>), EvalError> {
        let n = b.dim();
        let vars: Vec<Dual<Interval>> = b.0.iter().enumerate().map(|(i, &v)| Dual::variable(v, i, n)).collect();
        let d = self.eval_with(&vars)?;
        Ok((d.value, d.grad))
    }

    /// Replaces every `x{i+1}` with `subs[i]`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self {
            Expr::Num(c) => Expr::Num(*c),
            Expr::Var(i) => subs.get(*i).cloned().unwrap_or(Expr::Var(*i)),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(subs))),
            Expr::Add(a, b) => Expr::Add(Box::new(a.substitute(subs)), Box::new(b.substitute(subs))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.substitute(subs)), Box::new(b.substitute(subs))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.substitute(subs)), Box::new(b.substitute(subs))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.substitute(subs)), Box::new(b.substitute(subs))),
            Expr::Pow(e, n) => Expr::Pow(Box::new(e.substitute(subs)), *n),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.substitute(subs)).collect()),
        }
    }

    fn is_atom(&self) -> bool {
        matches!(self, Expr::Num(_) | Expr::Var(_) | Expr::Call(..) | Expr::Neg(_))
    }

    fn fmt_atom(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_atom() {
            write!(f, "{self}")
        } else {
            write!(f, "({self})")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bin = |f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr| -> fmt::Result {
            a.fmt_atom(f)?;
            write!(f, " {op} ")?;
            b.fmt_atom(f)
        };
        match self {
            // `{:?}` keeps enough digits to reparse to the same f64
            Expr::Num(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_atom(f)
            }
            Expr::Add(a, b) => bin(f, a, "+", b),
            Expr::Sub(a, b) => bin(f, a, "-", b),
            Expr::Mul(a, b) => bin(f, a, "*", b),
            Expr::Div(a, b) => bin(f, a, "/", b),
            Expr::Pow(e, n) => {
                e.fmt_atom(f)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl serde::Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

macro_rules! expr_binop {
    ($tr:ident, $method:ident, $variant:ident) => {
        impl ops::$tr for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }
    };
}

expr_binop!(Add, add, Add);
expr_binop!(Sub, sub, Sub);
expr_binop!(Mul, mul, Mul);
expr_binop!(Div, div, Div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn evaluates_examples() {
        assert_eq!(p("-x1").eval(&[0.1]).unwrap(), -0.1);
        assert!((p("-x1 + x1^2").eval(&[0.5]).unwrap() + 0.25).abs() < 1e-15);
        assert!((p("-x1 + x1^2").eval(&[0.1]).unwrap() + 0.09).abs() < 1e-15);
    }

    #[test]
    fn evaluation_errors() {
        assert_eq!(p("1 / x1").eval(&[0.0]), Err(EvalError::DivisionByZero));
        assert!(matches!(p("sqrt(x1)").eval(&[-1.0]), Err(EvalError::Domain(_))));
        assert!(matches!(p("x2").eval(&[1.0]), Err(EvalError::Dimension { needed: 2, given: 1 })));
    }

    #[test]
    fn gradients() {
        assert_eq!(p("x1^2").grad(&[2.0]).unwrap(), vec![4.0]);
        assert_eq!(p("-x1 + x1^2").grad(&[0.5]).unwrap(), vec![0.0]);
        let g = p("x1 * exp(x2) / (1 + x2^2)").grad(&[1.5, 0.3]).unwrap();
        let e = 0.3f64.exp();
        let q = 1.0 + 0.09;
        assert!((g[0] - e / q).abs() < 1e-14);
        assert!((g[1] - 1.5 * (e * q - e * 0.6) / (q * q)).abs() < 1e-14);
    }

    #[test]
    fn non_differentiable_nodes_are_rejected() {
        for s in ["abs(x1)", "min(x1, 1)", "max(x1, x1^2)"] {
            let e = p(s);
            assert!(!e.is_differentiable());
            assert!(matches!(e.grad(&[0.3]), Err(EvalError::NonDifferentiable(_))));
        }
        assert!(p("smoothplus(x1 - 0.2, 200)").is_differentiable());
    }

    #[test]
    fn interval_examples() {
        let b = IntervalBox::from_bounds(&[[0.0, 0.5]]).unwrap();
        assert_eq!(p("-x1").eval_interval(&b).unwrap(), Interval::new(-0.5, 0.0));
        let r = p("-x1 + x1^2").eval_interval(&b).unwrap();
        // true range is [-0.25, 0]
        assert!(r.lo <= -0.25 && r.hi >= 0.0);
        assert!(matches!(
            p("sqrt(x1 - 0.1)").eval_interval(&b),
            Err(EvalError::Domain(_))
        ));
    }

    #[test]
    fn printing_round_trips() {
        for s in [
            "-x1 + x1^2",
            "-x1^2",
            "-(x1^2)",
            "(x1 - x2) * (x1 + 0.25) / 3",
            "smoothplus(x1 - 0.2, 200)^2 + max(x2, 1e-7)",
            "x1^-2 - -x2",
        ] {
            let e = p(s);
            assert_eq!(p(&e.to_string()), e, "{s} printed as {e}");
        }
    }

    #[test]
    fn unary_minus_binds_inside_power() {
        // base := '-' base, so the exponent applies to the negated base
        assert_eq!(p("-x1^2"), Expr::Pow(Box::new(Expr::Neg(Box::new(Expr::Var(0)))), 2));
    }
}
