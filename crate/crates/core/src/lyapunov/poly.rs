//! Polynomial candidates fitted by linear programming.

use super::{discrete_directions, synthesis_failure, LyapunovError};
use crate::dynamics::{SystemSpec, TimeDomain};
use crate::expr::Expr;
use crate::interval::IntervalBox;
use crate::simplex::{maximize, LpOutcome};

/// Lower-bound normalization `V >= FLOOR · s²`.
const FLOOR: f64 = 0.01;
const COEFF_BOUND: f64 = 1.0;
const RATE_BOUND: f64 = 100.0;

/// Exponent tuples with total degree in `2..=degree`.
fn exponents(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == dim {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(dim, left - e, cur, out);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    rec(dim, degree, &mut Vec::new(), &mut all);
    all.retain(|e| e.iter().sum::<u32>() >= 2);
    all
}

fn monomial(e: &[u32], z: &[f64]) -> f64 {
    e.iter().zip(z).map(|(&k, &v)| v.powi(k as i32)).product()
}

fn monomial_grad(e: &[u32], z: &[f64]) -> Vec<f64> {
    (0..e.len())
        .map(|i| {
            if e[i] == 0 {
                return 0.0;
            }
            let mut p = e[i] as f64 * z[i].powi(e[i] as i32 - 1);
            for j in 0..e.len() {
                if j != i {
                    p *= z[j].powi(e[j] as i32);
                }
            }
            p
        })
        .collect()
}

/// Maximizes the uniform decrease rate `t` in `rate <= -t s²` over
/// coefficient vectors, subject to `V >= FLOOR s²` at the samples.
pub(super) fn fit(
    sys: &SystemSpec,
    target: &IntervalBox,
    cells: &[IntervalBox],
    delta: f64,
    degree: u32,
    samples: usize,
) -> Result<Expr, LyapunovError> {
    if degree < 2 {
        return Err(LyapunovError::Precondition("polynomial degree must be at least 2".into()));
    }
    let dim = sys.dim;
    let c0 = target.center();
    let ex = exponents(dim, degree);
    let k = ex.len();
    let stride = (cells.len() / samples.max(1)).max(1);
    let pts: Vec<Vec<f64>> = cells.iter().step_by(stride).map(|c| c.center()).collect();
    let continuous = sys.time == TimeDomain::Continuous;
    let n_sigma = if continuous { pts.len() * dim } else { 0 };
    let nv = 2 * k + n_sigma + 1;
    let t_col = nv - 1;
    let mut a: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    // coefficient c_j = x[j] - x[k + j]
    let push_lin = |coef: &[f64], extra: &[(usize, f64)], rhs: f64, a: &mut Vec<Vec<f64>>, b: &mut Vec<f64>| {
        let mut row = vec![0.0; nv];
        for j in 0..k {
            row[j] = coef[j];
            row[k + j] = -coef[j];
        }
        for &(c, v) in extra {
            row[c] += v;
        }
        a.push(row);
        b.push(rhs);
    };

    for (pi, x) in pts.iter().enumerate() {
        let z: Vec<f64> = x.iter().zip(&c0).map(|(a, b)| a - b).collect();
        let s = target.distance_point(x);
        let s2 = s * s;
        let m: Vec<f64> = ex.iter().map(|e| monomial(e, &z)).collect();
        let neg: Vec<f64> = m.iter().map(|v| -v).collect();
        push_lin(&neg, &[], -FLOOR * s2, &mut a, &mut b);
        let f = sys.eval(x)?;
        if continuous {
            let grads: Vec<Vec<f64>> = ex.iter().map(|e| monomial_grad(e, &z)).collect();
            let lie: Vec<f64> = grads.iter().map(|g| g.iter().zip(&f).map(|(a, b)| a * b).sum()).collect();
            let mut extra: Vec<(usize, f64)> = (0..dim).map(|i| (2 * k + pi * dim + i, delta)).collect();
            extra.push((t_col, s2));
            push_lin(&lie, &extra, 0.0, &mut a, &mut b);
            for i in 0..dim {
                let gi: Vec<f64> = grads.iter().map(|g| g[i]).collect();
                let ngi: Vec<f64> = gi.iter().map(|v| -v).collect();
                let sigma = 2 * k + pi * dim + i;
                push_lin(&gi, &[(sigma, -1.0)], 0.0, &mut a, &mut b);
                push_lin(&ngi, &[(sigma, -1.0)], 0.0, &mut a, &mut b);
            }
        } else {
            for d in discrete_directions(dim, delta) {
                let zy: Vec<f64> = f.iter().zip(&d).zip(&c0).map(|((fi, di), ci)| fi + di - ci).collect();
                let diff: Vec<f64> = ex.iter().zip(&m).map(|(e, mx)| monomial(e, &zy) - mx).collect();
                push_lin(&diff, &[(t_col, s2)], 0.0, &mut a, &mut b);
            }
        }
    }
    for j in 0..2 * k {
        let mut row = vec![0.0; nv];
        row[j] = 1.0;
        a.push(row);
        b.push(COEFF_BOUND);
    }
    let mut row = vec![0.0; nv];
    row[t_col] = 1.0;
    a.push(row);
    b.push(RATE_BOUND);

    let mut obj = vec![0.0; nv];
    obj[t_col] = 1.0;
    let x = match maximize(&obj, &a, &b) {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible => return Err(synthesis_failure("the polynomial program is infeasible", None)),
        LpOutcome::Unbounded => return Err(synthesis_failure("the polynomial program is unbounded", None)),
    };
    if !(x[t_col] > 0.0) {
        return Err(synthesis_failure("no polynomial candidate decreases strictly", None));
    }
    let mut v: Option<Expr> = None;
    for (j, e) in ex.iter().enumerate() {
        let c = x[j] - x[k + j];
        if c.abs() < 1e-12 {
            continue;
        }
        let mut term = Expr::num(c);
        for (i, &p) in e.iter().enumerate() {
            if p > 0 {
                term = term * (Expr::var(i) - Expr::num(c0[i])).powi(p as i32);
            }
        }
        v = Some(match v {
            None => term,
            Some(acc) => acc + term,
        });
    }
    v.ok_or_else(|| synthesis_failure("all polynomial coefficients vanished", None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_enumeration() {
        assert_eq!(exponents(1, 4).len(), 3);
        // degree 2 and 3 monomials in two variables: 3 + 4
        assert_eq!(exponents(2, 3).len(), 7);
        let g = monomial_grad(&[2, 1], &[3.0, 5.0]);
        assert_eq!(g, vec![30.0, 9.0]);
    }
}
