//! Dense two-phase simplex for small linear programs:
//! maximize `c·x` subject to `A x <= b`, `x >= 0`.

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `rows[i]` holds the constraint coefficients followed by the rhs.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let k = row[c];
            if k != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= k * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Maximizes `obj·x` over the current feasible basis using Bland's rule.
    /// Columns with `allowed[j] == false` never enter.
    fn optimize(&mut self, obj: &[f64], allowed: &[bool]) -> Result<(), ()> {
        loop {
            // reduced cost r_j = c_B B^-1 A_j - c_j
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut r = -obj[j];
                for (i, &bi) in self.basis.iter().enumerate() {
                    r += obj[bi] * self.rows[i][j];
                }
                if r < -EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return Err(()) };
            self.pivot(r, c);
        }
    }
}

pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    let artificial: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let cols = n + m + artificial.len();
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_art = n + m;
    for i in 0..m {
        let mut row = vec![0.0; cols + 1];
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = sign;
        row[cols] = sign * b[i];
        if b[i] < 0.0 {
            row[next_art] = 1.0;
            basis.push(next_art);
            next_art += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }
    let mut t = Tableau { rows, basis, cols };

    if !artificial.is_empty() {
        let mut phase1 = vec![0.0; cols];
        for j in n + m..cols {
            phase1[j] = -1.0;
        }
        let all = vec![true; cols];
        if t.optimize(&phase1, &all).is_err() {
            return LpOutcome::Infeasible;
        }
        let infeas: f64 = (0..m).filter(|&i| t.basis[i] >= n + m).map(|i| t.rhs(i)).sum();
        if infeas > 1e-7 {
            return LpOutcome::Infeasible;
        }
        // drive remaining (zero-valued) artificials out of the basis
        for i in 0..m {
            if t.basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| t.rows[i][j].abs() > EPS) {
                    t.pivot(i, j);
                }
            }
        }
    }

    let mut obj = vec![0.0; cols];
    obj[..n].copy_from_slice(c);
    let allowed: Vec<bool> = (0..cols).map(|j| j < n + m).collect();
    if t.optimize(&obj, &allowed).is_err() {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &bi) in t.basis.iter().enumerate() {
        if bi < n {
            x[bi] = t.rhs(i);
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let out = maximize(&[3.0, 5.0], &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]], &[4.0, 12.0, 18.0]);
        match out {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
                assert!((value - 36.0).abs() < 1e-9);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn lower_bounds_need_phase_one() {
        // max -x - y, x + y >= 2, x <= 3
        let out = maximize(&[-1.0, -1.0], &[vec![-1.0, -1.0], vec![1.0, 0.0]], &[-2.0, 3.0]);
        match out {
            LpOutcome::Optimal { value, .. } => assert!((value + 2.0).abs() < 1e-9),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        assert_eq!(maximize(&[1.0], &[vec![1.0], vec![-1.0]], &[1.0, -2.0]), LpOutcome::Infeasible);
        assert_eq!(maximize(&[1.0], &[vec![-1.0]], &[0.0]), LpOutcome::Unbounded);
    }
}
