//! Dense tableau simplex for `max c·x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! The origin is feasible, so no phase one is needed. Entering columns follow
//! Dantzig's rule and switch to Bland's rule after a run of degenerate pivots,
//! which rules out cycling. Works over any [`Scalar`]; with [`crate::Rational`]
//! every pivot is exact.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct LpSolution<S> {
    pub objective: S,
    /// Optimal primal point.
    pub x: Vec<S>,
    /// Optimal multipliers of the `A x <= b` rows.
    pub row_duals: Vec<S>,
    /// Reduced costs of the structural columns (multipliers of `x >= 0`).
    pub reduced_costs: Vec<S>,
    pub pivots: usize,
}

/// Solves the program; `a` is row-major with `b.len()` rows of `c.len()` entries.
pub fn maximize<S: Scalar>(c: &[S], a: &[Vec<S>], b: &[S]) -> Result<LpSolution<S>> {
    let m = b.len();
    let n = c.len();
    if a.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("constraint matrix shape mismatch".into()));
    }
    if b.iter().any(|v| v.is_neg()) {
        return Err(Error::InvalidArgument("right-hand side must be nonnegative".into()));
    }
    let width = n + m + 1;
    let rhs = n + m;
    // Rows 0..m are constraints, row m is the objective `z - c·x = 0`.
    let mut t = vec![S::zero(); (m + 1) * width];
    for i in 0..m {
        for j in 0..n {
            t[i * width + j] = a[i][j].clone();
        }
        t[i * width + n + i] = S::one();
        t[i * width + rhs] = b[i].clone();
    }
    for j in 0..n {
        t[m * width + j] = -c[j].clone();
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let mut pivots = 0;
    let mut degenerate_run = 0;
    loop {
        let use_bland = degenerate_run > 50;
        let obj = &t[m * width..m * width + n + m];
        let entering = if use_bland {
            obj.iter().position(|v| v.is_neg())
        } else {
            let mut best: Option<usize> = None;
            for (j, v) in obj.iter().enumerate() {
                if v.is_neg() && best.is_none_or(|b| obj[b].gt_tol(v)) {
                    best = Some(j);
                }
            }
            best
        };
        let Some(col) = entering else { break };

        let mut leave: Option<(usize, S)> = None;
        for i in 0..m {
            let aij = &t[i * width + col];
            if !aij.is_pos() {
                continue;
            }
            let ratio = t[i * width + rhs].clone() / aij.clone();
            let take = match &leave {
                None => true,
                Some((li, lr)) => lr.gt_tol(&ratio) || (ratio.eq_tol(lr) && basis[i] < basis[*li]),
            };
            if take {
                leave = Some((i, ratio));
            }
        }
        let Some((row, ratio)) = leave else { return Err(Error::Unbounded) };
        if ratio.is_zero_tol() {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        pivot(&mut t, width, m, row, col);
        basis[row] = col;
        pivots += 1;
    }

    let mut x = vec![S::zero(); n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[i * width + rhs].clone();
        }
    }
    let objective = t[m * width + rhs].clone();
    let row_duals = (0..m).map(|i| t[m * width + n + i].clone()).collect();
    let reduced_costs = (0..n).map(|j| t[m * width + j].clone()).collect();
    Ok(LpSolution { objective, x, row_duals, reduced_costs, pivots })
}

fn pivot<S: Scalar>(t: &mut [S], width: usize, m: usize, row: usize, col: usize) {
    let p = t[row * width + col].clone();
    for k in 0..width {
        let v = t[row * width + k].clone();
        if !v.is_zero() {
            t[row * width + k] = v / p.clone();
        }
    }
    let pivot_row: Vec<S> = t[row * width..(row + 1) * width].to_vec();
    let nz: Vec<usize> = (0..width).filter(|&k| !pivot_row[k].is_zero()).collect();
    for i in 0..=m {
        if i == row {
            continue;
        }
        let f = t[i * width + col].clone();
        if f.is_zero() {
            continue;
        }
        for &k in &nz {
            let delta = f.clone() * pivot_row[k].clone();
            t[i * width + k] -= delta;
        }
        if !S::EXACT {
            t[i * width + col] = S::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{q, Rational};

    #[test]
    fn textbook_program() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6).
        let c = vec![q(3, 1), q(5, 1)];
        let a = vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(2, 1)], vec![q(3, 1), q(2, 1)]];
        let b = vec![q(4, 1), q(12, 1), q(18, 1)];
        let sol = maximize(&c, &a, &b).unwrap();
        assert_eq!(sol.objective, q(36, 1));
        assert_eq!(sol.x, vec![q(2, 1), q(6, 1)]);
        // Strong duality: b·y = objective.
        let by = b.iter().zip(&sol.row_duals).fold(Rational::from_int(0), |acc, (bi, yi)| acc + bi * yi);
        assert_eq!(by, sol.objective);
    }

    #[test]
    fn unbounded_is_reported() {
        let c = vec![q(1, 1)];
        let a = vec![vec![q(-1, 1)]];
        let b = vec![q(1, 1)];
        assert!(matches!(maximize(&c, &a, &b), Err(Error::Unbounded)));
    }

    #[test]
    fn float_program() {
        let c = vec![3.0, 5.0];
        let a = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]];
        let b = vec![4.0, 12.0, 18.0];
        let sol = maximize(&c, &a, &b).unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-9);
    }
}
