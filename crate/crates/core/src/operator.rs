//! Linear operators on `F(M)` stored column-wise over Dirac coordinates, and
//! their exact operator norms.

use rayon::prelude::*;

use crate::metric::PointedMetricSpace;
use crate::scalar::Scalar;
use crate::transport::{kr_norm, Measure};

/// Column `x` holds the image of `δ_x` as sparse `(point, coefficient)` pairs,
/// sorted by point, never mentioning the base (whose Dirac is zero). The base
/// column is always empty.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOperator<S> {
    base: usize,
    cols: Vec<Vec<(usize, S)>>,
}

impl<S: Scalar> LinearOperator<S> {
    pub fn zero(space: &PointedMetricSpace<S>) -> Self {
        LinearOperator { base: space.base(), cols: vec![Vec::new(); space.len()] }
    }

    pub fn identity(space: &PointedMetricSpace<S>) -> Self {
        let base = space.base();
        let cols = (0..space.len())
            .map(|x| if x == base { Vec::new() } else { vec![(x, S::one())] })
            .collect();
        LinearOperator { base, cols }
    }

    /// Builds from per-point images. Base entries and zeros are dropped.
    pub fn from_columns(space: &PointedMetricSpace<S>, cols: Vec<Vec<(usize, S)>>) -> Self {
        assert_eq!(cols.len(), space.len(), "one column per point");
        let base = space.base();
        let cols = cols
            .into_iter()
            .enumerate()
            .map(|(x, col)| if x == base { Vec::new() } else { normalize(col, base) })
            .collect();
        LinearOperator { base, cols }
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn column(&self, x: usize) -> &[(usize, S)] {
        &self.cols[x]
    }

    pub fn apply(&self, space: &PointedMetricSpace<S>, mu: &Measure<S>) -> Measure<S> {
        let mut out = Measure::zero(space);
        for (x, a) in mu.iter() {
            for (r, t) in &self.cols[x] {
                out.add_at(*r, a.clone() * t.clone());
            }
        }
        out
    }

    /// Adjoint action on function values: `(T* f)(x) = Σ_r T[r][x] f(r)`.
    pub fn adjoint_apply(&self, f: &[S]) -> Vec<S> {
        self.cols
            .iter()
            .map(|col| col.iter().fold(S::zero(), |acc, (r, t)| acc + t.clone() * f[*r].clone()))
            .collect()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let cols = other
            .cols
            .iter()
            .map(|col| {
                let mut acc: Vec<(usize, S)> = Vec::new();
                for (mid, a) in col {
                    for (r, b) in &self.cols[*mid] {
                        acc.push((*r, a.clone() * b.clone()));
                    }
                }
                normalize(acc, self.base)
            })
            .collect();
        LinearOperator { base: self.base, cols }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: &S, other: &Self, b: &S) -> Self {
        let cols = self
            .cols
            .iter()
            .zip(&other.cols)
            .map(|(c1, c2)| {
                let acc = c1
                    .iter()
                    .map(|(r, v)| (*r, a.clone() * v.clone()))
                    .chain(c2.iter().map(|(r, v)| (*r, b.clone() * v.clone())))
                    .collect();
                normalize(acc, self.base)
            })
            .collect();
        LinearOperator { base: self.base, cols }
    }

    pub fn plus(&self, other: &Self) -> Self {
        self.combine(&S::one(), other, &S::one())
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.combine(&S::one(), other, &-S::one())
    }

    pub fn scaled(&self, c: &S) -> Self {
        self.combine(c, self, &S::zero())
    }

    /// Entry-wise equality up to scalar tolerance.
    pub fn approx_eq(&self, other: &Self) -> bool {
        if self.cols.len() != other.cols.len() {
            return false;
        }
        self.cols.iter().zip(&other.cols).all(|(a, b)| {
            let diff = normalize(
                a.iter().cloned().chain(b.iter().map(|(r, v)| (*r, -v.clone()))).collect(),
                self.base,
            );
            diff.iter().all(|(_, v)| v.is_zero_tol())
        })
    }

    /// Dense matrix over non-base coordinates: `m[row][col]`.
    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let coords: Vec<usize> = (0..self.cols.len()).filter(|&x| x != self.base).collect();
        let pos = |p: usize| if p < self.base { p } else { p - 1 };
        let k = coords.len();
        let mut m = vec![vec![S::zero(); k]; k];
        for (c, &x) in coords.iter().enumerate() {
            for (r, v) in &self.cols[x] {
                m[pos(*r)][c] = v.clone();
            }
        }
        m
    }

    pub fn rank(&self) -> usize {
        matrix_rank(self.to_dense())
    }

    pub fn nonzeros(&self) -> usize {
        self.cols.iter().map(|c| c.len()).sum()
    }
}

pub(crate) fn normalize<S: Scalar>(mut col: Vec<(usize, S)>, base: usize) -> Vec<(usize, S)> {
    col.retain(|(r, _)| *r != base);
    col.sort_by_key(|(r, _)| *r);
    let mut out: Vec<(usize, S)> = Vec::with_capacity(col.len());
    for (r, v) in col {
        match out.last_mut() {
            Some((lr, lv)) if *lr == r => *lv += v,
            _ => out.push((r, v)),
        }
    }
    out.retain(|(_, v)| !v.is_zero() && (S::EXACT || !v.is_zero_tol()));
    out
}

/// Rank by Gaussian elimination (exact for rationals, partial pivoting with
/// tolerance for floats).
pub fn matrix_rank<S: Scalar>(mut m: Vec<Vec<S>>) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let mut pivot: Option<usize> = None;
        for r in rank..rows {
            if m[r][c].is_zero_tol() {
                continue;
            }
            let better = match pivot {
                None => true,
                Some(p) => !S::EXACT && m[r][c].abs_val() > m[p][c].abs_val(),
            };
            if better {
                pivot = Some(r);
                if S::EXACT {
                    break;
                }
            }
        }
        let Some(p) = pivot else { continue };
        m.swap(rank, p);
        let pv = m[rank][c].clone();
        for r in (rank + 1)..rows {
            if m[r][c].is_zero() {
                continue;
            }
            let f = m[r][c].clone() / pv.clone();
            for k in c..cols {
                let delta = f.clone() * m[rank][k].clone();
                m[r][k] -= delta;
            }
        }
        rank += 1;
    }
    rank
}

/// Exact norm of an operator on `F(M)` together with an attaining pair.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorNorm<S> {
    pub value: S,
    /// Molecule `(δ_x - δ_y)/d(x,y)` attaining the norm; `None` for the zero operator.
    pub attained_at: Option<(usize, usize)>,
}

/// `‖T‖` as the maximum of `‖T(δ_x - δ_y)‖ / d(x,y)` over all pairs of points,
/// base included. The unit ball of `F(M)` is the convex hull of molecules, so
/// this is exact. Pairs are evaluated in parallel; the reduction keeps the
/// largest value and, among equal values, the first pair in index order.
pub fn operator_norm<S: Scalar>(space: &PointedMetricSpace<S>, t: &LinearOperator<S>) -> OperatorNorm<S> {
    let n = space.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|x| ((x + 1)..n).map(move |y| (x, y))).collect();
    let best = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(x, y))| {
            let mut img = Measure::zero(space);
            for (r, v) in t.column(x) {
                img.add_at(*r, v.clone());
            }
            for (r, v) in t.column(y) {
                img.add_at(*r, -v.clone());
            }
            let val = if img.is_zero() { S::zero() } else { kr_norm(space, &img) / space.d(x, y).clone() };
            (val, k)
        })
        .reduce_with(pick_max);
    match best {
        Some((value, k)) if value.is_pos() => OperatorNorm { value, attained_at: Some(pairs[k]) },
        _ => OperatorNorm { value: S::zero(), attained_at: None },
    }
}

/// Deterministic max-reduction: larger value wins, ties go to the smaller index.
pub(crate) fn pick_max<S: PartialOrd>(a: (S, usize), b: (S, usize)) -> (S, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}
