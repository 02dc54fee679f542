//! Extensional projections on truncated circle unions.
//!
//! `D_i = {0, x_1, ..., x_i}`. For `x` on a partially covered circle, `P_i f(x)`
//! interpolates linearly (in rim-walk length) between the nearest `D_i` points
//! reached walking left and walking right; covered circles keep `f`, circles
//! above level `k(i)` get 0. `T_i` is the predual matrix: the column of `δ_x`
//! is `γ δ_{ν^l} + (1 − γ) δ_{ν^r}`.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::CoefficientLedger;
use crate::error::{Error, Result};
use crate::metric::{directed_distance, level_of, CircleUnionLayout, Direction, PointedMetricSpace};
use crate::operator::{operator_norm, LinearOperator};
use crate::scalar::{Rational, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircleUnionEnumeration {
    pub layout: CircleUnionLayout,
    /// `points[i]` is the space index of `x_i`; `points[0]` is the centre.
    points: Vec<usize>,
    position: Vec<usize>,
}

/// The oriented enumeration: each circle walked rightwards from its first
/// rim point, so `x_{i+1}` is right-adjacent to `x_i` within a circle.
pub fn enumerate_circle_union(k_max: usize) -> Result<CircleUnionEnumeration> {
    CircleUnionEnumeration::with_permutations(k_max, &[])
}

impl CircleUnionEnumeration {
    /// Any enumeration that lists circles in increasing level works; `perms[k-1]`
    /// (a permutation of the rim indices `1..=4^k`) reorders circle `k`.
    /// Missing entries default to the oriented order.
    pub fn with_permutations(k_max: usize, perms: &[Vec<usize>]) -> Result<Self> {
        let layout = CircleUnionLayout::new(k_max)?;
        if perms.len() > k_max {
            return Err(Error::InvalidArgument(format!("{} permutations for {k_max} circles", perms.len())));
        }
        let mut points = vec![0];
        for k in 1..=k_max {
            let size = CircleUnionLayout::circle_size(k);
            match perms.get(k - 1) {
                Some(p) => {
                    let mut seen = vec![false; size + 1];
                    for &j in p {
                        if j == 0 || j > size || std::mem::replace(&mut seen[j], true) {
                            return Err(Error::InvalidArgument(format!("permutation for circle {k} is not a permutation of 1..={size}")));
                        }
                    }
                    if p.len() != size {
                        return Err(Error::InvalidArgument(format!("permutation for circle {k} has {} entries, expected {size}", p.len())));
                    }
                    points.extend(p.iter().map(|&j| layout.point(k, j)));
                }
                None => points.extend(layout.level_range(k)),
            }
        }
        let mut position = vec![0; points.len()];
        for (i, &x) in points.iter().enumerate() {
            position[x] = i;
        }
        Ok(CircleUnionEnumeration { layout, points, position })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the last point.
    pub fn last(&self) -> usize {
        self.points.len() - 1
    }

    pub fn point(&self, i: usize) -> usize {
        self.points[i]
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Enumeration index of space point `x`.
    pub fn position(&self, x: usize) -> usize {
        self.position[x]
    }

    /// `k(i)`: the level of the circle containing `x_i` (0 for the centre).
    pub fn level(&self, i: usize) -> usize {
        level_of(i)
    }

    pub fn level_range(&self, k: usize) -> Range<usize> {
        self.layout.level_range(k)
    }

    pub fn in_d(&self, i: usize, x: usize) -> bool {
        self.position[x] <= i
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::OutOfRange { index: i, limit: self.len() });
        }
        Ok(())
    }

    /// Nearest `D_i` points walking left and right along the rim of `x`'s
    /// circle; `(0, 0)` for the centre and `(x, x)` for `x ∈ D_i`.
    pub fn neighbours(&self, i: usize, x: usize) -> Result<(usize, usize)> {
        self.check_index(i)?;
        if x >= self.len() {
            return Err(Error::OutOfRange { index: x, limit: self.len() });
        }
        if self.in_d(i, x) {
            return Ok((x, x));
        }
        let (k, j) = self.layout.locate(x).expect("centre lies in every D_i");
        if k > self.level(i) {
            return Err(Error::InvalidArgument(format!(
                "point {x} lies on circle {k}, above level {} of index {i}",
                self.level(i)
            )));
        }
        let size = CircleUnionLayout::circle_size(k);
        let at = |s: usize| self.layout.point(k, (s - 1) % size + 1);
        let left = (1..size).map(|s| at(j + size - s)).find(|&y| self.in_d(i, y));
        let right = (1..size).map(|s| at(j + s)).find(|&y| self.in_d(i, y));
        match (left, right) {
            (Some(l), Some(r)) => Ok((l, r)),
            // Level k(i) always holds x_{start..=i}; lower circles are full.
            _ => unreachable!("covered circle has a D_i point"),
        }
    }

    /// `(ν^l, ν^r, γ)`: the interpolation at `x` is `γ f(ν^l) + (1−γ) f(ν^r)`.
    fn weights(&self, i: usize, x: usize) -> Result<(usize, usize, Rational)> {
        let (l, r) = self.neighbours(i, x)?;
        if l == x {
            return Ok((x, x, Rational::from_int(1)));
        }
        let (k, _) = self.layout.locate(x).expect("not the centre");
        let size = CircleUnionLayout::circle_size(k);
        let rim = |p: usize| self.layout.locate(p).expect("rim point").1;
        let dl = directed_distance(size, rim(x), rim(l), Direction::Left) as i64;
        let dr = directed_distance(size, rim(x), rim(r), Direction::Right) as i64;
        Ok((l, r, Rational::new(dr as i128, (dl + dr) as i128)))
    }

    /// `I_i(f, x)`; `f` is indexed by space point and only read on `D_i`.
    pub fn interpolate(&self, i: usize, f: &[Rational], x: usize) -> Result<Rational> {
        let (l, r, g) = self.weights(i, x)?;
        Ok(g * f[l] + (Rational::from_int(1) - g) * f[r])
    }

    /// `P_i f` on the whole space.
    pub fn apply_extension(&self, i: usize, f: &[Rational]) -> Result<Vec<Rational>> {
        self.check_index(i)?;
        if f.len() != self.len() {
            return Err(Error::InvalidArgument(format!("function has {} values, space has {}", f.len(), self.len())));
        }
        let top = self.level(i);
        (0..self.len())
            .map(|x| match self.layout.locate(x) {
                Some((k, _)) if k > top => Ok(Rational::from_int(0)),
                _ => self.interpolate(i, f, x),
            })
            .collect()
    }

    /// Predual matrix `T_i` over the space's point indices.
    pub fn extension_operator(&self, space: &PointedMetricSpace<Rational>, i: usize) -> Result<LinearOperator<Rational>> {
        self.check_index(i)?;
        if space.len() != self.len() {
            return Err(Error::InvalidArgument("space does not match the enumeration".into()));
        }
        let top = self.level(i);
        let one = Rational::from_int(1);
        let cols = (0..self.len())
            .map(|x| match self.layout.locate(x) {
                None => Ok(Vec::new()),
                Some((k, _)) if k > top => Ok(Vec::new()),
                Some(_) => {
                    let (l, r, g) = self.weights(i, x)?;
                    Ok(if l == r { vec![(l, one)] } else { vec![(l, g), (r, one - g)] })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearOperator::from_columns(space, cols))
    }

    /// All `T_0, ..., T_last`.
    pub fn extension_family(&self, space: &PointedMetricSpace<Rational>) -> Result<Vec<LinearOperator<Rational>>> {
        (0..self.len()).map(|i| self.extension_operator(space, i)).collect()
    }

    /// Row `k` is the column of `x_k` in `T_{k−1}`, in enumeration positions:
    /// the one-step extension that defines `f(x_k)` from `D_{k−1}`.
    pub fn ledger(&self, space: &PointedMetricSpace<Rational>) -> Result<CoefficientLedger<Rational>> {
        let mut rows = vec![Vec::new()];
        for k in 1..self.len() {
            let t = self.extension_operator(space, k - 1)?;
            rows.push(t.column(self.points[k]).iter().map(|(r, v)| (self.position[*r], *v)).collect());
        }
        Ok(CoefficientLedger { rows })
    }
}

/// Pair classes of the Lipschitz argument, counted over every checked pair.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CaseCoverage {
    pub centre: usize,
    pub cross_circle: usize,
    pub uncovered: usize,
    pub same_circle_shared: usize,
    /// Same circle, different neighbours, `y` closer walking left from `x`.
    pub same_circle_left: usize,
    pub same_circle_right: usize,
}

impl CaseCoverage {
    pub fn all_hit(&self) -> bool {
        [self.centre, self.cross_circle, self.uncovered, self.same_circle_shared, self.same_circle_left, self.same_circle_right]
            .iter()
            .all(|&c| c > 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexReport {
    pub i: usize,
    pub level: usize,
    pub norm: String,
    pub norm_is_one: bool,
    pub rank: usize,
    pub rank_ok: bool,
    /// `T_{i+1} T_i = T_i T_{i+1} = T_i` (vacuous for the last index).
    pub commutes_with_next: bool,
    pub fixes_d: bool,
    pub convex_columns: bool,
}

impl IndexReport {
    pub fn passed(&self) -> bool {
        self.norm_is_one && self.rank_ok && self.commutes_with_next && self.fixes_d && self.convex_columns
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtensionalReport {
    pub k_max: usize,
    pub points: usize,
    pub per_index: Vec<IndexReport>,
    pub lipschitz_trials: usize,
    /// `(i, x, y)` where `P_i f` exceeded the Lipschitz constant of `f` on `D_i`.
    pub lipschitz_violations: Vec<(usize, usize, usize)>,
    pub coverage: CaseCoverage,
    pub all_passed: bool,
    /// Circles above level `k(i)` are sent to 0, as in the construction;
    /// other tail values are not explored.
    pub note: String,
}

/// Exact checks of the extensional family for `i` in `range`: norms, ranks,
/// one-step commutation, `T_i δ_x = δ_x` on `D_i`, convex columns, and the
/// Lipschitz bound on `trials` random functions per index.
pub fn verify_extensional_suite(
    en: &CircleUnionEnumeration,
    space: &PointedMetricSpace<Rational>,
    range: Range<usize>,
    trials: usize,
    seed: u64,
) -> Result<ExtensionalReport> {
    if range.end > en.len() || range.start >= range.end {
        return Err(Error::InvalidArgument(format!("index range {range:?} outside 0..{}", en.len())));
    }
    let family = en.extension_family(space)?;
    let one = Rational::from_int(1);
    let per_index: Vec<IndexReport> = range
        .clone()
        .into_par_iter()
        .map(|i| {
            let t = &family[i];
            let norm = operator_norm(space, t).value;
            let rank = t.rank();
            let commutes_with_next = match family.get(i + 1) {
                Some(next) => next.compose(t).approx_eq(t) && t.compose(next).approx_eq(t),
                None => true,
            };
            let fixes_d = (1..=i).all(|p| {
                let x = en.point(p);
                t.column(x) == [(x, one)]
            });
            let convex_columns = (1..en.len()).all(|x| {
                let col = t.column(x);
                let sum = col.iter().fold(Rational::from_int(0), |a, (_, v)| a + v);
                col.iter().all(|(_, v)| v.is_pos() && *v <= one) && (col.is_empty() || sum == one)
            });
            IndexReport {
                i,
                level: en.level(i),
                norm: norm.to_string(),
                norm_is_one: norm == one || (i == 0 && norm == Rational::from_int(0)),
                rank,
                rank_ok: rank == i,
                commutes_with_next,
                fixes_d,
                convex_columns,
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut coverage = CaseCoverage::default();
    for i in range {
        for _ in 0..trials {
            let mut f = vec![Rational::from_int(0); en.len()];
            for p in 1..=i {
                f[en.point(p)] = Rational::from_int(rng.gen_range(-40..=40));
            }
            let lip_d = lipschitz_on(space, &f, |x| en.in_d(i, x));
            let pf = en.apply_extension(i, &f)?;
            for x in 0..en.len() {
                for y in (x + 1)..en.len() {
                    classify(en, i, x, y, &mut coverage)?;
                    let diff = (pf[x] - pf[y]).abs_val();
                    if diff > lip_d * space.d(x, y) {
                        violations.push((i, x, y));
                    }
                }
            }
        }
    }
    let all_passed = per_index.iter().all(IndexReport::passed) && violations.is_empty();
    Ok(ExtensionalReport {
        k_max: en.layout.k_max,
        points: en.len(),
        per_index,
        lipschitz_trials: trials,
        lipschitz_violations: violations,
        coverage,
        all_passed,
        note: "P_i f is set to 0 on circles above level k(i); alternative tail values are not explored".into(),
    })
}

fn lipschitz_on(space: &PointedMetricSpace<Rational>, f: &[Rational], keep: impl Fn(usize) -> bool) -> Rational {
    let pts: Vec<usize> = (0..f.len()).filter(|&x| keep(x)).collect();
    let mut best = Rational::from_int(0);
    for (a, &x) in pts.iter().enumerate() {
        for &y in &pts[a + 1..] {
            let r = (f[x] - f[y]).abs_val() / space.d(x, y);
            if r > best {
                best = r;
            }
        }
    }
    best
}

fn classify(en: &CircleUnionEnumeration, i: usize, x: usize, y: usize, cov: &mut CaseCoverage) -> Result<()> {
    let top = en.level(i);
    match (en.layout.locate(x), en.layout.locate(y)) {
        (None, _) | (_, None) => cov.centre += 1,
        (Some((kx, _)), Some((ky, _))) if kx > top || ky > top => cov.uncovered += 1,
        (Some((kx, _)), Some((ky, _))) if kx != ky => cov.cross_circle += 1,
        (Some((k, jx)), Some((_, jy))) => {
            if en.neighbours(i, x)? == en.neighbours(i, y)? {
                cov.same_circle_shared += 1;
            } else {
                let size = CircleUnionLayout::circle_size(k);
                if directed_distance(size, jx, jy, Direction::Left) <= directed_distance(size, jx, jy, Direction::Right) {
                    cov.same_circle_left += 1;
                } else {
                    cov.same_circle_right += 1;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::build_circle_union;
    use crate::scalar::q;

    #[test]
    fn levels() {
        let en = enumerate_circle_union(3).unwrap();
        assert_eq!(en.level(1), 1);
        assert_eq!(en.level(4), 1);
        assert_eq!(en.level(5), 2);
        assert_eq!(en.level(21), 3);
        assert_eq!(en.len(), 85);
    }

    #[test]
    fn neighbour_examples() {
        let en = enumerate_circle_union(2).unwrap();
        for x in 6..21 {
            assert_eq!(en.neighbours(5, x).unwrap(), (5, 5));
        }
        // x_6 is rim point 2 of C16, three steps right is rim point 5.
        let x = en.layout.point(2, 5);
        assert_eq!(en.neighbours(6, x).unwrap(), (6, 5));
        assert_eq!(en.neighbours(6, 6).unwrap(), (6, 6));
        assert_eq!(en.neighbours(6, 0).unwrap(), (0, 0));
        assert!(en.neighbours(3, 7).is_err());
    }

    #[test]
    fn interpolation_example() {
        let en = enumerate_circle_union(2).unwrap();
        let mut f = vec![q(0, 1); 21];
        f[6] = q(15, 1);
        let x = en.layout.point(2, 5);
        assert_eq!(en.interpolate(6, &f, x).unwrap(), q(12, 1));
        assert_eq!(en.interpolate(6, &f, 6).unwrap(), q(15, 1));
        f[5] = q(7, 1);
        assert_eq!(en.interpolate(5, &f, 12).unwrap(), q(7, 1));
    }

    #[test]
    fn operator_columns() {
        let en = enumerate_circle_union(2).unwrap();
        let space = build_circle_union(2).unwrap();
        let t5 = en.extension_operator(&space, 5).unwrap();
        assert_eq!(t5.column(9), &[(5, q(1, 1))]);
        let t4 = en.extension_operator(&space, 4).unwrap();
        assert!(t4.column(9).is_empty());
        assert_eq!(t4.column(3), &[(3, q(1, 1))]);
        assert!(en.extension_operator(&space, 21).is_err());
    }

    #[test]
    fn small_suite_passes() {
        let en = enumerate_circle_union(1).unwrap();
        let space = crate::metric::build_circle_union(1).unwrap();
        let r = verify_extensional_suite(&en, &space, 0..5, 3, 1).unwrap();
        assert!(r.all_passed, "{r:?}");
    }

    #[test]
    fn bad_permutation() {
        assert!(CircleUnionEnumeration::with_permutations(1, &[vec![1, 2, 2, 4]]).is_err());
        assert!(CircleUnionEnumeration::with_permutations(1, &[vec![4, 2, 1, 3]]).is_ok());
    }
}
