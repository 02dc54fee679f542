//! Finite pointed metric spaces and the concrete families built on them:
//! graph circles with a centre, unions of circles of radius `4^k` sharing one
//! centre, and integer grid nets in Euclidean space.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

/// A finite metric space with a distinguished base point.
///
/// Immutable once built; every constructor goes through [`validate_metric`].
#[derive(Clone, Debug, PartialEq)]
pub struct PointedMetricSpace<S> {
    labels: Vec<String>,
    dist: Vec<S>,
    base: usize,
}

impl<S: Scalar> PointedMetricSpace<S> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> &S {
        &self.dist[i * self.labels.len() + j]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Indices of every point other than the base, in index order.
    pub fn non_base(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| i != self.base)
    }

    pub fn dist_rows(&self) -> Vec<Vec<S>> {
        self.dist.chunks(self.len()).map(|r| r.to_vec()).collect()
    }

    /// Smallest off-diagonal distance (the separation constant).
    pub fn min_separation(&self) -> Option<S> {
        let n = self.len();
        let mut best: Option<S> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.d(i, j);
                if best.as_ref().is_none_or(|b| d < b) {
                    best = Some(d.clone());
                }
            }
        }
        best
    }
}

/// One failed metric axiom, tagged with the witnessing indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Empty,
    LabelCount { labels: usize, rows: usize },
    DuplicateLabel { i: usize, j: usize },
    NotSquare { row: usize, len: usize },
    BaseOutOfRange { base: usize },
    NonFinite { i: usize, j: usize },
    Negative { i: usize, j: usize },
    NonzeroDiagonal { i: usize },
    ZeroOffDiagonal { i: usize, j: usize },
    Asymmetric { i: usize, j: usize },
    /// `d(i, k) > d(i, j) + d(j, k)`.
    Triangle { i: usize, j: usize, k: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "no points"),
            Violation::LabelCount { labels, rows } => {
                write!(f, "{labels} labels but {rows} matrix rows")
            }
            Violation::DuplicateLabel { i, j } => write!(f, "points {i} and {j} share a label"),
            Violation::NotSquare { row, len } => write!(f, "row {row} has length {len}"),
            Violation::BaseOutOfRange { base } => write!(f, "base index {base} out of range"),
            Violation::NonFinite { i, j } => write!(f, "d({i},{j}) is not finite"),
            Violation::Negative { i, j } => write!(f, "d({i},{j}) is negative"),
            Violation::NonzeroDiagonal { i } => write!(f, "d({i},{i}) is nonzero"),
            Violation::ZeroOffDiagonal { i, j } => write!(f, "d({i},{j}) = 0 for distinct points"),
            Violation::Asymmetric { i, j } => write!(f, "d({i},{j}) != d({j},{i})"),
            Violation::Triangle { i, j, k } => {
                write!(f, "triangle inequality fails: d({i},{k}) > d({i},{j}) + d({j},{k})")
            }
        }
    }
}

/// Every violation found while validating a candidate space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown: Vec<String> = self.violations.iter().take(20).map(|v| v.to_string()).collect();
        write!(f, "{}", shown.join("; "))?;
        if self.violations.len() > 20 {
            write!(f, "; ... ({} more)", self.violations.len() - 20)?;
        }
        Ok(())
    }
}

impl std::error::Error for MetricReport {}

impl From<MetricReport> for Error {
    fn from(r: MetricReport) -> Self {
        Error::InvalidMetric(r)
    }
}

/// Checks every metric axiom and returns the space, or a report listing all
/// violations.
///
/// Float spaces compare through the scalar tolerance; exact spaces compare
/// exactly.
pub fn validate_metric<S: Scalar>(
    labels: Vec<String>,
    dist: Vec<Vec<S>>,
    base: usize,
) -> Result<PointedMetricSpace<S>, MetricReport> {
    let n = dist.len();
    let mut v = Vec::new();
    if n == 0 {
        v.push(Violation::Empty);
        return Err(MetricReport { violations: v });
    }
    if labels.len() != n {
        v.push(Violation::LabelCount { labels: labels.len(), rows: n });
    }
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            if labels[i] == labels[j] {
                v.push(Violation::DuplicateLabel { i, j });
            }
        }
    }
    for (row, r) in dist.iter().enumerate() {
        if r.len() != n {
            v.push(Violation::NotSquare { row, len: r.len() });
        }
    }
    if base >= n {
        v.push(Violation::BaseOutOfRange { base });
    }
    if !v.is_empty() {
        return Err(MetricReport { violations: v });
    }

    let zero = S::zero();
    let mut finite = true;
    for i in 0..n {
        for j in 0..n {
            let d = &dist[i][j];
            if !d.is_finite_value() {
                v.push(Violation::NonFinite { i, j });
                finite = false;
                continue;
            }
            if i == j {
                if !d.is_zero_tol() {
                    v.push(Violation::NonzeroDiagonal { i });
                }
            } else {
                if d.is_neg() {
                    v.push(Violation::Negative { i, j });
                } else if !d.gt_tol(&zero) {
                    v.push(Violation::ZeroOffDiagonal { i, j });
                }
                if i < j && !d.eq_tol(&dist[j][i]) {
                    v.push(Violation::Asymmetric { i, j });
                }
            }
        }
    }
    if finite {
        for i in 0..n {
            for k in 0..n {
                if i == k {
                    continue;
                }
                for j in 0..n {
                    if j == i || j == k {
                        continue;
                    }
                    let via = dist[i][j].clone() + dist[j][k].clone();
                    if dist[i][k].gt_tol(&via) {
                        v.push(Violation::Triangle { i, j, k });
                    }
                }
            }
        }
    }
    if !v.is_empty() {
        return Err(MetricReport { violations: v });
    }
    let flat = dist.into_iter().flatten().collect();
    Ok(PointedMetricSpace { labels, dist: flat, base })
}

/// Rim distance `min(|k-l|, n-|k-l|)` on a circle with `n` rim points.
#[inline]
pub fn rim_distance(n: usize, k: usize, l: usize) -> usize {
    let diff = k.abs_diff(l);
    diff.min(n - diff)
}

/// Distance on `C_n^0`, where index 0 is the centre and `1..=n` the rim.
#[inline]
pub fn circle_distance(n: usize, k: usize, l: usize) -> usize {
    if k == l {
        0
    } else if k == 0 || l == 0 {
        n
    } else {
        rim_distance(n, k, l)
    }
}

/// Builds the centred circle `C_n^0`: points `0, x1, ..., xn`, base `0`.
pub fn build_circle(n: usize) -> Result<PointedMetricSpace<Rational>> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("circle needs n >= 3, got {n}")));
    }
    let labels = std::iter::once("0".to_string())
        .chain((1..=n).map(|k| format!("x{k}")))
        .collect();
    let dist = (0..=n)
        .map(|k| (0..=n).map(|l| Rational::from_int(circle_distance(n, k, l) as i64)).collect())
        .collect();
    Ok(validate_metric(labels, dist, 0)?)
}

/// Layout of a truncated union of circles `C_{4^1}, ..., C_{4^k_max}` around
/// a common centre. Point 0 is the centre; circle `k` occupies indices
/// `(4^k - 1)/3 ..= (4^{k+1} - 1)/3 - 1`, rim points in increasing rim order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircleUnionLayout {
    pub k_max: usize,
}

impl CircleUnionLayout {
    pub fn new(k_max: usize) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::InvalidArgument("circle union needs k_max >= 1".into()));
        }
        if k_max > 8 {
            return Err(Error::CapExceeded { what: "k_max", value: k_max, cap: 8 });
        }
        Ok(CircleUnionLayout { k_max })
    }

    pub fn len(&self) -> usize {
        level_start(self.k_max + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of rim points on circle `k`.
    pub fn circle_size(k: usize) -> usize {
        4usize.pow(k as u32)
    }

    /// Point index of rim point `j` (1-based) on circle `k`.
    pub fn point(&self, k: usize, j: usize) -> usize {
        level_start(k) + j - 1
    }

    /// `(level, rim index)` of a point; `None` for the centre.
    pub fn locate(&self, idx: usize) -> Option<(usize, usize)> {
        if idx == 0 {
            return None;
        }
        let k = level_of(idx);
        Some((k, idx - level_start(k) + 1))
    }

    pub fn level_range(&self, k: usize) -> std::ops::Range<usize> {
        level_start(k)..level_start(k + 1)
    }
}

/// First index of circle `k`: `(4^k - 1)/3`.
pub fn level_start(k: usize) -> usize {
    (4usize.pow(k as u32) - 1) / 3
}

/// The unique `k` with `(4^k - 1)/3 <= i < (4^{k+1} - 1)/3`; 0 for `i = 0`.
pub fn level_of(i: usize) -> usize {
    let mut k = 0;
    while level_start(k + 1) <= i {
        k += 1;
    }
    k
}

/// Builds the union of circles `C_{4^k}`, `k = 1..=k_max`, with cross-circle
/// distance `max(4^i, 4^j)`.
pub fn build_circle_union(k_max: usize) -> Result<PointedMetricSpace<Rational>> {
    let layout = CircleUnionLayout::new(k_max)?;
    let n = layout.len();
    let mut labels = Vec::with_capacity(n);
    labels.push("0".to_string());
    for k in 1..=k_max {
        let size = CircleUnionLayout::circle_size(k);
        labels.extend((1..=size).map(|j| format!("c{size}.x{j}")));
    }
    let dist = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| Rational::from_int(union_distance(&layout, a, b) as i64))
                .collect()
        })
        .collect();
    Ok(validate_metric(labels, dist, 0)?)
}

fn union_distance(layout: &CircleUnionLayout, a: usize, b: usize) -> usize {
    match (layout.locate(a), layout.locate(b)) {
        _ if a == b => 0,
        (None, Some((k, _))) | (Some((k, _)), None) => CircleUnionLayout::circle_size(k),
        (Some((ka, ja)), Some((kb, jb))) => {
            if ka == kb {
                rim_distance(CircleUnionLayout::circle_size(ka), ja, jb)
            } else {
                CircleUnionLayout::circle_size(ka.max(kb))
            }
        }
        (None, None) => 0,
    }
}

/// Default cap on the number of grid points.
pub const DEFAULT_GRID_CAP: usize = 4096;

/// Lattice coordinates of `{0..m}^dim` in lexicographic (row-major) order.
pub fn grid_coords(m: usize, dim: usize) -> Vec<Vec<usize>> {
    let side = m + 1;
    let total = side.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut c = vec![0; dim];
            for slot in c.iter_mut().rev() {
                *slot = idx % side;
                idx /= side;
            }
            c
        })
        .collect()
}

/// Builds the lattice `{0..m}^dim` with the Euclidean metric, base at the
/// origin. Points are stored in row-major order with labels like `(2,3)`.
pub fn build_grid_net(m: usize, dim: usize, cap: usize) -> Result<PointedMetricSpace<f64>> {
    if m < 1 {
        return Err(Error::InvalidArgument("grid needs m >= 1".into()));
    }
    if dim < 2 {
        return Err(Error::InvalidArgument("grid needs dim >= 2".into()));
    }
    let side = m + 1;
    let total = (side as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(Error::CapExceeded {
            what: "grid points",
            value: total.min(usize::MAX as u128) as usize,
            cap,
        });
    }
    let coords = grid_coords(m, dim);
    let labels = coords
        .iter()
        .map(|c| {
            let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            format!("({})", parts.join(","))
        })
        .collect();
    let dist = coords
        .iter()
        .map(|a| {
            coords
                .iter()
                .map(|b| {
                    let sq: usize = a.iter().zip(b).map(|(x, y)| x.abs_diff(*y).pow(2)).sum();
                    (sq as f64).sqrt()
                })
                .collect()
        })
        .collect();
    Ok(validate_metric(labels, dist, 0)?)
}

/// Where rim point `x_l` sits relative to `x_k` on `C_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Left,
    Right,
    Both,
    Neither,
}

/// Membership of `l` in the left index set of `k` on `C_n`.
pub fn lies_left(n: usize, k: usize, l: usize) -> bool {
    let h = n.div_ceil(2);
    if 2 * k > n.saturating_sub(1) {
        // {k, k-1, ..., k-h+1}
        l <= k && l + h > k
    } else {
        // {k, ..., 1} ∪ {n, n-1, ..., n-h+k+1}
        l <= k || l + h > n + k
    }
}

/// Membership of `l` in the right index set of `k` on `C_n`.
pub fn lies_right(n: usize, k: usize, l: usize) -> bool {
    let h = n.div_ceil(2);
    if 2 * k <= n.saturating_sub(1) {
        // {k, k+1, ..., k+h}
        l >= k && l <= k + h
    } else {
        // {k, ..., n} ∪ {1, ..., h-(n-k+1)}
        l >= k || (l + n < h + k)
    }
}

/// Classifies `x_l` relative to `x_k` on `C_n` (`1 <= k, l <= n`).
pub fn orientation(n: usize, k: usize, l: usize) -> Orientation {
    match (lies_left(n, k, l), lies_right(n, k, l)) {
        (true, true) => Orientation::Both,
        (true, false) => Orientation::Left,
        (false, true) => Orientation::Right,
        (false, false) => Orientation::Neither,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

/// Length of the rim walk from `x` to `y` in the given direction; going right
/// increases the rim index.
pub fn directed_distance(n: usize, x: usize, y: usize, dir: Direction) -> usize {
    match dir {
        Direction::Right => (y + n - x) % n,
        Direction::Left => (x + n - y) % n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::q;

    #[test]
    fn circle_distances() {
        let c = build_circle(10).unwrap();
        assert_eq!(*c.d(3, 9), q(4, 1));
        assert_eq!(*c.d(7, 0), q(10, 1));
        let c4 = build_circle(4).unwrap();
        assert_eq!(*c4.d(1, 3), q(2, 1));
        assert!(build_circle(2).is_err());
    }

    #[test]
    fn triangle_violation_is_reported() {
        let labels = vec!["a".into(), "b".into(), "c".into()];
        let d = |v: i64| q(v, 1);
        let dist = vec![vec![d(0), d(1), d(5)], vec![d(1), d(0), d(1)], vec![d(5), d(1), d(0)]];
        let err = validate_metric(labels, dist, 0).unwrap_err();
        assert!(err.violations.contains(&Violation::Triangle { i: 0, j: 1, k: 2 }));
    }

    #[test]
    fn other_violations_are_reported() {
        let labels = vec!["a".into(), "b".into()];
        let dist = vec![vec![q(1, 1), q(0, 1)], vec![q(2, 1), q(0, 1)]];
        let err = validate_metric(labels, dist, 0).unwrap_err();
        assert!(err.violations.contains(&Violation::NonzeroDiagonal { i: 0 }));
        assert!(err.violations.contains(&Violation::ZeroOffDiagonal { i: 0, j: 1 }));
        assert!(err.violations.contains(&Violation::Asymmetric { i: 0, j: 1 }));
        let err = validate_metric(vec!["a".into()], vec![vec![q(0, 1)]], 3).unwrap_err();
        assert_eq!(err.violations, vec![Violation::BaseOutOfRange { base: 3 }]);
    }

    #[test]
    fn union_layout() {
        let u = build_circle_union(2).unwrap();
        assert_eq!(u.len(), 21);
        let layout = CircleUnionLayout::new(2).unwrap();
        let x = layout.point(1, 2);
        let y = layout.point(2, 7);
        assert_eq!(*u.d(x, y), q(16, 1));
        assert_eq!(*u.d(x, 0), q(4, 1));
        assert_eq!(level_of(1), 1);
        assert_eq!(level_of(5), 2);
        assert_eq!(level_of(21), 3);
        assert_eq!(level_of(4), 1);
        assert_eq!(level_of(20), 2);
        assert!(build_circle_union(0).is_err());
    }

    #[test]
    fn grid_net() {
        let g = build_grid_net(3, 2, DEFAULT_GRID_CAP).unwrap();
        assert_eq!(g.len(), 16);
        let far = g.index_of("(3,3)").unwrap();
        assert_eq!(*g.d(0, far), 18f64.sqrt());
        assert_eq!(g.min_separation(), Some(1.0));
        let g1 = build_grid_net(1, 2, DEFAULT_GRID_CAP).unwrap();
        assert_eq!(g1.len(), 4);
        assert_eq!(g1.min_separation(), Some(1.0));
        assert!(matches!(build_grid_net(10, 4, 1000), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn orientation_examples() {
        assert_eq!(orientation(10, 6, 2), Orientation::Left);
        assert_eq!(orientation(10, 3, 7), Orientation::Right);
        for n in 3..12 {
            for k in 1..=n {
                assert_eq!(orientation(n, k, k), Orientation::Both);
            }
        }
    }

    #[test]
    fn directed_distance_examples() {
        assert_eq!(directed_distance(16, 5, 6, Direction::Right), 1);
        assert_eq!(directed_distance(16, 5, 6, Direction::Left), 15);
        assert_eq!(directed_distance(16, 9, 9, Direction::Right), 0);
    }
}
