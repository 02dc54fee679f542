//! Commuting retraction systems encoded as an enumeration plus a parent tree.
//!
//! `φ_i(x)` is the last ancestor of `x` (walking towards the base) whose
//! position in the enumeration is at most `i`. Systems built this way always
//! satisfy the retraction axioms; raw `φ` tables are accepted through
//! [`RetractionSystem::from_phi_table`] and checked by [`validate_phi_table`].

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::{grid_coords, PointedMetricSpace};
use crate::scalar::Scalar;
use crate::transport::Measure;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetractionSystem {
    order: Vec<usize>,
    pos: Vec<usize>,
    parent: Vec<Option<usize>>,
    /// `phi[i][x]`.
    phi: Vec<Vec<usize>>,
}

impl RetractionSystem {
    /// Builds a system from an enumeration of all points (starting at the
    /// base) and a parent for every non-base point; `parent[x]` must precede
    /// `x` in the enumeration. The parent of `μ_1` is necessarily the base.
    pub fn build<S: Scalar>(
        space: &PointedMetricSpace<S>,
        order: Vec<usize>,
        parent: Vec<Option<usize>>,
    ) -> Result<Self> {
        let n = space.len();
        if order.len() != n {
            return Err(Error::InvalidSystem(format!("order lists {} points, space has {n}", order.len())));
        }
        if parent.len() != n {
            return Err(Error::InvalidSystem(format!("parent map covers {} points, space has {n}", parent.len())));
        }
        if order[0] != space.base() {
            return Err(Error::InvalidSystem(format!(
                "order must start at the base point {:?}, starts at {:?}",
                space.label(space.base()),
                space.label(order[0])
            )));
        }
        let mut pos = vec![usize::MAX; n];
        for (k, &x) in order.iter().enumerate() {
            if x >= n {
                return Err(Error::OutOfRange { index: x, limit: n });
            }
            if pos[x] != usize::MAX {
                return Err(Error::InvalidSystem(format!("point {:?} enumerated twice", space.label(x))));
            }
            pos[x] = k;
        }
        for (x, p) in parent.iter().enumerate() {
            match p {
                None if x == space.base() => {}
                None => {
                    return Err(Error::InvalidSystem(format!("point {:?} has no parent", space.label(x))));
                }
                Some(_) if x == space.base() => {
                    return Err(Error::InvalidSystem("the base point cannot have a parent".into()));
                }
                Some(p) => {
                    if *p >= n {
                        return Err(Error::OutOfRange { index: *p, limit: n });
                    }
                    if pos[*p] >= pos[x] {
                        return Err(Error::InvalidSystem(format!(
                            "parent {:?} (position {}) of {:?} (position {}) is not earlier",
                            space.label(*p),
                            pos[*p],
                            space.label(x),
                            pos[x]
                        )));
                    }
                }
            }
        }
        let mut phi = vec![vec![0; n]; n];
        for (i, row) in phi.iter_mut().enumerate() {
            for &x in &order {
                row[x] = if pos[x] <= i { x } else { row[parent[x].expect("non-base has parent")] };
            }
        }
        Ok(RetractionSystem { order, pos, parent, phi })
    }

    /// Convenience constructor from `(child, parent)` pairs.
    pub fn from_pairs<S: Scalar>(
        space: &PointedMetricSpace<S>,
        order: Vec<usize>,
        pairs: &[(usize, usize)],
    ) -> Result<Self> {
        let mut parent = vec![None; space.len()];
        for &(c, p) in pairs {
            if c >= space.len() {
                return Err(Error::OutOfRange { index: c, limit: space.len() });
            }
            if parent[c].is_some() {
                return Err(Error::InvalidSystem(format!("point {:?} has two parents", space.label(c))));
            }
            parent[c] = Some(p);
        }
        Self::build(space, order, parent)
    }

    /// Recovers the tree from a raw table `table[i][x] = φ_i(x)` and rejects
    /// tables that do not come from it.
    pub fn from_phi_table<S: Scalar>(
        space: &PointedMetricSpace<S>,
        order: Vec<usize>,
        table: &[Vec<usize>],
    ) -> Result<Self> {
        let report = validate_phi_table(&order, table);
        if !report.is_valid() {
            return Err(Error::InvalidSystem(report.to_string()));
        }
        let mut parent = vec![None; space.len()];
        for k in 1..order.len() {
            parent[order[k]] = Some(table[k - 1][order[k]]);
        }
        let sys = Self::build(space, order, parent)?;
        if sys.phi != table {
            return Err(Error::InvalidSystem("table is not induced by its parent tree".into()));
        }
        Ok(sys)
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Last enumeration index `N`.
    pub fn last(&self) -> usize {
        self.order.len() - 1
    }

    pub fn base(&self) -> usize {
        self.order[0]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `μ_k`.
    pub fn mu(&self, k: usize) -> usize {
        self.order[k]
    }

    /// Position of a point in the enumeration.
    pub fn position(&self, x: usize) -> usize {
        self.pos[x]
    }

    pub fn parent(&self, x: usize) -> Option<usize> {
        self.parent[x]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn phi_table(&self) -> &[Vec<usize>] {
        &self.phi
    }

    pub fn phi(&self, i: usize, x: usize) -> Result<usize> {
        let row = self.phi.get(i).ok_or(Error::OutOfRange { index: i, limit: self.len() })?;
        row.get(x).copied().ok_or(Error::OutOfRange { index: x, limit: self.len() })
    }

    /// `x ≺ y`: `x` lies on the chain from the base to `y`.
    pub fn precedes(&self, x: usize, y: usize) -> bool {
        self.phi[self.pos[x]][y] == x
    }

    /// The chain `T_0^x`, from the base to `x`, by walking parents.
    pub fn chain_to(&self, x: usize) -> Chain {
        let mut pts = vec![x];
        let mut cur = x;
        while let Some(p) = self.parent[cur] {
            pts.push(p);
            cur = p;
        }
        pts.reverse();
        Chain { points: pts }
    }

    /// The chain `T_0^x` recomputed as `{φ_i(x)}` ordered by position.
    pub fn chain_by_phi(&self, x: usize) -> Chain {
        let mut pts: Vec<usize> = self.phi.iter().map(|row| row[x]).collect();
        pts.dedup();
        Chain { points: pts }
    }

    /// The chain from `from` to `to`; `from` must be an ancestor of `to`.
    pub fn chain_between(&self, from: usize, to: usize) -> Result<Chain> {
        let full = self.chain_to(to);
        match full.points.iter().position(|&p| p == from) {
            Some(k) => Ok(Chain { points: full.points[k..].to_vec() }),
            None => Err(Error::InvalidArgument(format!("point {from} is not an ancestor of {to}"))),
        }
    }

    /// Validates an explicit chain: increasing positions and each element the
    /// parent of the next.
    pub fn chain(&self, points: Vec<usize>) -> Result<Chain> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty chain".into()));
        }
        for w in points.windows(2) {
            if self.parent[w[1]] != Some(w[0]) {
                return Err(Error::InvalidArgument(format!(
                    "{} -> {} is not a chain link (φ_(k-1)(μ_k) differs)",
                    w[0], w[1]
                )));
            }
        }
        Ok(Chain { points })
    }

    /// Fiber `F_i(p) = {y : φ_i(y) = p}`, sorted by point index.
    pub fn fiber(&self, i: usize, p: usize) -> Result<Vec<usize>> {
        if i >= self.len() {
            return Err(Error::OutOfRange { index: i, limit: self.len() });
        }
        if p >= self.len() || self.pos[p] > i {
            return Err(Error::InvalidArgument(format!("point {p} is not in the image of φ_{i}")));
        }
        Ok((0..self.len()).filter(|&y| self.phi[i][y] == p).collect())
    }

    /// Basis molecules `e_n = δ_{μ_n} − δ_{parent(μ_n)}`, `n = 1..=N`.
    pub fn basis_molecules<S: Scalar>(&self, space: &PointedMetricSpace<S>) -> Vec<Measure<S>> {
        (1..self.len())
            .map(|k| {
                let x = self.order[k];
                Measure::molecule(space, x, self.parent[x].expect("non-base has parent"))
            })
            .collect()
    }

    /// Labels-based JSON-friendly description.
    pub fn describe<S: Scalar>(&self, space: &PointedMetricSpace<S>) -> SystemDescription {
        SystemDescription {
            order: self.order.iter().map(|&x| space.label(x).to_string()).collect(),
            parent: self
                .order
                .iter()
                .skip(1)
                .map(|&x| (space.label(x).to_string(), space.label(self.parent[x].unwrap()).to_string()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SystemDescription {
    pub order: Vec<String>,
    pub parent: Vec<(String, String)>,
}

/// A chain `(μ_{k_1}, ..., μ_{k_l})`: each element is the parent of the next.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Chain {
    pub points: Vec<usize>,
}

impl Chain {
    pub fn initial(&self) -> usize {
        self.points[0]
    }

    pub fn final_point(&self) -> usize {
        *self.points.last().expect("chains are nonempty")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.points.contains(&x)
    }

    /// Number of elements of `self` not in `other`.
    pub fn difference_len(&self, other: &Chain) -> usize {
        self.points.iter().filter(|p| !other.contains(**p)).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemViolation {
    /// `φ_i(M)` differs from `{μ_0..μ_i}`.
    Image { i: usize },
    /// `φ_i` moves a point of its own image.
    NotRetraction { i: usize, x: usize },
    /// `φ_m φ_n (x)` or `φ_n φ_m (x)` differs from `φ_n (x)` for `n ≤ m`.
    Commutation { m: usize, n: usize, x: usize },
    /// Malformed table shape or entries.
    Shape { detail: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SystemReport {
    pub violations: Vec<SystemViolation>,
    pub triples_checked: usize,
}

impl SystemReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for SystemReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid ({} triples checked)", self.triples_checked);
        }
        write!(f, "{} violation(s):", self.violations.len())?;
        for v in self.violations.iter().take(20) {
            match v {
                SystemViolation::Image { i } => write!(f, " [image of φ_{i}]")?,
                SystemViolation::NotRetraction { i, x } => write!(f, " [φ_{i} moves {x}]")?,
                SystemViolation::Commutation { m, n, x } => write!(f, " [commutation m={m} n={n} x={x}]")?,
                SystemViolation::Shape { detail } => write!(f, " [{detail}]")?,
            }
        }
        Ok(())
    }
}

/// Exhaustive axiom check of a table `table[i][x] = φ_i(x)` against an
/// enumeration `order`.
pub fn validate_phi_table(order: &[usize], table: &[Vec<usize>]) -> SystemReport {
    let n = order.len();
    let mut report = SystemReport::default();
    if table.len() != n || table.iter().any(|r| r.len() != n) || order.iter().any(|&x| x >= n) {
        report.violations.push(SystemViolation::Shape { detail: "table must be N+1 rows of |M| entries".into() });
        return report;
    }
    if table.iter().flatten().any(|&v| v >= n) {
        report.violations.push(SystemViolation::Shape { detail: "table entry out of range".into() });
        return report;
    }
    let mut in_prefix = vec![false; n];
    for i in 0..n {
        in_prefix[order[i]] = true;
        let mut image = vec![false; n];
        for &v in &table[i] {
            image[v] = true;
        }
        if image != in_prefix {
            report.violations.push(SystemViolation::Image { i });
        }
        for x in 0..n {
            if in_prefix[x] && table[i][x] != x {
                report.violations.push(SystemViolation::NotRetraction { i, x });
            }
        }
    }
    for m in 0..n {
        for k in 0..=m {
            for x in 0..n {
                report.triples_checked += 1;
                let want = table[k][x];
                if table[m][table[k][x]] != want || table[k][table[m][x]] != want {
                    report.violations.push(SystemViolation::Commutation { m, n: k, x });
                }
            }
        }
    }
    report
}

pub fn validate_system(sys: &RetractionSystem) -> SystemReport {
    validate_phi_table(&sys.order, &sys.phi)
}

/// Lipschitz constant of a map together with an attaining pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LipValue<S> {
    pub value: S,
    pub pair: Option<(usize, usize)>,
}

/// `Lip φ_i` as the exact maximum of `d(φ_i x, φ_i y)/d(x, y)` over pairs.
pub fn lip_constant<S: Scalar>(space: &PointedMetricSpace<S>, sys: &RetractionSystem, i: usize) -> Result<LipValue<S>> {
    let row = sys.phi.get(i).ok_or(Error::OutOfRange { index: i, limit: sys.len() })?;
    let n = space.len();
    let mut best = LipValue { value: S::zero(), pair: None };
    for x in 0..n {
        for y in (x + 1)..n {
            let r = space.d(row[x], row[y]).clone() / space.d(x, y).clone();
            if r > best.value {
                best = LipValue { value: r, pair: Some((x, y)) };
            }
        }
    }
    Ok(best)
}

/// `Lip φ_i` for every `i = 0..=N`.
pub fn lip_profile<S: Scalar>(space: &PointedMetricSpace<S>, sys: &RetractionSystem) -> Vec<LipValue<S>> {
    (0..sys.len()).map(|i| lip_constant(space, sys, i).expect("index in range")).collect()
}

/// `max_i Lip φ_i`.
pub fn max_lip<S: Scalar>(space: &PointedMetricSpace<S>, sys: &RetractionSystem) -> S {
    lip_profile(space, sys).into_iter().fold(S::zero(), |a, l| S::max_of(a, l.value))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepLemmaReport<S> {
    pub holds: bool,
    pub worst_gap: S,
    /// Chain link attaining the worst gap.
    pub worst_link: Option<(usize, usize)>,
    pub k: S,
    /// `2Kα`.
    pub bound: S,
}

/// Checks that every consecutive gap of `chain` is at most `2Kα`, given a
/// path of distinct points from its final point back to its initial point
/// with steps at most `α`. `K` defaults to `max(1, max Lip φ_n)` over the
/// chain's index range; an override must be at least that.
pub fn step_lemma_check<S: Scalar>(
    space: &PointedMetricSpace<S>,
    sys: &RetractionSystem,
    chain: &Chain,
    path: &[usize],
    alpha: &S,
    k_override: Option<S>,
) -> Result<StepLemmaReport<S>> {
    if chain.len() < 2 {
        return Err(Error::Hypothesis("chain needs at least two points".into()));
    }
    if path.first() != Some(&chain.final_point()) || path.last() != Some(&chain.initial()) {
        return Err(Error::Hypothesis("path must run from the chain's final point to its initial point".into()));
    }
    let mut seen = vec![false; space.len()];
    for &p in path {
        if p >= space.len() {
            return Err(Error::OutOfRange { index: p, limit: space.len() });
        }
        if std::mem::replace(&mut seen[p], true) {
            return Err(Error::Hypothesis(format!("path repeats point {:?}", space.label(p))));
        }
    }
    for w in path.windows(2) {
        if space.d(w[0], w[1]).gt_tol(alpha) {
            return Err(Error::Hypothesis(format!(
                "path step {:?} -> {:?} of length {} exceeds α = {}",
                space.label(w[0]),
                space.label(w[1]),
                space.d(w[0], w[1]),
                alpha
            )));
        }
    }
    let lo = sys.position(chain.initial());
    let hi = sys.position(chain.final_point());
    let mut k = S::one();
    for i in lo..=hi {
        k = S::max_of(k, lip_constant(space, sys, i)?.value);
    }
    if let Some(kk) = k_override {
        if k.gt_tol(&kk) {
            return Err(Error::Hypothesis(format!("K = {kk} is below the measured Lipschitz constant {k}")));
        }
        k = kk;
    }
    let two = S::from_int(2);
    let bound = two.clone() * k.clone() * alpha.clone();
    let mut worst_gap = S::zero();
    let mut worst_link = None;
    for w in chain.points.windows(2) {
        let g = space.d(w[0], w[1]).clone();
        if g > worst_gap || worst_link.is_none() {
            worst_gap = g;
            worst_link = Some((w[0], w[1]));
        }
    }
    let holds = !worst_gap.gt_tol(&bound);
    Ok(StepLemmaReport { holds, worst_gap, worst_link, k, bound })
}

/// A uniformly random enumeration with uniformly random earlier parents.
pub fn random_system<S: Scalar, R: Rng + ?Sized>(space: &PointedMetricSpace<S>, rng: &mut R) -> RetractionSystem {
    let mut rest: Vec<usize> = space.non_base().collect();
    rest.shuffle(rng);
    let mut order = Vec::with_capacity(space.len());
    order.push(space.base());
    order.extend(rest);
    let mut parent = vec![None; space.len()];
    for k in 1..order.len() {
        parent[order[k]] = Some(order[rng.gen_range(0..k)]);
    }
    RetractionSystem::build(space, order, parent).expect("random system is well formed")
}

/// Row-major system on the grid `{0..m}^dim`: lexicographic order, parent
/// obtained by decrementing the last nonzero coordinate.
pub fn grid_row_major_system<S: Scalar>(space: &PointedMetricSpace<S>, m: usize, dim: usize) -> Result<RetractionSystem> {
    let coords = grid_coords(m, dim);
    if coords.len() != space.len() {
        return Err(Error::InvalidArgument(format!(
            "grid m={m}, dim={dim} has {} points, space has {}",
            coords.len(),
            space.len()
        )));
    }
    let side = m + 1;
    let index = |c: &[usize]| c.iter().fold(0, |acc, v| acc * side + v);
    let parent = coords
        .iter()
        .map(|c| {
            let last = c.iter().rposition(|&v| v > 0)?;
            let mut p = c.clone();
            p[last] -= 1;
            Some(index(&p))
        })
        .collect();
    RetractionSystem::build(space, (0..coords.len()).collect(), parent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{build_circle, build_grid_net, DEFAULT_GRID_CAP};
    use crate::scalar::{q, Rational};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c4_reference() -> (PointedMetricSpace<Rational>, RetractionSystem) {
        let c = build_circle(4).unwrap();
        let sys = RetractionSystem::from_pairs(&c, vec![0, 1, 2, 3, 4], &[(1, 0), (2, 1), (3, 2), (4, 1)]).unwrap();
        (c, sys)
    }

    #[test]
    fn reference_phi_and_lip() {
        let (c, sys) = c4_reference();
        assert_eq!(sys.phi(2, 3).unwrap(), 2);
        assert!((0..5).all(|x| sys.phi(0, x).unwrap() == 0));
        assert!((0..5).all(|x| sys.phi(4, x).unwrap() == x));
        assert_eq!(lip_constant(&c, &sys, 1).unwrap().value, q(1, 1));
        let l3 = lip_constant(&c, &sys, 3).unwrap();
        assert_eq!(l3.value, q(2, 1));
        assert_eq!(l3.pair, Some((3, 4)));
        assert_eq!(lip_constant(&c, &sys, 4).unwrap().value, q(1, 1));
        assert!(validate_system(&sys).is_valid());
    }

    #[test]
    fn build_errors() {
        let c = build_circle(4).unwrap();
        assert!(RetractionSystem::from_pairs(&c, vec![1, 0, 2, 3, 4], &[(2, 1), (3, 2), (4, 1), (0, 1)]).is_err());
        // parent(μ_2) = μ_3 is a forward reference.
        let err = RetractionSystem::from_pairs(&c, vec![0, 1, 2, 3, 4], &[(1, 0), (2, 3), (3, 1), (4, 1)]);
        assert!(matches!(err, Err(Error::InvalidSystem(_))));
    }

    #[test]
    fn corrupted_table_is_reported() {
        let (c, sys) = c4_reference();
        let mut table = sys.phi_table().to_vec();
        // φ_2(x4) = x2 while φ_3(x4) = x1: φ_2 φ_3 (x4) = x1 ≠ φ_2(x4).
        table[2][4] = 2;
        let report = validate_phi_table(sys.order(), &table);
        assert!(report.violations.contains(&SystemViolation::Commutation { m: 3, n: 2, x: 4 }), "{report}");
        assert!(RetractionSystem::from_phi_table(&c, sys.order().to_vec(), &table).is_err());
        assert_eq!(RetractionSystem::from_phi_table(&c, sys.order().to_vec(), sys.phi_table()).unwrap(), sys);
    }

    #[test]
    fn chains_and_fibers() {
        let (c, sys) = c4_reference();
        assert_eq!(sys.chain_to(3).points, vec![0, 1, 2, 3]);
        assert_eq!(sys.chain_to(0).points, vec![0]);
        assert_eq!(sys.chain_by_phi(3), sys.chain_to(3));
        assert_eq!(sys.fiber(1, 1).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(sys.fiber(1, 0).unwrap(), vec![0]);
        assert_eq!(sys.fiber(4, 2).unwrap(), vec![2]);
        assert!(sys.fiber(1, 3).is_err());
        let e = sys.basis_molecules(&c);
        assert_eq!(e[2], Measure::molecule(&c, 3, 2));
        assert_eq!(e[0], Measure::dirac(&c, 1));
        assert_eq!(e[0].plus(&e[1]).plus(&e[2]), Measure::dirac(&c, 3));
    }

    #[test]
    fn step_lemma_reference() {
        let (c, sys) = c4_reference();
        let chain = sys.chain(vec![1, 2, 3]).unwrap();
        let r = step_lemma_check(&c, &sys, &chain, &[3, 4, 1], &q(1, 1), None).unwrap();
        assert!(r.holds);
        assert_eq!(r.worst_gap, q(1, 1));
        assert_eq!(r.k, q(2, 1));
        assert_eq!(r.bound, q(4, 1));
        assert!(step_lemma_check(&c, &sys, &chain, &[3, 1], &q(1, 1), None).is_err());
        assert!(step_lemma_check(&c, &sys, &chain, &[3, 4], &q(1, 1), None).is_err());
        let single = sys.chain(vec![0, 1]).unwrap();
        assert!(step_lemma_check(&c, &sys, &single, &[1, 0], &q(4, 1), None).unwrap().holds);
    }

    #[test]
    fn grid_chain() {
        let g = build_grid_net(3, 2, DEFAULT_GRID_CAP).unwrap();
        let sys = grid_row_major_system(&g, 3, 2).unwrap();
        let x = g.index_of("(2,3)").unwrap();
        let labels: Vec<&str> = sys.chain_to(x).points.iter().map(|&p| g.label(p)).collect();
        assert_eq!(labels, ["(0,0)", "(1,0)", "(2,0)", "(2,1)", "(2,2)", "(2,3)"]);
    }

    #[test]
    fn random_systems_are_valid() {
        let c = build_circle(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let sys = random_system(&c, &mut rng);
            assert!(validate_system(&sys).is_valid());
            for x in 0..c.len() {
                assert_eq!(sys.chain_to(x), sys.chain_by_phi(x));
            }
        }
    }
}
