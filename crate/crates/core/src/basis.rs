//! Schauder projections on `F(M)`, basis and unconditionality constants, and
//! the aligned-chains conditionality witness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::PointedMetricSpace;
use crate::operator::{normalize, operator_norm, pick_max, LinearOperator, OperatorNorm};
use crate::retraction::{Chain, RetractionSystem};
use crate::scalar::Scalar;
use crate::transport::LipschitzFunction;

/// Default cap on `N` for exhaustive sign enumeration.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 20;

/// Projections `P_0 = 0, P_1, ..., P_N = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionFamily<S> {
    pub ops: Vec<LinearOperator<S>>,
}

impl<S: Scalar> ProjectionFamily<S> {
    /// `N`, the index of the last projection.
    pub fn last(&self) -> usize {
        self.ops.len() - 1
    }

    pub fn get(&self, n: usize) -> &LinearOperator<S> {
        &self.ops[n]
    }

    /// Exact check of `P_m P_n = P_n P_m = P_n` for all `n <= m`; returns the
    /// first failing `(m, n)`.
    pub fn commutation_failure(&self) -> Option<(usize, usize)> {
        for m in 0..self.ops.len() {
            for n in 0..=m {
                let pn = &self.ops[n];
                if !self.ops[m].compose(pn).approx_eq(pn) || !pn.compose(&self.ops[m]).approx_eq(pn) {
                    return Some((m, n));
                }
            }
        }
        None
    }

    /// `Σ ε_i (P_{i+1} − P_i)`, `i = 0..N−1`.
    pub fn signed_sum(&self, eps: &[i8]) -> Result<LinearOperator<S>> {
        let n = self.last();
        if eps.len() != n {
            return Err(Error::InvalidArgument(format!("sign vector has length {}, expected {n}", eps.len())));
        }
        if eps.iter().any(|e| *e != 1 && *e != -1) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        // Coefficient of P_j is ε_{j−1} − ε_j with ε_{−1} = ε_N = 0.
        let sign = |i: isize| if i < 0 || i as usize >= n { 0 } else { eps[i as usize] as i64 };
        let mut acc = self.ops[0].scaled(&S::zero());
        for j in 0..=n {
            let c = sign(j as isize - 1) - sign(j as isize);
            if c != 0 {
                acc = acc.combine(&S::one(), &self.ops[j], &S::from_int(c));
            }
        }
        Ok(acc)
    }
}

/// `P_n δ_x = δ_{φ_n(x)}`.
pub fn projections_from_system<S: Scalar>(space: &PointedMetricSpace<S>, sys: &RetractionSystem) -> ProjectionFamily<S> {
    let ops = sys
        .phi_table()
        .iter()
        .map(|row| LinearOperator::from_columns(space, row.iter().map(|&y| vec![(y, S::one())]).collect()))
        .collect();
    ProjectionFamily { ops }
}

/// Extension coefficients: row `k` lists `(j, a_j^k)` with `j < k`, meaning the
/// one-step extension sets `f(μ_k) = Σ_j a_j^k f(μ_j)`. Row 0 is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientLedger<S> {
    pub rows: Vec<Vec<(usize, S)>>,
}

impl<S: Scalar> CoefficientLedger<S> {
    /// Single coefficient 1 at the parent's position.
    pub fn from_system(sys: &RetractionSystem) -> Self {
        let mut rows = vec![Vec::new()];
        for k in 1..sys.len() {
            let p = sys.parent(sys.mu(k)).expect("non-base has parent");
            rows.push(vec![(sys.position(p), S::one())]);
        }
        CoefficientLedger { rows }
    }
}

/// Builds `P_n` whose adjoint extends a function from `{μ_0..μ_n}` by the
/// one-step extensions `R_{n+1}, ..., R_N`.
pub fn projections_from_coefficients<S: Scalar>(
    space: &PointedMetricSpace<S>,
    order: &[usize],
    ledger: &CoefficientLedger<S>,
) -> Result<ProjectionFamily<S>> {
    let n_pts = space.len();
    if order.len() != n_pts || ledger.rows.len() != n_pts {
        return Err(Error::InvalidArgument("order and ledger must cover every point".into()));
    }
    if order[0] != space.base() {
        return Err(Error::InvalidSystem("order must start at the base point".into()));
    }
    for (k, row) in ledger.rows.iter().enumerate() {
        if let Some((j, _)) = row.iter().find(|(j, _)| *j >= k) {
            return Err(Error::InvalidSystem(format!("ledger row {k} references index {j} >= {k}")));
        }
    }
    let mut ops = Vec::with_capacity(n_pts);
    for n in 0..n_pts {
        // cols_by_pos[k] = P_n δ_{μ_k}
        let mut cols_by_pos: Vec<Vec<(usize, S)>> = Vec::with_capacity(n_pts);
        for k in 0..n_pts {
            if k <= n {
                cols_by_pos.push(vec![(order[k], S::one())]);
            } else {
                let mut col = Vec::new();
                for (j, a) in &ledger.rows[k] {
                    for (r, v) in &cols_by_pos[*j] {
                        col.push((*r, a.clone() * v.clone()));
                    }
                }
                cols_by_pos.push(normalize(col, space.base()));
            }
        }
        let mut cols = vec![Vec::new(); n_pts];
        for (k, col) in cols_by_pos.into_iter().enumerate() {
            cols[order[k]] = col;
        }
        ops.push(LinearOperator::from_columns(space, cols));
    }
    Ok(ProjectionFamily { ops })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisConstant<S> {
    pub value: S,
    /// `‖P_n‖` for `n = 0..=N`.
    pub per_n: Vec<OperatorNorm<S>>,
}

pub fn basis_constant<S: Scalar>(space: &PointedMetricSpace<S>, fam: &ProjectionFamily<S>) -> BasisConstant<S> {
    let per_n: Vec<OperatorNorm<S>> = fam.ops.iter().map(|p| operator_norm(space, p)).collect();
    let value = per_n.iter().fold(S::zero(), |a, p| S::max_of(a, p.value.clone()));
    BasisConstant { value, per_n }
}

pub fn signed_sum_norm<S: Scalar>(space: &PointedMetricSpace<S>, fam: &ProjectionFamily<S>, eps: &[i8]) -> Result<OperatorNorm<S>> {
    Ok(operator_norm(space, &fam.signed_sum(eps)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UncondMode {
    /// All `2^(N−1)` patterns with `ε_0 = +1` (the norm is invariant under a
    /// global sign flip); `N` must not exceed `cap`.
    Exhaustive { cap: usize },
    /// `samples` uniform patterns from a ChaCha8 stream seeded with `seed`.
    Sampled { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct UncondResult<S> {
    /// Exact maximum (exhaustive) or a lower bound (sampled).
    pub value: S,
    pub eps: Vec<i8>,
    pub attained_at: Option<(usize, usize)>,
    pub patterns: usize,
    pub mode: UncondMode,
}

pub fn unconditional_constant<S: Scalar>(
    space: &PointedMetricSpace<S>,
    fam: &ProjectionFamily<S>,
    mode: UncondMode,
) -> Result<UncondResult<S>> {
    let n = fam.last();
    if n == 0 {
        return Ok(UncondResult { value: S::zero(), eps: Vec::new(), attained_at: None, patterns: 0, mode });
    }
    let patterns: Vec<Vec<i8>> = match mode {
        UncondMode::Exhaustive { cap } => {
            if n > cap {
                return Err(Error::CapExceeded { what: "exhaustive sign length N", value: n, cap });
            }
            (0..1u64 << (n - 1))
                .map(|bits| {
                    std::iter::once(1)
                        .chain((1..n).map(|i| if bits >> (i - 1) & 1 == 1 { -1 } else { 1 }))
                        .collect()
                })
                .collect()
        }
        UncondMode::Sampled { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..samples)
                .map(|_| (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect())
                .collect()
        }
    };
    let norms: Vec<OperatorNorm<S>> = patterns
        .par_iter()
        .map(|eps| signed_sum_norm(space, fam, eps).expect("pattern length matches"))
        .collect();
    let best = norms
        .iter()
        .enumerate()
        .map(|(k, r)| (r.value.clone(), k))
        .reduce(pick_max);
    Ok(match best {
        Some((value, k)) => UncondResult {
            value,
            eps: patterns[k].clone(),
            attained_at: norms[k].attained_at,
            patterns: patterns.len(),
            mode,
        },
        None => UncondResult { value: S::zero(), eps: Vec::new(), attained_at: None, patterns: 0, mode },
    })
}

/// The aligned-chains witness: a 1-Lipschitz `f`, a sign pattern `ε`, the
/// predicted bound `α(n−1)/β` and the certified value
/// `|(Q* f)(x_S) − (Q* f)(x_T)| / d(x_S, x_T)` for `Q = Σ ε_i (P_{i+1} − P_i)`,
/// which bounds `‖Q‖` from below.
#[derive(Clone, Debug, PartialEq)]
pub struct Lemma41Witness<S> {
    pub f: Vec<S>,
    pub eps: Vec<i8>,
    pub bound: S,
    /// `|S \ T|`.
    pub n: usize,
    /// Position in `S` of the last element shared with `T`.
    pub t: usize,
    /// Index of the final element of `S` within `S`.
    pub s: usize,
    pub evaluation: S,
    pub final_s: usize,
    pub final_t: usize,
}

pub fn lemma41_witness<S: Scalar>(
    space: &PointedMetricSpace<S>,
    sys: &RetractionSystem,
    s_chain: &Chain,
    t_chain: &Chain,
    alpha: &S,
    beta: &S,
) -> Result<Lemma41Witness<S>> {
    for (name, c) in [("S", s_chain), ("T", t_chain)] {
        if c.initial() != space.base() {
            return Err(Error::Hypothesis(format!("chain {name} does not start at the base")));
        }
        sys.chain(c.points.clone())
            .map_err(|e| Error::Hypothesis(format!("chain {name} is not a chain of the system: {e}")))?;
    }
    if !alpha.is_pos() || !beta.is_pos() {
        return Err(Error::Hypothesis("α and β must be positive".into()));
    }
    let (xs, xt) = (s_chain.final_point(), t_chain.final_point());
    if space.d(xs, xt).gt_tol(beta) {
        return Err(Error::Hypothesis(format!("final points are {} apart, more than β = {beta}", space.d(xs, xt))));
    }
    if let Some(sep) = space.min_separation() {
        if alpha.gt_tol(&sep) {
            return Err(Error::Hypothesis(format!("space is only {sep}-separated, α = {alpha}")));
        }
    }
    let n = s_chain.difference_len(t_chain);
    if n < 2 {
        return Err(Error::Hypothesis(format!("|S \\ T| = {n}, need at least 2")));
    }
    let s = s_chain.len() - 1;
    let t = s_chain.points.iter().rposition(|p| t_chain.contains(*p)).expect("both chains contain the base");
    if s - t < n {
        return Err(Error::Hypothesis(format!(
            "shared points interleave: only {} elements of S follow the last shared one, |S \\ T| = {n}",
            s - t
        )));
    }

    let half = alpha.clone() / S::from_int(2);
    let mut f = vec![S::zero(); space.len()];
    for j in (t + 1)..=s {
        let x = s_chain.points[j];
        f[x] = if j % 2 == 1 { half.clone() } else { -half.clone() };
    }
    let witness = LipschitzFunction::new(space, f)?;
    debug_assert!(!witness.lipschitz_constant(space).gt_tol(&S::one()));

    let last = sys.last();
    let flips: Vec<usize> = s_chain.points[1..].iter().map(|&p| sys.position(p)).collect();
    let mut eps = Vec::with_capacity(last);
    for i in 0..last {
        let prev = if i == 0 { 1 } else { eps[i - 1] };
        eps.push(if i > 0 && flips.contains(&i) { -prev } else { prev });
    }

    let fam = projections_from_system(space, sys);
    let q = fam.signed_sum(&eps)?;
    let g = q.adjoint_apply(witness.values());
    let evaluation = (g[xs].clone() - g[xt].clone()).abs_val() / space.d(xs, xt).clone();
    let bound = alpha.clone() * S::from_int(n as i64 - 1) / beta.clone();
    Ok(Lemma41Witness { f: witness.into_values(), eps, bound, n, t, s, evaluation, final_s: xs, final_t: xt })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivergentPair<S> {
    pub x: usize,
    pub y: usize,
    /// `|T_0^x \ T_0^y|`.
    pub n: usize,
    pub distance: S,
}

/// Pairs `(x, y)` with `x` enumerated before `y`, `d(x, y) <= β` and
/// `|T_0^x \ T_0^y| >= n_min`, deepest first (ties by enumeration order).
pub fn find_divergent_chains<S: Scalar>(
    space: &PointedMetricSpace<S>,
    sys: &RetractionSystem,
    beta: &S,
    n_min: usize,
) -> Vec<DivergentPair<S>> {
    let chains: Vec<Chain> = (0..space.len()).map(|x| sys.chain_to(x)).collect();
    let mut out = Vec::new();
    for &x in sys.order() {
        for &y in sys.order() {
            if sys.position(x) >= sys.position(y) || space.d(x, y).gt_tol(beta) {
                continue;
            }
            let n = chains[x].difference_len(&chains[y]);
            if n >= n_min {
                out.push(DivergentPair { x, y, n, distance: space.d(x, y).clone() });
            }
        }
    }
    out.sort_by(|a, b| {
        b.n.cmp(&a.n)
            .then(sys.position(a.x).cmp(&sys.position(b.x)))
            .then(sys.position(a.y).cmp(&sys.position(b.y)))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{build_circle, build_grid_net, DEFAULT_GRID_CAP};
    use crate::retraction::{grid_row_major_system, lip_constant};
    use crate::scalar::{q, Rational};
    use crate::transport::{kr_norm, Measure};

    fn c4_reference() -> (PointedMetricSpace<Rational>, RetractionSystem) {
        let c = build_circle(4).unwrap();
        let sys = RetractionSystem::from_pairs(&c, vec![0, 1, 2, 3, 4], &[(1, 0), (2, 1), (3, 2), (4, 1)]).unwrap();
        (c, sys)
    }

    #[test]
    fn reference_family() {
        let (c, sys) = c4_reference();
        let fam = projections_from_system(&c, &sys);
        assert!((1..5).all(|x| fam.get(1).column(x) == [(1, q(1, 1))]));
        assert!(fam.get(0).approx_eq(&LinearOperator::zero(&c)));
        assert!(fam.get(4).approx_eq(&LinearOperator::identity(&c)));
        assert_eq!(fam.commutation_failure(), None);
        for n in 0..5 {
            assert_eq!(fam.get(n).rank(), n);
        }
        let bc = basis_constant(&c, &fam);
        assert_eq!(bc.value, q(2, 1));
        for n in 0..5 {
            assert_eq!(bc.per_n[n].value, lip_constant(&c, &sys, n).unwrap().value);
        }
    }

    #[test]
    fn ledger_reproduces_system() {
        let (c, sys) = c4_reference();
        let ledger = CoefficientLedger::from_system(&sys);
        let fam = projections_from_coefficients(&c, sys.order(), &ledger).unwrap();
        assert_eq!(fam, projections_from_system(&c, &sys));
        let mut bad = ledger.clone();
        bad.rows[2] = vec![(3, q(1, 1))];
        assert!(projections_from_coefficients(&c, sys.order(), &bad).is_err());
        // Empty row: the extension puts 0 at μ_1.
        let mut empty = ledger;
        empty.rows[1].clear();
        let fam = projections_from_coefficients(&c, sys.order(), &empty).unwrap();
        assert!(fam.get(0).column(1).is_empty());
    }

    #[test]
    fn signed_sums() {
        let (c, sys) = c4_reference();
        let fam = projections_from_system(&c, &sys);
        assert_eq!(signed_sum_norm(&c, &fam, &[1, 1, 1, 1]).unwrap().value, q(1, 1));
        let r = signed_sum_norm(&c, &fam, &[1, -1, -1, -1]).unwrap();
        assert_eq!(r.value, q(3, 2));
        assert_eq!(r.attained_at, Some((0, 3)));
        let q4 = fam.signed_sum(&[1, -1, 1, -1]).unwrap();
        let img = q4.apply(&c, &Measure::molecule(&c, 3, 4));
        let mut want = Measure::zero(&c);
        want.add_at(2, q(-2, 1));
        want.add_at(3, q(1, 1));
        want.add_at(4, q(1, 1));
        assert_eq!(img, want);
        assert_eq!(kr_norm(&c, &img), q(3, 1));
        assert!(signed_sum_norm(&c, &fam, &[1, 1]).is_err());
    }

    #[test]
    fn unconditional_reference() {
        let (c, sys) = c4_reference();
        let fam = projections_from_system(&c, &sys);
        let ex = unconditional_constant(&c, &fam, UncondMode::Exhaustive { cap: DEFAULT_EXHAUSTIVE_CAP }).unwrap();
        assert!(ex.value >= q(3, 1));
        assert_eq!(ex.patterns, 8);
        let sampled = unconditional_constant(&c, &fam, UncondMode::Sampled { samples: 100, seed: 7 }).unwrap();
        assert!(sampled.value <= ex.value);
        assert!(unconditional_constant(&c, &fam, UncondMode::Exhaustive { cap: 3 }).is_err());
    }

    #[test]
    fn two_point_space() {
        let s = crate::metric::validate_metric(
            vec!["0".into(), "a".into()],
            vec![vec![q(0, 1), q(2, 1)], vec![q(2, 1), q(0, 1)]],
            0,
        )
        .unwrap();
        let sys = RetractionSystem::from_pairs(&s, vec![0, 1], &[(1, 0)]).unwrap();
        let fam = projections_from_system(&s, &sys);
        assert_eq!(basis_constant(&s, &fam).value, q(1, 1));
        let u = unconditional_constant(&s, &fam, UncondMode::Exhaustive { cap: 20 }).unwrap();
        assert_eq!(u.value, q(1, 1));
    }

    #[test]
    fn grid_witness() {
        let g = build_grid_net(3, 2, DEFAULT_GRID_CAP).unwrap();
        let sys = grid_row_major_system(&g, 3, 2).unwrap();
        let s = sys.chain_to(g.index_of("(1,3)").unwrap());
        let t = sys.chain_to(g.index_of("(2,3)").unwrap());
        let w = lemma41_witness(&g, &sys, &s, &t, &1.0, &1.0).unwrap();
        assert_eq!(w.n, 3);
        assert_eq!(w.t, 1);
        assert_eq!(w.bound, 2.0);
        let vals: Vec<f64> = ["(1,1)", "(1,2)", "(1,3)"].iter().map(|l| w.f[g.index_of(l).unwrap()]).collect();
        assert_eq!(vals, [-0.5, 0.5, -0.5]);
        assert!(w.evaluation >= w.bound);
        let fam = projections_from_system(&g, &sys);
        assert!(signed_sum_norm(&g, &fam, &w.eps).unwrap().value >= w.bound - 1e-9);
        assert!(lemma41_witness(&g, &sys, &s, &s, &1.0, &1.0).is_err());

        let found = find_divergent_chains(&g, &sys, &1.0, 3);
        let a = g.index_of("(1,3)").unwrap();
        let b = g.index_of("(2,3)").unwrap();
        assert!(found.iter().any(|p| p.x == a && p.y == b && p.n == 3));
        assert!(find_divergent_chains(&g, &sys, &0.5, 1).is_empty());
    }

    #[test]
    fn reference_divergent() {
        let (c, sys) = c4_reference();
        let found = find_divergent_chains(&c, &sys, &q(1, 1), 2);
        assert!(found.iter().any(|p| p.x == 3 && p.y == 4 && p.n == 2));
    }
}
