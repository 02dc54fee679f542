//! Free-space (Kantorovich-Rubinstein) norms of finitely supported measures.
//!
//! Two independent routes compute the same number:
//!
//! * [`kr_norm`] ships the positive part onto the negative part with the base
//!   point absorbing the imbalance (min-cost transport on support ∪ {base});
//! * [`kr_norm_dual`] maximises `Σ a_x f(x)` over functions that vanish at the
//!   base and are 1-Lipschitz, using the simplex method on one variable per
//!   support point. The optimum extends to all of `M` without loss.
//!
//! On exact spaces both routes are exact and must agree to the last bit.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::flow::{min_cost_transport, TransportPlan};
use crate::lp;
use crate::metric::PointedMetricSpace;
use crate::scalar::Scalar;

/// `Σ a_x δ_x` with the base point's Dirac identified with zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure<S> {
    len: usize,
    base: usize,
    coeffs: BTreeMap<usize, S>,
}

impl<S: Scalar> Measure<S> {
    pub fn zero(space: &PointedMetricSpace<S>) -> Self {
        Measure { len: space.len(), base: space.base(), coeffs: BTreeMap::new() }
    }

    pub fn dirac(space: &PointedMetricSpace<S>, x: usize) -> Self {
        let mut m = Self::zero(space);
        m.add_at(x, S::one());
        m
    }

    /// `δ_x - δ_y` (unnormalised molecule).
    pub fn molecule(space: &PointedMetricSpace<S>, x: usize, y: usize) -> Self {
        let mut m = Self::zero(space);
        m.add_at(x, S::one());
        m.add_at(y, -S::one());
        m
    }

    pub fn from_pairs(space: &PointedMetricSpace<S>, pairs: impl IntoIterator<Item = (usize, S)>) -> Result<Self> {
        let mut m = Self::zero(space);
        for (x, a) in pairs {
            if x >= space.len() {
                return Err(Error::OutOfRange { index: x, limit: space.len() });
            }
            if !a.is_finite_value() {
                return Err(Error::InvalidArgument(format!("non-finite coefficient at point {x}")));
            }
            m.add_at(x, a);
        }
        Ok(m)
    }

    /// Parses `"x1:1,x2:1/2,x3:-3/2"`. Commas inside parentheses belong to
    /// labels such as `(2,3)`.
    pub fn parse(space: &PointedMetricSpace<S>, text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, item) in split_top_level(text).into_iter().enumerate() {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let (label, coeff) = item
                .rsplit_once(':')
                .ok_or_else(|| Error::parse(format!("measure item {}", n + 1), format!("expected label:coeff, got {item:?}")))?;
            let x = space.index_of(label.trim())?;
            let a = S::parse_str(coeff).map_err(|e| Error::parse(format!("measure item {}", n + 1), e))?;
            pairs.push((x, a));
        }
        Self::from_pairs(space, pairs)
    }

    pub fn add_at(&mut self, x: usize, a: S) {
        if x == self.base {
            return;
        }
        let entry = self.coeffs.entry(x).or_insert_with(S::zero);
        *entry += a;
        if entry.is_zero() {
            self.coeffs.remove(&x);
        }
    }

    pub fn coeff(&self, x: usize) -> S {
        self.coeffs.get(&x).cloned().unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &S)> {
        self.coeffs.iter().map(|(k, v)| (*k, v))
    }

    pub fn support(&self) -> Vec<usize> {
        self.coeffs.keys().copied().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn space_len(&self) -> usize {
        self.len
    }

    /// Implicit coefficient carried by the base point: `-Σ a_x`.
    pub fn base_mass(&self) -> S {
        let mut s = S::zero();
        for v in self.coeffs.values() {
            s -= v.clone();
        }
        s
    }

    pub fn scaled(&self, c: &S) -> Self {
        let mut out = Measure { len: self.len, base: self.base, coeffs: BTreeMap::new() };
        for (x, a) in &self.coeffs {
            out.add_at(*x, a.clone() * c.clone());
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (x, a) in &other.coeffs {
            out.add_at(*x, a.clone());
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (x, a) in &other.coeffs {
            out.add_at(*x, -a.clone());
        }
        out
    }

    /// Pairing `⟨μ, f⟩ = Σ a_x f(x)`.
    pub fn pair(&self, f: &LipschitzFunction<S>) -> S {
        let mut s = S::zero();
        for (x, a) in &self.coeffs {
            s += a.clone() * f.values[*x].clone();
        }
        s
    }
}

impl<S: Scalar> fmt::Display for Measure<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.coeffs.iter().map(|(x, a)| format!("{a}·δ{x}")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

pub(crate) fn split_top_level(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' | ';' if depth == 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out
}

/// Function values on every point of a space, zero at the base.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzFunction<S> {
    values: Vec<S>,
}

impl<S: Scalar> LipschitzFunction<S> {
    pub fn new(space: &PointedMetricSpace<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::InvalidArgument(format!(
                "function has {} values for {} points",
                values.len(),
                space.len()
            )));
        }
        if !values[space.base()].is_zero_tol() {
            return Err(Error::InvalidArgument("function must vanish at the base point".into()));
        }
        Ok(LipschitzFunction { values })
    }

    pub fn zero(space: &PointedMetricSpace<S>) -> Self {
        LipschitzFunction { values: vec![S::zero(); space.len()] }
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn value(&self, x: usize) -> &S {
        &self.values[x]
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    /// Best Lipschitz constant `max_{x≠y} |f(x)-f(y)| / d(x,y)`.
    pub fn lipschitz_constant(&self, space: &PointedMetricSpace<S>) -> S {
        let n = space.len();
        let mut best = S::zero();
        for x in 0..n {
            for y in (x + 1)..n {
                let r = (self.values[x].clone() - self.values[y].clone()).abs_val() / space.d(x, y).clone();
                if r > best {
                    best = r;
                }
            }
        }
        best
    }
}

/// Optimal transport plan of `μ` with point indices; the base absorbs imbalance.
pub fn kr_transport<S: Scalar>(space: &PointedMetricSpace<S>, mu: &Measure<S>) -> TransportPlan<S> {
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    for (x, a) in mu.iter() {
        if a.is_pos() {
            supply.push((x, a.clone()));
        } else if a.is_neg() {
            demand.push((x, -a.clone()));
        }
    }
    let b = mu.base_mass();
    if b.is_pos() {
        supply.push((space.base(), b));
    } else if b.is_neg() {
        demand.push((space.base(), -b));
    }
    min_cost_transport(&supply, &demand, |a, c| space.d(a, c).clone())
}

/// `‖μ‖_{F(M)}` computed as a min-cost transport problem.
pub fn kr_norm<S: Scalar>(space: &PointedMetricSpace<S>, mu: &Measure<S>) -> S {
    kr_transport(space, mu).cost
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution<S> {
    pub value: S,
    pub witness: LipschitzFunction<S>,
}

/// `‖μ‖_{F(M)}` as `max ⟨μ, f⟩` over `f ∈ Lip_0(M)` with `‖f‖ <= 1`.
///
/// Among all optimal witnesses the one returned has the lexicographically
/// smallest values on the support of `μ` (ordered by point index). Off the
/// support it is the value closest to zero permitted by the support values,
/// i.e. the median of `0` and the two extremal 1-Lipschitz extensions.
pub fn kr_norm_dual<S: Scalar>(space: &PointedMetricSpace<S>, mu: &Measure<S>) -> Result<DualSolution<S>> {
    let base = space.base();
    let support = mu.support();
    let r = support.len();
    // Nodes: 0 = base, 1..=r = support.
    let mut nodes = vec![base];
    nodes.extend(&support);

    let mut tight: Vec<(usize, usize, S)> = Vec::new(); // f_u - f_v <= w becomes equality
    let value;
    if r == 0 {
        value = S::zero();
    } else {
        // Variables g_u = f_u + d(u,0) in [0, 2 d(u,0)].
        let d0: Vec<S> = support.iter().map(|&u| space.d(u, base).clone()).collect();
        let c: Vec<S> = support.iter().map(|&u| mu.coeff(u)).collect();
        let mut rows: Vec<Vec<S>> = Vec::with_capacity(r * r);
        let mut rhs: Vec<S> = Vec::with_capacity(r * r);
        let mut meaning: Vec<(usize, usize)> = Vec::with_capacity(r * r); // node ids (u, v): f_u - f_v <= d
        for a in 0..r {
            for b in 0..r {
                if a == b {
                    continue;
                }
                let mut row = vec![S::zero(); r];
                row[a] = S::one();
                row[b] = -S::one();
                rows.push(row);
                rhs.push(space.d(support[a], support[b]).clone() + d0[a].clone() - d0[b].clone());
                meaning.push((a + 1, b + 1));
            }
        }
        for a in 0..r {
            let mut row = vec![S::zero(); r];
            row[a] = S::one();
            rows.push(row);
            rhs.push(d0[a].clone() + d0[a].clone());
            meaning.push((a + 1, 0));
        }
        // Float round-off can push a right-hand side a hair below zero.
        for v in rhs.iter_mut() {
            if v.is_zero_tol() && *v < S::zero() {
                *v = S::zero();
            }
        }
        let sol = lp::maximize(&c, &rows, &rhs)?;
        let offset = c.iter().zip(&d0).fold(S::zero(), |acc, (ci, di)| acc + ci.clone() * di.clone());
        value = sol.objective.clone() - offset;
        for (k, y) in sol.row_duals.iter().enumerate() {
            if y.is_pos() {
                let (u, v) = meaning[k];
                let w = space.d(nodes[u], nodes[v]).clone();
                tight.push((u, v, w));
            }
        }
        for (a, y) in sol.reduced_costs.iter().enumerate() {
            if y.is_pos() {
                tight.push((0, a + 1, d0[a].clone()));
            }
        }
    }

    // Pointwise-minimal optimal potentials on the node set via shortest paths:
    // a constraint f_u - f_v <= w is an arc u -> v of weight w, and
    // f_min(v) = -dist(base -> v).
    let k = nodes.len();
    let mut arcs: Vec<(usize, usize, S)> = Vec::with_capacity(k * k + tight.len());
    for u in 0..k {
        for v in 0..k {
            if u != v {
                arcs.push((u, v, space.d(nodes[u], nodes[v]).clone()));
            }
        }
    }
    for (u, v, w) in tight {
        arcs.push((v, u, -w));
    }
    let mut dist: Vec<Option<S>> = vec![None; k];
    dist[0] = Some(S::zero());
    for _ in 0..k {
        let mut changed = false;
        for (u, v, w) in &arcs {
            let Some(du) = dist[*u].clone() else { continue };
            let cand = du + w.clone();
            if dist[*v].as_ref().is_none_or(|dv| dv.gt_tol(&cand)) {
                dist[*v] = Some(cand);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut fixed: Vec<S> = dist.into_iter().map(|d| -d.expect("complete graph is connected")).collect();
    fixed[0] = S::zero();

    let mut values = vec![S::zero(); space.len()];
    for (i, &p) in nodes.iter().enumerate() {
        values[p] = fixed[i].clone();
    }
    for x in 0..space.len() {
        if nodes.contains(&x) {
            continue;
        }
        let mut lower: Option<S> = None;
        let mut upper: Option<S> = None;
        for (i, &p) in nodes.iter().enumerate() {
            let lo = fixed[i].clone() - space.d(p, x).clone();
            let hi = fixed[i].clone() + space.d(p, x).clone();
            if lower.as_ref().is_none_or(|l| lo > *l) {
                lower = Some(lo);
            }
            if upper.as_ref().is_none_or(|u| hi < *u) {
                upper = Some(hi);
            }
        }
        let (lo, hi) = (lower.unwrap(), upper.unwrap());
        values[x] = if lo > S::zero() {
            lo
        } else if hi < S::zero() {
            hi
        } else {
            S::zero()
        };
    }
    let witness = LipschitzFunction { values };
    debug_assert!(mu.pair(&witness).eq_tol(&value), "witness does not attain the optimum");
    Ok(DualSolution { value, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::build_circle;
    use crate::scalar::{q, Rational};

    #[test]
    fn dirac_and_molecule_norms() {
        let c = build_circle(10).unwrap();
        assert_eq!(kr_norm(&c, &Measure::dirac(&c, 1)), q(10, 1));
        assert_eq!(kr_norm(&c, &Measure::molecule(&c, 3, 9)), q(4, 1));
    }

    #[test]
    fn three_point_measure() {
        let c = build_circle(10).unwrap();
        let mu = Measure::parse(&c, "x1:1,x2:1,x3:-2").unwrap();
        assert_eq!(kr_norm(&c, &mu), q(3, 1));
        let dual = kr_norm_dual(&c, &mu).unwrap();
        assert_eq!(dual.value, q(3, 1));
        assert!(dual.witness.lipschitz_constant(&c) <= q(1, 1));
        assert_eq!(mu.pair(&dual.witness), q(3, 1));
        // Lexicographically smallest support values: f(x1) - f(x3) = 2, f(x2) - f(x3) = 1,
        // and f(x3) pushed down to -d(x3, 0).
        let w = dual.witness.values();
        assert_eq!((w[1], w[2], w[3]), (q(-8, 1), q(-9, 1), q(-10, 1)));
    }

    #[test]
    fn molecule_dual_witness() {
        let c = build_circle(10).unwrap();
        let mu = Measure::molecule(&c, 3, 9);
        let dual = kr_norm_dual(&c, &mu).unwrap();
        assert_eq!(dual.value, q(4, 1));
        let w = dual.witness.values();
        assert_eq!(w[3] - w[9], q(4, 1));
        assert!(dual.witness.lipschitz_constant(&c) <= q(1, 1));
    }

    #[test]
    fn zero_measure() {
        let c = build_circle(10).unwrap();
        let mu = Measure::zero(&c);
        assert_eq!(kr_norm(&c, &mu), Rational::from_int(0));
        let dual = kr_norm_dual(&c, &mu).unwrap();
        assert_eq!(dual.value, q(0, 1));
        assert!(dual.witness.values().iter().all(|v| *v == q(0, 1)));
    }

    #[test]
    fn base_is_ignored() {
        let c = build_circle(5).unwrap();
        let mu = Measure::from_pairs(&c, [(0, q(7, 1)), (2, q(1, 2))]).unwrap();
        assert_eq!(mu.support(), vec![2]);
        assert_eq!(mu.base_mass(), q(-1, 2));
        assert_eq!(kr_norm(&c, &mu), q(5, 2));
    }

    #[test]
    fn parse_errors_are_located() {
        let c = build_circle(5).unwrap();
        assert!(matches!(Measure::parse(&c, "x1:1,x9:2"), Err(Error::UnknownLabel(_))));
        assert!(matches!(Measure::parse(&c, "x1:1,x2"), Err(Error::Parse { .. })));
        assert!(matches!(Measure::parse(&c, "x1:0.5"), Err(Error::Parse { .. })));
    }

    #[test]
    fn labels_with_commas() {
        assert_eq!(split_top_level("(1,2):1,(0,3):-1"), vec!["(1,2):1", "(0,3):-1"]);
    }
}
