//! Branch-and-bound over retraction systems on the circle `C_n^0`, heuristic
//! systems, and the restriction check for circle unions.
//!
//! A node is a prefix `μ_0 = 0, μ_1, ..., μ_k` with parents. For placed points
//! `q, y` the search keeps `D[q][y] = max_{i<=k} d(φ_i q, φ_i y)`, which is
//! final: later retractions fix both points. Appending `z` under `p` gives
//! `D[z][y] = max(D[p][y], d(z, y))`, so each child costs `O(k)`.
//!
//! A child is pruned when some placed pair already has `D/d >= target`, or
//! when an unplaced `w` has no placed point `q` it could eventually hang under:
//! `φ_k(w) = q` forces `d(φ_i w, φ_i y) = d(φ_i q, φ_i y)` for all `i <= k`, so
//! `q` is admissible only if `D[q][y] < target * d(w, y)` for every placed `y`.
//!
//! Symmetry: rotations make `μ_1 = x1` canonical, and the reflection fixing
//! `x1` lets the first placed point it moves be taken on the short side,
//! `2z < n + 2`.

use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{build_circle, circle_distance, CircleUnionLayout, PointedMetricSpace};
use crate::retraction::{lip_constant, max_lip, RetractionSystem};
use crate::scalar::{Rational, Scalar};

/// Largest circle the search accepts.
pub const MAX_SEARCH_N: usize = 64;
pub const DEFAULT_BUDGET_NODES: u64 = 100_000_000;
pub const DEFAULT_BUDGET_SECS: f64 = 600.0;
pub const BUDGET_ENV: &str = "FREELAB_BUDGET_SECS";

/// `(√(8n+1) − 1)/8`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Theorem32Bound {
    pub n: usize,
    pub value: f64,
    pub radicand: u64,
    /// Set when `n < 10`, outside the theorem's hypothesis.
    pub below_hypothesis: bool,
    /// Exact value `(r − 1)/8` when the radicand is a perfect square `r²`.
    pub exact: Option<String>,
}

pub fn theorem32_bound(n: usize) -> Theorem32Bound {
    let radicand = 8 * n as u64 + 1;
    let root = isqrt(radicand);
    let exact = (root * root == radicand).then(|| Rational::new(root as i128 - 1, 8).to_string());
    Theorem32Bound {
        n,
        value: ((radicand as f64).sqrt() - 1.0) / 8.0,
        radicand,
        below_hypothesis: n < 10,
        exact,
    }
}

fn isqrt(v: u64) -> u64 {
    let mut r = (v as f64).sqrt() as u64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

/// Search threshold, compared exactly against integer ratios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// A positive rational, serialized as `"p/q"`.
    Exact { value: String },
    /// `(√(8n+1) − 1)/8`.
    Theorem32 { n: usize },
}

impl Target {
    pub fn exact(v: Rational) -> Result<Self> {
        if v <= Rational::from_int(0) {
            return Err(Error::InvalidArgument(format!("target must be positive, got {v}")));
        }
        Ok(Target::Exact { value: v.to_string() })
    }

    pub fn theorem32(n: usize) -> Self {
        Target::Theorem32 { n }
    }

    fn rational(&self) -> Option<Rational> {
        match self {
            Target::Exact { value } => Some(crate::scalar::parse_rational(value).expect("validated at construction")),
            Target::Theorem32 { .. } => None,
        }
    }

    /// `num/den >= target`, exactly.
    pub fn ratio_ge(&self, num: u64, den: u64) -> bool {
        let (num, den) = (num as i128, den as i128);
        match self {
            Target::Exact { .. } => {
                let q = self.rational().unwrap();
                num * q.denom() >= *q.numer() * den
            }
            // num/den >= (√r − 1)/8  ⇔  8num + den >= den√r  ⇔  (8num + den)² >= r·den²
            Target::Theorem32 { n } => {
                let r = 8 * *n as i128 + 1;
                let lhs = 8 * num + den;
                lhs * lhs >= r * den * den
            }
        }
    }

    /// `v >= target` for an exact rational `v >= 0`.
    pub fn rational_ge(&self, v: &Rational) -> bool {
        self.ratio_ge(*v.numer() as u64, *v.denom() as u64)
    }

    pub fn value_f64(&self) -> f64 {
        match self {
            Target::Exact { .. } => self.rational().unwrap().to_f64(),
            Target::Theorem32 { n } => theorem32_bound(*n).value,
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Exact { value } => write!(f, "{value}"),
            Target::Theorem32 { n } => write!(f, "(sqrt({}) - 1)/8 ≈ {:.6}", 8 * n + 1, self.value_f64()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_nodes: u64,
    pub max_secs: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_nodes: DEFAULT_BUDGET_NODES, max_secs: DEFAULT_BUDGET_SECS }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if self.max_nodes == 0 || !(self.max_secs > 0.0) {
            return Err(Error::InvalidArgument("budget must allow at least one node and a positive time".into()));
        }
        Ok(())
    }

    /// Applies `FREELAB_BUDGET_SECS` when set.
    pub fn with_env(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(BUDGET_ENV) {
            self.max_secs = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("{BUDGET_ENV} must be a number of seconds, got {v:?}")))?;
        }
        Ok(self)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SearchOptions {
    pub budget: Budget,
    /// Split the tree at a shallow depth and explore subtrees in parallel.
    pub parallel: bool,
    /// Keep up to this many pruned children for independent re-checking.
    pub record_pruned: usize,
    /// Try the heuristics before searching for a counterexample.
    pub heuristics_first: bool,
}

/// A partial system: enumeration prefix and, for each placed point after the
/// centre, its parent. Serialized in frontier checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prefix {
    pub order: Vec<usize>,
    /// `parents[k]` is the parent of `order[k]`; entry 0 is ignored.
    pub parents: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum PruneReason {
    /// A placed pair has `D/d >= target`.
    Pair { x: usize, y: usize },
    /// Unplaced `w` has no admissible attachment.
    Forward { w: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedNode {
    pub prefix: Prefix,
    pub reason: PruneReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    /// No complete system has all `Lip φ_i` below the target.
    Certified,
    /// A validated system with every `Lip φ_i` below the target.
    Counterexample { order: Vec<usize>, parents: Vec<usize>, max_lip: String },
    /// Budget exhausted; `frontier` lists the unexplored subtrees.
    Indeterminate { frontier: Vec<Prefix> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchCertificate {
    pub n: usize,
    pub target: Target,
    pub target_value: f64,
    #[serde(flatten)]
    pub outcome: Outcome,
    pub nodes_explored: u64,
    pub pruned_pair: u64,
    pub pruned_forward: u64,
    pub wall_time_secs: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub pruned_samples: Vec<PrunedNode>,
}

impl SearchCertificate {
    pub fn outcome_name(&self) -> &'static str {
        match self.outcome {
            Outcome::Certified => "certified",
            Outcome::Counterexample { .. } => "counterexample",
            Outcome::Indeterminate { .. } => "indeterminate",
        }
    }

    pub fn is_certified(&self) -> bool {
        matches!(self.outcome, Outcome::Certified)
    }
}

/// Frontier checkpoint written when a search runs out of budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub target: Target,
    pub nodes_explored: u64,
    pub frontier: Vec<Prefix>,
}

#[derive(Clone)]
struct Node {
    order: Vec<u8>,
    /// Parent by point index; `NONE` when unplaced or for the centre.
    parent: Vec<u8>,
    placed: Vec<bool>,
    /// Row-major `(n+1)²` table of `D`, valid on placed pairs.
    dmax: Vec<u32>,
    reflection_open: bool,
}

const NONE: u8 = u8::MAX;

struct Ctx<'a> {
    n: usize,
    m: usize,
    dist: Vec<u32>,
    target: &'a Target,
}

impl<'a> Ctx<'a> {
    fn new(n: usize, target: &'a Target) -> Self {
        let m = n + 1;
        let dist = (0..m * m).map(|k| circle_distance(n, k / m, k % m) as u32).collect();
        Ctx { n, m, dist, target }
    }

    #[inline]
    fn d(&self, a: usize, b: usize) -> u32 {
        self.dist[a * self.m + b]
    }

    fn root(&self) -> Node {
        let m = self.m;
        let mut placed = vec![false; m];
        placed[0] = true;
        Node { order: vec![0], parent: vec![NONE; m], placed, dmax: vec![0; m * m], reflection_open: true }
    }

    fn is_reflection_fixed(&self, z: usize) -> bool {
        z == 1 || (self.n.is_multiple_of(2) && z == 1 + self.n / 2)
    }

    /// Appends `z` under `p`; `Err` names the offending placed point.
    fn child(&self, node: &Node, z: usize, p: usize) -> std::result::Result<Node, usize> {
        let m = self.m;
        let mut c = node.clone();
        for &y in &node.order {
            let y = y as usize;
            let v = if y == p { self.d(z, y) } else { c.dmax[p * m + y].max(self.d(z, y)) };
            if self.target.ratio_ge(v as u64, self.d(z, y) as u64) {
                return Err(y);
            }
            c.dmax[z * m + y] = v;
            c.dmax[y * m + z] = v;
        }
        c.order.push(z as u8);
        c.parent[z] = p as u8;
        c.placed[z] = true;
        if !self.is_reflection_fixed(z) {
            c.reflection_open = false;
        }
        Ok(c)
    }

    /// First unplaced point without an admissible attachment.
    fn forward_failure(&self, node: &Node) -> Option<usize> {
        let m = self.m;
        (1..m).filter(|&w| !node.placed[w]).find(|&w| {
            !node.order.iter().any(|&q| {
                let q = q as usize;
                node.order.iter().all(|&y| {
                    let y = y as usize;
                    !self.target.ratio_ge(node.dmax[q * m + y] as u64, self.d(w, y) as u64)
                })
            })
        })
    }

    /// Candidate `(z, p)` moves in exploration order: best ratio first.
    fn moves(&self, node: &Node) -> Vec<(usize, usize)> {
        if node.order.len() == 1 {
            return vec![(1, 0)];
        }
        let m = self.m;
        let mut out: Vec<(f64, usize, usize)> = Vec::new();
        for z in 1..m {
            if node.placed[z] {
                continue;
            }
            if node.reflection_open && !self.is_reflection_fixed(z) && 2 * z >= self.n + 2 {
                continue;
            }
            for &p in &node.order {
                let p = p as usize;
                let mut score = 0f64;
                for &y in &node.order {
                    let y = y as usize;
                    let v = if y == p { self.d(z, y) } else { node.dmax[p * m + y].max(self.d(z, y)) };
                    score = score.max(v as f64 / self.d(z, y) as f64);
                }
                out.push((score, z, p));
            }
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        out.into_iter().map(|(_, z, p)| (z, p)).collect()
    }

    fn replay(&self, prefix: &Prefix) -> Result<Node> {
        let bad = |msg: String| Error::InvalidArgument(format!("frontier prefix {:?}: {msg}", prefix.order));
        if prefix.order.first() != Some(&0) || prefix.order.len() != prefix.parents.len() {
            return Err(bad("must start at the centre with one parent per entry".into()));
        }
        let mut node = self.root();
        for k in 1..prefix.order.len() {
            let (z, p) = (prefix.order[k], prefix.parents[k]);
            if z >= self.m || p >= self.m || node.placed[z] || !node.placed[p] {
                return Err(bad(format!("entry {k} is not a valid extension")));
            }
            node = self.child(&node, z, p).map_err(|y| bad(format!("pair ({z}, {y}) already violates the target")))?;
        }
        Ok(node)
    }

    fn prefix_of(&self, node: &Node) -> Prefix {
        let order: Vec<usize> = node.order.iter().map(|&v| v as usize).collect();
        let parents = order.iter().map(|&z| if z == 0 { 0 } else { node.parent[z] as usize }).collect();
        Prefix { order, parents }
    }
}

struct Shared {
    nodes: AtomicU64,
    pruned_pair: AtomicU64,
    pruned_forward: AtomicU64,
    out_of_budget: AtomicBool,
    /// Smallest subtree index holding a counterexample.
    found_at: AtomicUsize,
    start: Instant,
    budget: Budget,
}

enum SubResult {
    Exhausted,
    Found(Node),
    Stopped(Vec<Node>),
}

fn dfs(ctx: &Ctx, root: Node, shared: &Shared, idx: usize, record: usize, pruned: &mut Vec<PrunedNode>) -> SubResult {
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        if shared.found_at.load(Ordering::Relaxed) < idx {
            return SubResult::Exhausted;
        }
        let count = shared.nodes.fetch_add(1, Ordering::Relaxed) + 1;
        let over = count > shared.budget.max_nodes
            || (count.is_multiple_of(4096) && shared.start.elapsed().as_secs_f64() > shared.budget.max_secs)
            || shared.out_of_budget.load(Ordering::Relaxed);
        if over {
            shared.out_of_budget.store(true, Ordering::Relaxed);
            stack.push(node);
            return SubResult::Stopped(stack);
        }
        if node.order.len() == ctx.m {
            return SubResult::Found(node);
        }
        let mut children = Vec::new();
        for (z, p) in ctx.moves(&node) {
            match ctx.child(&node, z, p) {
                Err(y) => {
                    shared.pruned_pair.fetch_add(1, Ordering::Relaxed);
                    if pruned.len() < record {
                        let mut prefix = ctx.prefix_of(&node);
                        prefix.order.push(z);
                        prefix.parents.push(p);
                        pruned.push(PrunedNode { prefix, reason: PruneReason::Pair { x: z, y } });
                    }
                }
                Ok(c) => match ctx.forward_failure(&c) {
                    Some(w) => {
                        shared.pruned_forward.fetch_add(1, Ordering::Relaxed);
                        if pruned.len() < record {
                            pruned.push(PrunedNode { prefix: ctx.prefix_of(&c), reason: PruneReason::Forward { w } });
                        }
                    }
                    None => children.push(c),
                },
            }
        }
        stack.extend(children.into_iter().rev());
    }
    SubResult::Exhausted
}

/// Exhaustive search for a system on `C_n^0` with every `Lip φ_i` below
/// `target`. `resume` restricts the search to previously saved subtrees.
pub fn certify_circle_lower_bound(
    n: usize,
    target: &Target,
    opts: &SearchOptions,
    resume: Option<&Checkpoint>,
) -> Result<SearchCertificate> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("circle needs n >= 3, got {n}")));
    }
    if n > MAX_SEARCH_N {
        return Err(Error::CapExceeded { what: "search circle size n", value: n, cap: MAX_SEARCH_N });
    }
    if let Target::Exact { value } = target {
        Target::exact(crate::scalar::parse_rational(value).map_err(Error::InvalidArgument)?)?;
    }
    opts.budget.validate()?;
    let start = Instant::now();
    let ctx = Ctx::new(n, target);
    let mut base_nodes = 0;
    let roots: Vec<Node> = match resume {
        Some(cp) => {
            if cp.n != n || &cp.target != target {
                return Err(Error::InvalidArgument("checkpoint was written for a different n or target".into()));
            }
            base_nodes = cp.nodes_explored;
            cp.frontier.iter().map(|p| ctx.replay(p)).collect::<Result<_>>()?
        }
        None => vec![ctx.root()],
    };
    let finish = |outcome: Outcome, shared: &Shared, pruned: Vec<PrunedNode>| SearchCertificate {
        n,
        target: target.clone(),
        target_value: target.value_f64(),
        outcome,
        nodes_explored: base_nodes + shared.nodes.load(Ordering::Relaxed),
        pruned_pair: shared.pruned_pair.load(Ordering::Relaxed),
        pruned_forward: shared.pruned_forward.load(Ordering::Relaxed),
        wall_time_secs: start.elapsed().as_secs_f64(),
        pruned_samples: pruned,
    };
    let shared = Shared {
        nodes: AtomicU64::new(0),
        pruned_pair: AtomicU64::new(0),
        pruned_forward: AtomicU64::new(0),
        out_of_budget: AtomicBool::new(false),
        found_at: AtomicUsize::new(usize::MAX),
        start,
        budget: opts.budget,
    };

    if opts.heuristics_first && resume.is_none() {
        for strategy in Strategy::ALL {
            let h = heuristic_circle_system(n, strategy)?;
            if !target.rational_ge(&h.achieved) {
                let outcome = counterexample_outcome(n, target, &h.prefix)?;
                return Ok(finish(outcome, &shared, Vec::new()));
            }
        }
    }

    // Split into subtrees: serial mode keeps the given roots, parallel mode
    // expands them a few levels first. Subtree order is DFS order either way.
    let mut subtrees = roots;
    if opts.parallel {
        for _ in 0..3 {
            let mut next = Vec::new();
            for node in subtrees {
                if node.order.len() == ctx.m {
                    next.push(node);
                    continue;
                }
                for (z, p) in ctx.moves(&node) {
                    if let Ok(c) = ctx.child(&node, z, p) {
                        if ctx.forward_failure(&c).is_none() {
                            next.push(c);
                        }
                    }
                }
            }
            subtrees = next;
        }
    }

    let record = opts.record_pruned;
    let results: Vec<(SubResult, Vec<PrunedNode>)> = if opts.parallel {
        subtrees
            .into_par_iter()
            .enumerate()
            .map(|(i, root)| {
                let mut pruned = Vec::new();
                let r = dfs(&ctx, root, &shared, i, record, &mut pruned);
                if matches!(r, SubResult::Found(_)) {
                    shared.found_at.fetch_min(i, Ordering::Relaxed);
                }
                (r, pruned)
            })
            .collect()
    } else {
        let mut out = Vec::new();
        let mut pruned = Vec::new();
        for (i, root) in subtrees.into_iter().enumerate() {
            let r = dfs(&ctx, root, &shared, i, record.saturating_sub(pruned.len()), &mut pruned);
            let stop = !matches!(r, SubResult::Exhausted);
            out.push((r, std::mem::take(&mut pruned)));
            if stop {
                break;
            }
        }
        out
    };

    let mut samples = Vec::new();
    let mut frontier = Vec::new();
    let mut found = None;
    let mut stopped = false;
    for (r, pruned) in results {
        for p in pruned {
            if samples.len() < record {
                samples.push(p);
            }
        }
        match r {
            SubResult::Exhausted => {}
            SubResult::Found(node) if !stopped => {
                found.get_or_insert(node);
            }
            SubResult::Found(node) => frontier.push(ctx.prefix_of(&node)),
            SubResult::Stopped(rest) => {
                stopped = true;
                frontier.extend(rest.iter().map(|nd| ctx.prefix_of(nd)));
            }
        }
        if found.is_some() {
            break;
        }
    }
    let outcome = match found {
        Some(node) => counterexample_outcome(n, target, &ctx.prefix_of(&node))?,
        None if stopped => Outcome::Indeterminate { frontier },
        None => Outcome::Certified,
    };
    Ok(finish(outcome, &shared, samples))
}

fn counterexample_outcome(n: usize, target: &Target, prefix: &Prefix) -> Result<Outcome> {
    let (space, sys) = system_from_prefix(n, prefix)?;
    let achieved = max_lip(&space, &sys);
    if target.rational_ge(&achieved) {
        return Err(Error::InvalidSystem(format!("counterexample reaches {achieved}, not below the target")));
    }
    Ok(Outcome::Counterexample { order: prefix.order.clone(), parents: prefix.parents.clone(), max_lip: achieved.to_string() })
}

/// Builds the circle and the validated system for a complete prefix.
pub fn system_from_prefix(n: usize, prefix: &Prefix) -> Result<(PointedMetricSpace<Rational>, RetractionSystem)> {
    let space = build_circle(n)?;
    if prefix.order.len() != space.len() || prefix.parents.len() != space.len() {
        return Err(Error::InvalidSystem("prefix does not enumerate the whole circle".into()));
    }
    let mut parent = vec![None; space.len()];
    for k in 1..prefix.order.len() {
        parent[prefix.order[k]] = Some(prefix.parents[k]);
    }
    let sys = RetractionSystem::build(&space, prefix.order.clone(), parent)?;
    Ok((space, sys))
}

/// Re-derives a pruning decision from scratch: `φ_i` of placed points by
/// walking parents, then the violated ratio.
pub fn recheck_pruned(n: usize, target: &Target, node: &PrunedNode) -> bool {
    let order = &node.prefix.order;
    let k = order.len() - 1;
    let mut parent = vec![usize::MAX; n + 1];
    let mut pos = vec![usize::MAX; n + 1];
    for (i, &z) in order.iter().enumerate() {
        pos[z] = i;
        if i > 0 {
            parent[z] = node.prefix.parents[i];
        }
    }
    let phi = |i: usize, mut x: usize| {
        while pos[x] > i {
            x = parent[x];
        }
        x
    };
    let big_d = |q: usize, y: usize| (0..=k).map(|i| circle_distance(n, phi(i, q), phi(i, y))).max().unwrap_or(0);
    match &node.reason {
        PruneReason::Pair { x, y } => target.ratio_ge(big_d(*x, *y) as u64, circle_distance(n, *x, *y) as u64),
        PruneReason::Forward { w } => order.iter().all(|&q| {
            order.iter().any(|&y| target.ratio_ge(big_d(q, y) as u64, circle_distance(n, *w, y) as u64))
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    PeelBalanced,
    PeelOneArc,
    GreedyMinLip,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::PeelOneArc, Strategy::PeelBalanced, Strategy::GreedyMinLip];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::PeelBalanced => "peel-balanced",
            Strategy::PeelOneArc => "peel-one-arc",
            Strategy::GreedyMinLip => "greedy-min-lip",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy {s:?} (peel-balanced, peel-one-arc, greedy-min-lip)")))
    }
}

#[derive(Clone, Debug)]
pub struct HeuristicResult {
    pub strategy: Strategy,
    pub prefix: Prefix,
    pub system: RetractionSystem,
    pub space: PointedMetricSpace<Rational>,
    pub achieved: Rational,
}

/// A good (not optimal) system on `C_n^0`.
///
/// The peel strategies fix the rim order (`x1, x2, ..., xn`, or alternating
/// outwards from `x1`) and hang each point on its nearest placed point, ties
/// to the earliest placed. The greedy strategy picks, at every step, the move
/// with the smallest new pair ratio `D/d`, ties to the smallest point and
/// parent index.
pub fn heuristic_circle_system(n: usize, strategy: Strategy) -> Result<HeuristicResult> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("circle needs n >= 3, got {n}")));
    }
    let prefix = match strategy {
        Strategy::PeelOneArc => peel(n, (1..=n).collect()),
        Strategy::PeelBalanced => {
            let mut rim = vec![1];
            let (mut lo, mut hi) = (2, n);
            while lo <= hi {
                rim.push(lo);
                if hi != lo {
                    rim.push(hi);
                }
                lo += 1;
                hi -= 1;
            }
            peel(n, rim)
        }
        Strategy::GreedyMinLip => greedy(n),
    };
    let (space, system) = system_from_prefix(n, &prefix)?;
    let achieved = max_lip(&space, &system);
    Ok(HeuristicResult { strategy, prefix, system, space, achieved })
}

fn peel(n: usize, rim: Vec<usize>) -> Prefix {
    let mut order = vec![0];
    let mut parents = vec![0];
    for z in rim {
        let p = *order
            .iter()
            .min_by_key(|&&q| circle_distance(n, z, q))
            .expect("centre is placed");
        order.push(z);
        parents.push(p);
    }
    Prefix { order, parents }
}

fn greedy(n: usize) -> Prefix {
    // Any target above every achievable ratio keeps `child` from pruning.
    let loose = Target::Exact { value: Rational::from_int(4 * n as i64 + 4).to_string() };
    let ctx = Ctx::new(n, &loose);
    let mut node = ctx.root();
    while node.order.len() < ctx.m {
        let mut best: Option<((u64, u64), usize, usize)> = None;
        for z in 1..ctx.m {
            if node.placed[z] {
                continue;
            }
            for &p in &node.order {
                let p = p as usize;
                let mut worst = (0u64, 1u64);
                for &y in &node.order {
                    let y = y as usize;
                    let v = if y == p { ctx.d(z, y) } else { node.dmax[p * ctx.m + y].max(ctx.d(z, y)) } as u64;
                    let d = ctx.d(z, y) as u64;
                    if v * worst.1 > worst.0 * d {
                        worst = (v, d);
                    }
                }
                let better = match best {
                    None => true,
                    Some((b, _, _)) => worst.0 * b.1 < b.0 * worst.1,
                };
                if better {
                    best = Some((worst, z, p));
                }
            }
        }
        let (_, z, p) = best.expect("an unplaced point remains");
        node = ctx.child(&node, z, p).unwrap_or_else(|_| unreachable!("loose target never prunes"));
    }
    ctx.prefix_of(&node)
}

/// Outcome of the restriction argument on one circle of a union.
#[derive(Clone, Debug, PartialEq)]
pub enum RestrictionOutcome {
    /// Some `φ_j` with `j` at or after the circle's first point maps rim point
    /// `x` off the circle; `lip` is the measured `Lip φ_j`.
    Escaped { j: usize, x: usize, lip: Rational },
    /// Every such `φ_j` keeps the circle; the restricted system on `C^0` has
    /// the reported maximal Lipschitz constant.
    Contained { restricted_max_lip: Rational, restricted: RetractionSystem },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestrictionReport {
    pub level: usize,
    pub circle_size: usize,
    pub first_index: usize,
    pub outcome: RestrictionOutcome,
    /// Escape threshold `4^level` or `theorem32_bound(4^level)`.
    pub threshold: f64,
    /// Whether the measured value reaches the threshold of its branch.
    pub holds: bool,
}

/// Applies the circle-union dichotomy to circle `level` of `layout`.
pub fn restriction_check(
    space: &PointedMetricSpace<Rational>,
    layout: &CircleUnionLayout,
    sys: &RetractionSystem,
    level: usize,
) -> Result<RestrictionReport> {
    if level < 1 || level > layout.k_max {
        return Err(Error::OutOfRange { index: level, limit: layout.k_max + 1 });
    }
    let size = CircleUnionLayout::circle_size(level);
    let range = layout.level_range(level);
    let on_circle = |x: usize| range.contains(&x);
    let first_index = (0..sys.len()).find(|&k| on_circle(sys.mu(k))).expect("circle is enumerated");
    for j in first_index..sys.len() {
        let row = &sys.phi_table()[j];
        if let Some(x) = range.clone().find(|&x| !on_circle(row[x])) {
            let lip = lip_constant(space, sys, j)?.value;
            let holds = lip >= Rational::from_int(size as i64);
            return Ok(RestrictionReport {
                level,
                circle_size: size,
                first_index,
                outcome: RestrictionOutcome::Escaped { j, x, lip },
                threshold: size as f64,
                holds,
            });
        }
    }
    // Restrict: circle point k of the union is local index `k - start + 1`.
    let circle = build_circle(size)?;
    let start = range.start;
    let local = |x: usize| if x == space.base() { 0 } else { x - start + 1 };
    let steps: Vec<usize> = (first_index..sys.len()).filter(|&k| on_circle(sys.mu(k))).collect();
    let mut order = vec![0];
    order.extend(steps.iter().map(|&k| local(sys.mu(k))));
    let mut table = vec![vec![0; size + 1]];
    for &s in &steps {
        let row = &sys.phi_table()[s];
        let mut local_row = vec![0; size + 1];
        for x in range.clone() {
            local_row[local(x)] = local(row[x]);
        }
        table.push(local_row);
    }
    let restricted = RetractionSystem::from_phi_table(&circle, order, &table)?;
    let restricted_max_lip = max_lip(&circle, &restricted);
    let bound = Target::theorem32(size);
    let holds = bound.rational_ge(&restricted_max_lip);
    Ok(RestrictionReport {
        level,
        circle_size: size,
        first_index,
        outcome: RestrictionOutcome::Contained { restricted_max_lip, restricted },
        threshold: bound.value_f64(),
        holds,
    })
}

/// Named systems on a circle union: each circle takes a heuristic circle
/// system in turn (`inner-first` or `outer-first`), plus one system that
/// hangs most of the outer circle below the inner one, so its retractions
/// escape the outer circle.
pub fn union_heuristic_systems(k_max: usize) -> Result<Vec<(String, PointedMetricSpace<Rational>, RetractionSystem)>> {
    let layout = CircleUnionLayout::new(k_max)?;
    let space = crate::metric::build_circle_union(k_max)?;
    let mut out = Vec::new();
    let levels_in: Vec<usize> = (1..=k_max).collect();
    let levels_out: Vec<usize> = (1..=k_max).rev().collect();
    for strategy in Strategy::ALL {
        for (tag, levels) in [("inner-first", &levels_in), ("outer-first", &levels_out)] {
            let mut order = vec![space.base()];
            let mut parent = vec![None; space.len()];
            for &k in levels {
                let h = heuristic_circle_system(CircleUnionLayout::circle_size(k), strategy)?;
                let map = |local: usize| if local == 0 { space.base() } else { layout.point(k, local) };
                for (i, &z) in h.prefix.order.iter().enumerate().skip(1) {
                    order.push(map(z));
                    parent[map(z)] = Some(map(h.prefix.parents[i]));
                }
            }
            let sys = RetractionSystem::build(&space, order, parent)?;
            out.push((format!("{}/{tag}", strategy.name()), space.clone(), sys));
        }
    }
    // Escaping: the outer circle's first point goes first, then the inner
    // circles, then the rest of the outer circle hangs off the inner circle.
    let outer = layout.point(k_max, 1);
    let mut order = vec![space.base(), outer];
    let mut parent = vec![None; space.len()];
    parent[outer] = Some(space.base());
    let anchor = layout.point(1, 1);
    for k in 1..k_max {
        for x in layout.level_range(k) {
            order.push(x);
            parent[x] = Some(if x == anchor { space.base() } else { anchor });
        }
    }
    for x in layout.level_range(k_max).skip(1) {
        order.push(x);
        parent[x] = Some(anchor);
    }
    out.push(("escaping".to_string(), space.clone(), RetractionSystem::build(&space, order, parent)?));
    Ok(out)
}
