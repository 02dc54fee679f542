//! Balanced transportation problems solved by successive shortest paths.
//!
//! Arcs run from every source to every sink with unbounded capacity, so the
//! residual graph is bipartite. Shortest paths are found with a label-correcting
//! Bellman-Ford sweep, which tolerates the negative costs on reverse arcs.

use crate::scalar::Scalar;

/// An optimal plan: total cost and the nonzero shipments `(source, sink, amount)`,
/// where `source` and `sink` are the caller's node ids.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan<S> {
    pub cost: S,
    pub moves: Vec<(usize, usize, S)>,
}

/// Minimum-cost shipment of `supply` onto `demand`.
///
/// Amounts must be positive and both sides must carry the same total mass
/// (up to tolerance on float data). `cost(a, b)` is queried for a source id
/// `a` and a sink id `b`.
pub fn min_cost_transport<S, F>(supply: &[(usize, S)], demand: &[(usize, S)], cost: F) -> TransportPlan<S>
where
    S: Scalar,
    F: Fn(usize, usize) -> S,
{
    if supply.is_empty() || demand.is_empty() {
        return TransportPlan { cost: S::zero(), moves: Vec::new() };
    }
    // A lone source or sink leaves no choice.
    if supply.len() == 1 {
        let (a, _) = supply[0];
        let moves: Vec<_> = demand.iter().map(|(b, m)| (a, *b, m.clone())).collect();
        let total = moves.iter().fold(S::zero(), |acc, (a, b, m)| acc + m.clone() * cost(*a, *b));
        return TransportPlan { cost: total, moves };
    }
    if demand.len() == 1 {
        let (b, _) = demand[0];
        let moves: Vec<_> = supply.iter().map(|(a, m)| (*a, b, m.clone())).collect();
        let total = moves.iter().fold(S::zero(), |acc, (a, b, m)| acc + m.clone() * cost(*a, *b));
        return TransportPlan { cost: total, moves };
    }

    let ns = supply.len();
    let nt = demand.len();
    let c: Vec<S> = supply
        .iter()
        .flat_map(|(a, _)| demand.iter().map(|(b, _)| cost(*a, *b)).collect::<Vec<_>>())
        .collect();
    let mut flow = vec![S::zero(); ns * nt];
    let mut rem_s: Vec<S> = supply.iter().map(|(_, m)| m.clone()).collect();
    let mut rem_t: Vec<S> = demand.iter().map(|(_, m)| m.clone()).collect();

    loop {
        if !rem_s.iter().any(|r| r.is_pos()) || !rem_t.iter().any(|r| r.is_pos()) {
            break;
        }
        let mut dist_s: Vec<Option<S>> =
            rem_s.iter().map(|r| if r.is_pos() { Some(S::zero()) } else { None }).collect();
        let mut dist_t: Vec<Option<S>> = vec![None; nt];
        let mut pred_s: Vec<Option<usize>> = vec![None; ns];
        let mut pred_t: Vec<usize> = vec![usize::MAX; nt];

        let mut changed = true;
        let mut rounds = 0;
        while changed {
            changed = false;
            rounds += 1;
            debug_assert!(rounds <= 2 * (ns + nt) + 2, "negative cycle in residual graph");
            for i in 0..ns {
                let Some(ds) = dist_s[i].clone() else { continue };
                for j in 0..nt {
                    let cand = ds.clone() + c[i * nt + j].clone();
                    if dist_t[j].as_ref().is_none_or(|dt| dt.gt_tol(&cand)) {
                        dist_t[j] = Some(cand);
                        pred_t[j] = i;
                        changed = true;
                    }
                }
            }
            for j in 0..nt {
                let Some(dt) = dist_t[j].clone() else { continue };
                for i in 0..ns {
                    if !flow[i * nt + j].is_pos() {
                        continue;
                    }
                    let cand = dt.clone() - c[i * nt + j].clone();
                    if dist_s[i].as_ref().is_none_or(|ds| ds.gt_tol(&cand)) {
                        dist_s[i] = Some(cand);
                        pred_s[i] = Some(j);
                        changed = true;
                    }
                }
            }
            if rounds > 4 * (ns + nt) + 8 {
                break;
            }
        }

        // Cheapest reachable sink that still needs mass.
        let mut target: Option<usize> = None;
        for j in 0..nt {
            if !rem_t[j].is_pos() {
                continue;
            }
            if let Some(dt) = &dist_t[j] {
                let better = match target {
                    None => true,
                    Some(t) => dist_t[t].as_ref().unwrap().gt_tol(dt),
                };
                if better {
                    target = Some(j);
                }
            }
        }
        let Some(end) = target else { break };

        // Walk back to the originating source, collecting the bottleneck.
        let mut bottleneck = rem_t[end].clone();
        let mut path: Vec<(usize, usize, bool)> = Vec::new(); // (i, j, forward)
        let mut j = end;
        let start;
        loop {
            let i = pred_t[j];
            path.push((i, j, true));
            match pred_s[i] {
                Some(jp) => {
                    let f = flow[i * nt + jp].clone();
                    if f < bottleneck {
                        bottleneck = f;
                    }
                    path.push((i, jp, false));
                    j = jp;
                }
                None => {
                    start = i;
                    break;
                }
            }
        }
        if rem_s[start] < bottleneck {
            bottleneck = rem_s[start].clone();
        }
        if !bottleneck.is_pos() {
            break;
        }
        for (i, j, forward) in path {
            let slot = &mut flow[i * nt + j];
            if forward {
                *slot += bottleneck.clone();
            } else {
                *slot -= bottleneck.clone();
            }
        }
        rem_s[start] -= bottleneck.clone();
        rem_t[end] -= bottleneck;
    }

    let mut total = S::zero();
    let mut moves = Vec::new();
    for i in 0..ns {
        for j in 0..nt {
            let f = &flow[i * nt + j];
            if f.is_pos() {
                total += f.clone() * c[i * nt + j].clone();
                moves.push((supply[i].0, demand[j].0, f.clone()));
            }
        }
    }
    TransportPlan { cost: total, moves }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{q, Rational};

    #[test]
    fn crossing_is_uncrossed() {
        // Points on a line at 0, 1, 10, 11: supplies at 0 and 10, demands at 1 and 11.
        let pos = [0i64, 1, 10, 11];
        let cost = |a: usize, b: usize| Rational::from_int((pos[a] - pos[b]).abs());
        let plan = min_cost_transport(&[(0, q(1, 1)), (2, q(1, 1))], &[(1, q(1, 1)), (3, q(1, 1))], cost);
        assert_eq!(plan.cost, q(2, 1));
    }

    #[test]
    fn reverse_arcs_are_used() {
        // Greedy first augmentation must be undone to reach the optimum.
        let c = [[1i64, 2], [1, 100]];
        let cost = |a: usize, b: usize| Rational::from_int(c[a][b]);
        let plan = min_cost_transport(&[(0, q(1, 1)), (1, q(1, 1))], &[(0, q(1, 1)), (1, q(1, 1))], cost);
        assert_eq!(plan.cost, q(3, 1));
    }

    #[test]
    fn fractional_masses() {
        let c = [[3i64, 1, 4], [1, 5, 9], [2, 6, 5]];
        let cost = |a: usize, b: usize| Rational::from_int(c[a][b]);
        let plan = min_cost_transport(
            &[(0, q(1, 2)), (1, q(1, 3)), (2, q(1, 6))],
            &[(0, q(1, 3)), (1, q(1, 2)), (2, q(1, 6))],
            cost,
        );
        // Brute-force over vertices is awkward; the LP optimum is 1/2*1 + 1/3*1 + 1/6*5.
        assert_eq!(plan.cost, q(1, 2) + q(1, 3) + q(5, 6));
    }
}
