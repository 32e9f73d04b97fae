//! Blocked directions: the per-row set of out-links that may not start
//! carrying traffic this slot without risking a routing loop.

use serde::Serialize;

use crate::marginal::MarginalState;
use crate::model::{stage_topo_order, DirectionMask, Instance, Strategy, EPS_PHI};
use crate::par::{self, Exec};

/// Relative tolerance under which two `dD/dt` values count as equal.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockedSets {
    n: usize,
    /// Per row, one flag per direction. The CPU entry is always `false`.
    rows: Vec<Vec<bool>>,
}

impl BlockedSets {
    pub fn row(&self, s: usize, i: usize) -> &[bool] {
        &self.rows[s * self.n + i]
    }

    pub fn is_blocked(&self, s: usize, i: usize, slot: usize) -> bool {
        self.rows[s * self.n + i][slot]
    }

    /// `B_i(a,k)` restricted to out-neighbours; every non-neighbour is
    /// implicitly blocked as well.
    pub fn blocked_neighbors(&self, inst: &Instance, s: usize, i: usize) -> Vec<usize> {
        let g = &inst.graph;
        g.out_edges(i)
            .iter()
            .filter(|&&e| self.is_blocked(s, i, g.slot_of(e)))
            .map(|&e| g.edge(e).1)
            .collect()
    }

    /// Whether `j` belongs to `B_i(a,k)`.
    pub fn contains(&self, inst: &Instance, s: usize, i: usize, j: usize) -> bool {
        match inst.graph.find(i, j) {
            Some(e) => self.is_blocked(s, i, inst.graph.slot_of(e)),
            None => true,
        }
    }
}

fn ties_or_exceeds(a: f64, b: f64) -> bool {
    a >= b - TIE_TOL * b.abs().max(1.0)
}

/// Nodes from which an improper active link is reachable over active links.
/// A link `p -> q` is improper when `dD/dt(q) >= dD/dt(p)`.
fn improper_reach(inst: &Instance, strategy: &Strategy, marg: &MarginalState, s: usize) -> Vec<bool> {
    let g = &inst.graph;
    let n = inst.node_count();
    let mut reach = vec![false; n];
    let mut stack = Vec::new();
    for p in 0..n {
        let row = strategy.row(s, p);
        let improper = g.out_edges(p).iter().any(|&e| {
            row[g.slot_of(e)] > EPS_PHI && ties_or_exceeds(marg.dd_dt(s, g.edge(e).1), marg.dd_dt(s, p))
        });
        if improper {
            reach[p] = true;
            stack.push(p);
        }
    }
    while let Some(v) = stack.pop() {
        for &e in g.in_edges(v) {
            let u = g.edge(e).0;
            if !reach[u] && strategy.row(s, u)[g.slot_of(e)] > EPS_PHI {
                reach[u] = true;
                stack.push(u);
            }
        }
    }
    reach
}

/// Blocks, for every currently unused out-link `i -> j`, the neighbours with
/// `dD/dt(j) >= dD/dt(i)` and the neighbours that reach an improper link.
/// Directions outside `mask` are always blocked. If a stage's active
/// subgraph already has a cycle, the rules extend to active links too.
pub fn compute_blocked_sets(
    inst: &Instance,
    strategy: &Strategy,
    marg: &MarginalState,
    mask: Option<&DirectionMask>,
    exec: Exec,
) -> BlockedSets {
    let n = inst.node_count();
    let g = &inst.graph;
    let per_stage = par::map_range(exec, inst.stage_count(), |s| {
        let reach = improper_reach(inst, strategy, marg, s);
        let looped = stage_topo_order(inst, strategy, s, EPS_PHI).is_none();
        (0..n)
            .map(|i| {
                let row = strategy.row(s, i);
                let mut flags = vec![false; row.len()];
                for &e in g.out_edges(i) {
                    let slot = g.slot_of(e);
                    let j = g.edge(e).1;
                    let masked = mask.is_some_and(|m| !m.allows(s, i, slot));
                    let unused = row[slot] <= EPS_PHI;
                    flags[slot] = masked
                        || ((unused || looped)
                            && (reach[j] || ties_or_exceeds(marg.dd_dt(s, j), marg.dd_dt(s, i))));
                }
                flags
            })
            .collect::<Vec<_>>()
    });
    BlockedSets {
        n,
        rows: per_stage.into_iter().flatten().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostFn;
    use crate::marginal::compute_marginals;
    use crate::model::{solve_traffic, Application, FlowState, InstanceBuilder};
    use crate::optimality::build_degenerate_instance;

    #[test]
    fn degenerate_instance_keeps_improving_direction() {
        let (inst, phi) = build_degenerate_instance(0.1).unwrap();
        let flow = solve_traffic(&inst, &phi).unwrap();
        let m = compute_marginals(&inst, &phi, &flow).unwrap();
        let b = compute_blocked_sets(&inst, &phi, &m, None, Exec::Sequential);
        assert!(!b.contains(&inst, 0, 0, 1));
        assert!(!b.contains(&inst, 0, 1, 2));
        // non-neighbours are blocked
        assert!(b.contains(&inst, 0, 0, 2));
        assert!(b.contains(&inst, 0, 3, 0));
    }

    #[test]
    fn two_cycle_endpoints_block_each_other() {
        let lin = CostFn::Linear { slope: 1.0 };
        let inst = InstanceBuilder::new(3)
            .bilink(0, 1, lin)
            .link(1, 2, lin)
            .link(0, 2, lin)
            .cpu(2, lin)
            .app(Application::new(0, 2, vec![1.0, 1.0], 3).with_rate(0, 1.0))
            .build()
            .unwrap();
        let mut phi = Strategy::zeros(&inst);
        let s01 = inst.link_slot(0, 1).unwrap();
        let s10 = inst.link_slot(1, 0).unwrap();
        let s12 = inst.link_slot(1, 2).unwrap();
        phi.row_mut(0, 0)[s01] = 1.0;
        phi.row_mut(0, 1)[s10] = 0.5;
        phi.row_mut(0, 1)[s12] = 0.5;
        phi.row_mut(0, 2)[0] = 1.0;
        // the cycle prevents a traffic solve; hand-made marginals suffice
        let mut m = compute_marginals(
            &inst,
            &{
                let mut p = phi.clone();
                p.row_mut(0, 1)[s10] = 0.0;
                p
            },
            &FlowState::zeros(&inst),
        )
        .unwrap();
        m.dd_dt[0] = 2.0;
        m.dd_dt[1] = 2.0;
        let b = compute_blocked_sets(&inst, &phi, &m, None, Exec::Sequential);
        assert!(b.contains(&inst, 0, 0, 1));
        assert!(b.contains(&inst, 0, 1, 0));
        assert!(!b.row(0, 0)[0]);
    }

    #[test]
    fn mask_blocks() {
        let (inst, phi) = build_degenerate_instance(0.5).unwrap();
        let flow = solve_traffic(&inst, &phi).unwrap();
        let m = compute_marginals(&inst, &phi, &flow).unwrap();
        let mut mask = DirectionMask::all(&inst);
        mask.set(0, 1, inst.link_slot(1, 2).unwrap(), false);
        let b = compute_blocked_sets(&inst, &phi, &m, Some(&mask), Exec::Sequential);
        assert!(b.contains(&inst, 0, 1, 2));
        assert!(!b.contains(&inst, 1, 1, 2));
    }
}
