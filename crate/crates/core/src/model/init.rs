//! Feasible, loop-free starting strategies with finite cost.

use super::strategy::validate_strategy;
use super::{solve_traffic, DirectionMask, Instance, Strategy, EPS_PHI};
use crate::cost::total_cost;
use crate::error::{Error, Result};
use crate::layered::{reverse_tree, zero_load_tree, LayeredTree};

/// Number of increments used by the load-aware fallback.
const LOAD_CHUNKS: usize = 256;

/// Strategy that follows one shortest-path tree per application.
pub fn tree_strategy(inst: &Instance, trees: &[LayeredTree]) -> Result<Strategy> {
    let n = inst.node_count();
    let mut phi = Strategy::zeros(inst);
    for (a, app) in inst.apps.iter().enumerate() {
        for k in 0..=app.chain_len {
            let s = inst.stage_index(a, k);
            for i in 0..n {
                if inst.row_target(s, i) == 0.0 {
                    continue;
                }
                let slot = trees[a].next(k, i).ok_or_else(|| {
                    Error::NoFeasibleInit(format!(
                        "node {i} has no allowed path to finish stage {k} of app {a}"
                    ))
                })?;
                phi.row_mut(s, i)[slot] = 1.0;
            }
        }
    }
    Ok(phi)
}

pub fn initial_strategy(inst: &Instance) -> Result<Strategy> {
    initial_strategy_masked(inst, None)
}

/// Routes every stage along zero-load layered shortest paths, computing each
/// task where the layered path says to. If that saturates a queue, falls back
/// to incremental load-aware routing.
pub fn initial_strategy_masked(inst: &Instance, mask: Option<&DirectionMask>) -> Result<Strategy> {
    let trees: Vec<LayeredTree> = (0..inst.apps.len())
        .map(|a| zero_load_tree(inst, a, mask))
        .collect();
    let phi = tree_strategy(inst, &trees)?;
    let flow = solve_traffic(inst, &phi)?;
    if total_cost(&flow, &inst.costs).is_finite() {
        return Ok(phi);
    }
    incremental_loading(inst, mask, &trees)
}

/// Loads each application's demand in small increments, each routed on the
/// layered path that is cheapest given the load placed so far (secant cost of
/// the increment). Stage cycles are cancelled before converting to fractions.
fn incremental_loading(
    inst: &Instance,
    mask: Option<&DirectionMask>,
    zero_trees: &[LayeredTree],
) -> Result<Strategy> {
    let n = inst.node_count();
    let m = inst.graph.edge_count();
    let ns = inst.stage_count();
    let costs = &inst.costs;
    let mut link_load = vec![0.0; m];
    let mut node_load = vec![0.0; n];
    let mut x = vec![0.0; ns * m];
    let mut y = vec![0.0; ns * n];

    for _ in 0..LOAD_CHUNKS {
        for (a, app) in inst.apps.iter().enumerate() {
            let delta = app.total_rate() / LOAD_CHUNKS as f64;
            let tree = reverse_tree(
                inst,
                a,
                |k, e| {
                    let l = app.packet_size[k];
                    if l == 0.0 {
                        return 0.0;
                    }
                    let c = &costs.link[e];
                    (c.evaluate(link_load[e] + l * delta) - c.evaluate(link_load[e])) / delta
                },
                |k, i| {
                    let w = app.weight(i, k);
                    if !w.is_finite() {
                        return f64::INFINITY;
                    }
                    (costs.node_cost(i, node_load[i] + w * delta) - costs.node_cost(i, node_load[i]))
                        / delta
                },
                mask,
            );
            for (src, r) in app.sources() {
                if !tree.dist(0, src).is_finite() {
                    return Err(Error::NoFeasibleInit(format!(
                        "app {a}: every path from source {src} saturates"
                    )));
                }
                let amount = r / LOAD_CHUNKS as f64;
                for (k, i, slot) in tree.path(inst, src) {
                    let s = inst.stage_index(a, k);
                    if slot == 0 {
                        y[s * n + i] += amount;
                        node_load[i] += app.weight(i, k) * amount;
                    } else {
                        let e = inst.graph.out_edges(i)[slot - 1];
                        x[s * m + e] += amount;
                        link_load[e] += app.packet_size[k] * amount;
                    }
                }
            }
        }
    }

    for s in 0..ns {
        cancel_cycles(inst, &mut x[s * m..(s + 1) * m]);
    }

    let mut phi = Strategy::zeros(inst);
    for s in 0..ns {
        let st = inst.stage(s);
        for i in 0..n {
            if inst.row_target(s, i) == 0.0 {
                continue;
            }
            let out_edges = inst.graph.out_edges(i);
            let out: f64 = out_edges.iter().map(|&e| x[s * m + e]).sum::<f64>() + y[s * n + i];
            let row = phi.row_mut(s, i);
            if out > 0.0 {
                row[0] = y[s * n + i] / out;
                for (p, &e) in out_edges.iter().enumerate() {
                    row[p + 1] = x[s * m + e] / out;
                }
                snap_row(row, 1.0);
            } else {
                let slot = zero_trees[st.app].next(st.k, i).ok_or_else(|| {
                    Error::NoFeasibleInit(format!("node {i} cannot finish stage {s}"))
                })?;
                row[slot] = 1.0;
            }
        }
    }
    let report = validate_strategy(inst, &phi);
    if !report.is_valid() {
        return Err(Error::NoFeasibleInit(format!(
            "load-aware fallback produced an invalid strategy: {report:?}"
        )));
    }
    let flow = solve_traffic(inst, &phi)?;
    if !total_cost(&flow, &inst.costs).is_finite() {
        return Err(Error::NoFeasibleInit(
            "no finite-cost routing found; the instance looks overloaded".into(),
        ));
    }
    Ok(phi)
}

/// Zeroes entries at or below [`EPS_PHI`] and rescales the row to `target`.
pub(crate) fn snap_row(row: &mut [f64], target: f64) {
    for v in row.iter_mut() {
        if *v <= EPS_PHI {
            *v = 0.0;
        }
    }
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        for v in row.iter_mut() {
            *v *= target / sum;
        }
    }
}

/// Removes circulations from one stage's link flows (`flows[e]`), which only
/// lowers cost under increasing link costs.
fn cancel_cycles(inst: &Instance, flows: &mut [f64]) {
    let g = &inst.graph;
    let n = inst.node_count();
    loop {
        // iterative DFS for a cycle in the positive-flow subgraph
        let mut color = vec![0u8; n];
        let mut parent_edge = vec![usize::MAX; n];
        let mut found: Option<(usize, usize)> = None;
        'outer: for root in 0..n {
            if color[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            color[root] = 1;
            while let Some(&mut (u, ref mut pos)) = stack.last_mut() {
                let outs = g.out_edges(u);
                if *pos < outs.len() {
                    let e = outs[*pos];
                    *pos += 1;
                    if flows[e] <= 0.0 {
                        continue;
                    }
                    let v = g.edge(e).1;
                    match color[v] {
                        0 => {
                            color[v] = 1;
                            parent_edge[v] = e;
                            stack.push((v, 0));
                        }
                        1 => {
                            found = Some((e, v));
                            break 'outer;
                        }
                        _ => {}
                    }
                } else {
                    color[u] = 2;
                    stack.pop();
                }
            }
        }
        let Some((closing, head)) = found else { return };
        let mut cycle = vec![closing];
        let mut u = g.edge(closing).0;
        while u != head {
            let e = parent_edge[u];
            cycle.push(e);
            u = g.edge(e).0;
        }
        let amount = cycle.iter().map(|&e| flows[e]).fold(f64::INFINITY, f64::min);
        for &e in &cycle {
            flows[e] = if flows[e] <= amount { 0.0 } else { flows[e] - amount };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkGraph;

    #[test]
    fn cancels_two_cycle() {
        let g = NetworkGraph::new(3, vec![(0, 1), (1, 0), (1, 2)]).unwrap();
        let inst = crate::model::tests::simple_instance(g, 0, 2);
        let mut f = vec![3.0, 1.0, 2.0];
        cancel_cycles(&inst, &mut f);
        assert_eq!(f, vec![2.0, 0.0, 2.0]);
    }

    #[test]
    fn snap_keeps_sum() {
        let mut row = vec![0.5, 1e-12, 0.5 - 1e-12];
        snap_row(&mut row, 1.0);
        assert_eq!(row[1], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
