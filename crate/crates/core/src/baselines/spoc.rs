use super::{masked_optimum, BaselineResult, Method};
use crate::error::{Error, Result};
use crate::gp::GpParams;
use crate::model::{DirectionMask, Instance};

/// Next hop towards `dest` on the zero-load shortest-path tree of the plain
/// graph (weights `D'_ij(0)`, ties broken by hop count).
fn next_hops(inst: &Instance, dest: usize) -> Vec<Option<usize>> {
    let g = &inst.graph;
    let n = inst.node_count();
    let mut dist = vec![(f64::INFINITY, u32::MAX); n];
    let mut next = vec![None; n];
    let mut done = vec![false; n];
    dist[dest] = (0.0, 0);
    loop {
        let Some(j) = (0..n)
            .filter(|&v| !done[v] && dist[v].0.is_finite())
            .min_by(|&a, &b| dist[a].0.total_cmp(&dist[b].0).then(dist[a].1.cmp(&dist[b].1)))
        else {
            break;
        };
        done[j] = true;
        for &e in g.in_edges(j) {
            let i = g.edge(e).0;
            let w = inst.costs.marginal_link(e, 0.0);
            let cand = (dist[j].0 + w, dist[j].1 + 1);
            if !done[i] && (cand.0 < dist[i].0 || (cand.0 == dist[i].0 && cand.1 < dist[i].1)) {
                dist[i] = cand;
                next[i] = Some(g.slot_of(e));
            }
        }
    }
    next
}

/// Directions SPOC may use: the CPU and the shortest-path next hop.
pub fn spoc_mask(inst: &Instance) -> Result<DirectionMask> {
    let mut mask = DirectionMask::none(inst);
    for (a, app) in inst.apps.iter().enumerate() {
        let next = next_hops(inst, app.destination);
        for (src, _) in app.sources() {
            if src != app.destination && next[src].is_none() {
                return Err(Error::DestinationUnreachable { app: app.id, node: src });
            }
        }
        for k in 0..=app.chain_len {
            let s = inst.stage_index(a, k);
            for i in 0..inst.node_count() {
                if k < app.chain_len {
                    mask.set(s, i, 0, true);
                }
                if let Some(slot) = next[i] {
                    mask.set(s, i, slot, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Fixed shortest-path forwarding with optimized offloading along the path.
pub fn spoc(inst: &Instance, params: &GpParams) -> Result<BaselineResult> {
    masked_optimum(Method::Spoc, inst, &spoc_mask(inst)?, params)
}
