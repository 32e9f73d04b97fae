//! Second-derivative counterpart of `dD/dt`: the curvature of the cost seen
//! by one extra unit of traffic entering a node, accumulated downstream.

use crate::error::{Error, Result};
use crate::model::{stage_topo_order, Dir, FlowState, Instance, Strategy};
use crate::par::{self, Exec};

/// Per-node curvature-to-go with the per-link and per-CPU second derivatives.
pub struct Curvature {
    n: usize,
    link: Vec<f64>,
    node: Vec<f64>,
    to_go: Vec<f64>,
}

impl Curvature {
    /// Curvature along one direction of row `(s, i)`.
    pub fn direction(&self, inst: &Instance, s: usize, i: usize, slot: usize) -> f64 {
        let n = self.n;
        match inst.dir(i, slot) {
            Dir::Cpu => {
                if inst.is_final(s) {
                    return f64::INFINITY;
                }
                let w = inst.weight(s, i);
                if w.is_infinite() {
                    return f64::INFINITY;
                }
                w * w * self.node[i] + self.to_go[(s + 1) * n + i]
            }
            Dir::Link(e) => {
                let l = inst.packet_size(s);
                let j = inst.graph.edge(e).1;
                l * l * self.link[e] + self.to_go[s * n + j]
            }
        }
    }
}

pub fn curvature(
    inst: &Instance,
    strategy: &Strategy,
    flow: &FlowState,
    exec: Exec,
) -> Result<Curvature> {
    let n = inst.node_count();
    let c = &inst.costs;
    let link: Vec<f64> = (0..inst.graph.edge_count())
        .map(|e| c.link[e].second_derivative(flow.link_agg[e]))
        .collect();
    let node: Vec<f64> = (0..n)
        .map(|i| c.node[i].map_or(0.0, |f| f.second_derivative(flow.node_agg[i])))
        .collect();
    let mut cv = Curvature {
        n,
        link,
        node,
        to_go: vec![0.0; inst.stage_count() * n],
    };
    let per_app = par::map_range(exec, inst.apps.len(), |a| {
        let stages = inst.apps[a].chain_len + 1;
        let base = inst.stage_index(a, 0);
        let mut out = vec![0.0; stages * n];
        for k in (0..stages).rev() {
            let s = base + k;
            let order =
                stage_topo_order(inst, strategy, s, 0.0).ok_or(Error::LoopDetected { app: a, k })?;
            for &i in order.iter().rev() {
                let mut acc = 0.0;
                for (slot, &phi) in strategy.row(s, i).iter().enumerate() {
                    if phi <= 0.0 {
                        continue;
                    }
                    let h = match inst.dir(i, slot) {
                        Dir::Cpu => {
                            let w = inst.weight(s, i);
                            w * w * cv.node[i] + out[(k + 1) * n + i]
                        }
                        Dir::Link(e) => {
                            let l = inst.packet_size(s);
                            l * l * cv.link[e] + out[k * n + inst.graph.edge(e).1]
                        }
                    };
                    acc += phi * h;
                }
                out[k * n + i] = acc;
            }
        }
        Ok::<_, Error>(out)
    });
    let mut to_go = Vec::with_capacity(inst.stage_count() * n);
    for app in per_app {
        to_go.extend(app?);
    }
    cv.to_go = to_go;
    Ok(cv)
}
