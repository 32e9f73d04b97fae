//! Marginal costs: `dD/dt` per node and stage, the modified marginals `delta`
//! per direction, and the gradient `dD/dphi = t * delta`.

mod broadcast;

pub use broadcast::{broadcast_marginals, BroadcastLog, RoundRecord};

use serde::Serialize;

use crate::cost::weighted;
use crate::error::{Error, Result};
use crate::model::{stage_topo_order, Dir, FlowState, Instance, Strategy};
use crate::par::{self, Exec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalState {
    n: usize,
    /// `dD/dt`, indexed `s * n + i`.
    pub dd_dt: Vec<f64>,
    /// Modified marginal per direction, rows shaped like the strategy.
    pub delta: Vec<Vec<f64>>,
    pub dd_dphi: Vec<Vec<f64>>,
    /// Copy of `t_i(a,k)` the gradient was formed with.
    pub traffic: Vec<f64>,
}

impl MarginalState {
    pub fn dd_dt(&self, s: usize, i: usize) -> f64 {
        self.dd_dt[s * self.n + i]
    }

    pub fn delta(&self, s: usize, i: usize) -> &[f64] {
        &self.delta[s * self.n + i]
    }

    pub fn dd_dphi(&self, s: usize, i: usize) -> &[f64] {
        &self.dd_dphi[s * self.n + i]
    }

    pub fn t(&self, s: usize, i: usize) -> f64 {
        self.traffic[s * self.n + i]
    }

    pub fn node_count(&self) -> usize {
        self.n
    }
}

/// Marginal link and CPU costs evaluated at the current loads.
pub(crate) struct Prices {
    link: Vec<f64>,
    node: Vec<f64>,
}

impl Prices {
    pub(crate) fn new(inst: &Instance, flow: &FlowState) -> Self {
        let c = &inst.costs;
        Self {
            link: (0..inst.graph.edge_count())
                .map(|e| c.marginal_link(e, flow.link_agg[e]))
                .collect(),
            node: (0..inst.node_count())
                .map(|i| c.marginal_node(i, flow.node_agg[i]))
                .collect(),
        }
    }
}

/// Modified marginal of one direction. `stage` holds the stage's `dD/dt`
/// (only downstream entries are read); `next` the following stage's.
pub(crate) fn direction_delta(
    inst: &Instance,
    prices: &Prices,
    s: usize,
    i: usize,
    slot: usize,
    stage: &[f64],
    next: Option<&[f64]>,
) -> f64 {
    match inst.dir(i, slot) {
        Dir::Cpu => match next {
            None => f64::INFINITY,
            Some(next) => {
                let w = inst.weight(s, i);
                if w.is_infinite() {
                    f64::INFINITY
                } else {
                    weighted(w, prices.node[i]) + next[i]
                }
            }
        },
        Dir::Link(e) => {
            let j = inst.graph.edge(e).1;
            weighted(inst.packet_size(s), prices.link[e]) + stage[j]
        }
    }
}

/// `dD/dt` at `i`: the fraction-weighted sum of the active directions' marginals.
pub(crate) fn node_dd_dt(
    inst: &Instance,
    strategy: &Strategy,
    prices: &Prices,
    s: usize,
    i: usize,
    stage: &[f64],
    next: Option<&[f64]>,
) -> f64 {
    let mut acc = 0.0;
    for (slot, &phi) in strategy.row(s, i).iter().enumerate() {
        if phi > 0.0 {
            acc += phi * direction_delta(inst, prices, s, i, slot, stage, next);
        }
    }
    acc
}

/// Fills `delta` and `dd_dphi` once every stage's `dD/dt` is known.
fn finish(
    inst: &Instance,
    flow: &FlowState,
    prices: &Prices,
    dd_dt: Vec<f64>,
    exec: Exec,
) -> MarginalState {
    let n = inst.node_count();
    let ns = inst.stage_count();
    let rows = par::map_range(exec, ns * n, |r| {
        let (s, i) = (r / n, r % n);
        let stage = &dd_dt[s * n..(s + 1) * n];
        let next = (!inst.is_final(s)).then(|| &dd_dt[(s + 1) * n..(s + 2) * n]);
        let t = flow.t(s, i);
        let delta: Vec<f64> = (0..inst.row_len(i))
            .map(|slot| direction_delta(inst, prices, s, i, slot, stage, next))
            .collect();
        let grad = delta
            .iter()
            .map(|&d| if d.is_infinite() { d } else { t * d })
            .collect();
        (delta, grad)
    });
    let (delta, dd_dphi) = rows.into_iter().unzip();
    MarginalState {
        n,
        dd_dt,
        delta,
        dd_dphi,
        traffic: flow.traffic.clone(),
    }
}

/// Centralized marginals: stages of each application are processed from the
/// last to the first, nodes of a stage in reverse topological order.
pub fn compute_marginals(
    inst: &Instance,
    strategy: &Strategy,
    flow: &FlowState,
) -> Result<MarginalState> {
    compute_marginals_with(inst, strategy, flow, Exec::default())
}

pub fn compute_marginals_with(
    inst: &Instance,
    strategy: &Strategy,
    flow: &FlowState,
    exec: Exec,
) -> Result<MarginalState> {
    let n = inst.node_count();
    let prices = Prices::new(inst, flow);
    let per_app = par::map_range(exec, inst.apps.len(), |a| {
        let stages = inst.apps[a].chain_len + 1;
        let mut out = vec![0.0; stages * n];
        for k in (0..stages).rev() {
            let s = inst.stage_index(a, k);
            let order =
                stage_topo_order(inst, strategy, s, 0.0).ok_or(Error::LoopDetected { app: a, k })?;
            let (cur, rest) = out[k * n..].split_at_mut(n);
            let next = (k + 1 < stages).then(|| &rest[..n]);
            for &i in order.iter().rev() {
                cur[i] = node_dd_dt(inst, strategy, &prices, s, i, cur, next);
            }
        }
        Ok::<_, Error>(out)
    });
    let mut dd_dt = Vec::with_capacity(inst.stage_count() * n);
    for app in per_app {
        dd_dt.extend(app?);
    }
    Ok(finish(inst, flow, &prices, dd_dt, exec))
}
