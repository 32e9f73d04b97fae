use super::strategy::stage_topo_order;
use super::{Instance, Strategy};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Traffic and flows induced by a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    n: usize,
    m: usize,
    /// `t_i(a,k)`, indexed `s * n + i`.
    pub traffic: Vec<f64>,
    /// `f_ij(a,k)`, indexed `s * m + e`.
    pub link_flow: Vec<f64>,
    /// `g_i(a,k)`, indexed `s * n + i`.
    pub cpu_flow: Vec<f64>,
    /// `F_ij` in bits/sec, by edge.
    pub link_agg: Vec<f64>,
    /// `G_i` in workload/sec, by node.
    pub node_agg: Vec<f64>,
}

impl FlowState {
    /// All-idle state.
    pub fn zeros(inst: &Instance) -> Self {
        let (n, m, ns) = (inst.node_count(), inst.graph.edge_count(), inst.stage_count());
        Self {
            n,
            m,
            traffic: vec![0.0; ns * n],
            link_flow: vec![0.0; ns * m],
            cpu_flow: vec![0.0; ns * n],
            link_agg: vec![0.0; m],
            node_agg: vec![0.0; n],
        }
    }

    pub fn t(&self, s: usize, i: usize) -> f64 {
        self.traffic[s * self.n + i]
    }

    pub fn f(&self, s: usize, e: usize) -> f64 {
        self.link_flow[s * self.m + e]
    }

    pub fn g(&self, s: usize, i: usize) -> f64 {
        self.cpu_flow[s * self.n + i]
    }

    /// Largest relative violation of node balance over all rows: inflow plus
    /// injection against traffic, and traffic against outflow plus CPU flow.
    pub fn conservation_error(&self, inst: &Instance) -> f64 {
        let g = &inst.graph;
        let mut worst = 0.0f64;
        for s in 0..inst.stage_count() {
            let st = inst.stage(s);
            let app = &inst.apps[st.app];
            for i in 0..self.n {
                let inj = if st.k == 0 {
                    app.rate(i)
                } else {
                    self.g(s - 1, i)
                };
                let inflow: f64 = g.in_edges(i).iter().map(|&e| self.f(s, e)).sum();
                let out: f64 =
                    g.out_edges(i).iter().map(|&e| self.f(s, e)).sum::<f64>() + self.g(s, i);
                let t = self.t(s, i);
                let scale = t.abs().max(1.0);
                worst = worst.max((inflow + inj - t).abs() / scale);
                let target = inst.row_target(s, i) * t;
                worst = worst.max((out - target).abs() / scale);
            }
        }
        worst
    }
}

struct AppFlows {
    traffic: Vec<f64>,
    link_flow: Vec<f64>,
    cpu_flow: Vec<f64>,
}

/// Solves the traffic equations exactly for a loop-free strategy, stage by
/// stage, sweeping each stage's active subgraph in topological order.
pub fn solve_traffic(inst: &Instance, strategy: &Strategy) -> Result<FlowState> {
    solve_traffic_with(inst, strategy, Exec::default())
}

pub fn solve_traffic_with(inst: &Instance, strategy: &Strategy, exec: Exec) -> Result<FlowState> {
    let n = inst.node_count();
    let m = inst.graph.edge_count();
    let per_app = par::map_range(exec, inst.apps.len(), |a| solve_app(inst, strategy, a));

    let ns = inst.stage_count();
    let mut flow = FlowState {
        n,
        m,
        traffic: Vec::with_capacity(ns * n),
        link_flow: Vec::with_capacity(ns * m),
        cpu_flow: Vec::with_capacity(ns * n),
        link_agg: vec![0.0; m],
        node_agg: vec![0.0; n],
    };
    for app in per_app {
        let app = app?;
        flow.traffic.extend(app.traffic);
        flow.link_flow.extend(app.link_flow);
        flow.cpu_flow.extend(app.cpu_flow);
    }
    for s in 0..ns {
        let l = inst.packet_size(s);
        if l != 0.0 {
            for e in 0..m {
                let f = flow.link_flow[s * m + e];
                if f != 0.0 {
                    flow.link_agg[e] += l * f;
                }
            }
        }
        for i in 0..n {
            let g = flow.cpu_flow[s * n + i];
            if g != 0.0 {
                flow.node_agg[i] += inst.weight(s, i) * g;
            }
        }
    }
    Ok(flow)
}

fn solve_app(inst: &Instance, strategy: &Strategy, a: usize) -> Result<AppFlows> {
    let app = &inst.apps[a];
    let n = inst.node_count();
    let m = inst.graph.edge_count();
    let g = &inst.graph;
    let stages = app.chain_len + 1;
    let mut out = AppFlows {
        traffic: vec![0.0; stages * n],
        link_flow: vec![0.0; stages * m],
        cpu_flow: vec![0.0; stages * n],
    };
    for k in 0..stages {
        let s = inst.stage_index(a, k);
        let order = stage_topo_order(inst, strategy, s, 0.0).ok_or(Error::LoopDetected {
            app: a,
            k,
        })?;
        let (prev, cur) = out.cpu_flow.split_at_mut(k * n);
        let t = &mut out.traffic[k * n..(k + 1) * n];
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = if k == 0 { app.rate(i) } else { prev[(k - 1) * n + i] };
        }
        let f = &mut out.link_flow[k * m..(k + 1) * m];
        let cpu = &mut cur[..n];
        for &i in &order {
            let ti = t[i];
            if ti == 0.0 {
                continue;
            }
            let row = strategy.row(s, i);
            if row[0] > 0.0 {
                cpu[i] = ti * row[0];
            }
            for (p, &e) in g.out_edges(i).iter().enumerate() {
                let phi = row[p + 1];
                if phi > 0.0 {
                    let fe = ti * phi;
                    f[e] = fe;
                    t[g.edge(e).1] += fe;
                }
            }
        }
    }
    Ok(out)
}
