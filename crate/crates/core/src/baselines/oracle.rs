//! Frank-Wolfe on the flow-domain problem: per application and stage, link
//! flows and CPU flows satisfying conservation in the layered graph, with
//! cost a convex function of the aggregate loads. Independent of the
//! strategy-space optimizer apart from the starting point.

use serde::Serialize;

use crate::cost::{weighted, CostFn};
use crate::error::{Error, Result};
use crate::layered::reverse_tree;
use crate::model::{initial_strategy, solve_traffic, Instance};
use crate::par::{self, Exec};

const LINE_SEARCH_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleParams {
    /// Stop once `upper - lower` is at most this.
    pub gap_tol: f64,
    /// When set, the tolerance is `rel_gap_tol * upper` instead.
    pub rel_gap_tol: Option<f64>,
    pub max_iters: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            gap_tol: 0.0,
            rel_gap_tol: Some(1e-4),
            max_iters: 200_000,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    /// Stage flows `x[s * m + e]`.
    pub link_flow: Vec<f64>,
    /// Stage CPU flows `y[s * n + i]`.
    pub cpu_flow: Vec<f64>,
    pub link_agg: Vec<f64>,
    pub node_agg: Vec<f64>,
    /// Cost of the returned flows: an upper bound on the optimum.
    pub cost: f64,
    /// Cost minus the duality gap: a lower bound on the optimum.
    pub lower: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    inst: &'a Instance,
    link: &'a [CostFn],
    /// `None` for nodes without a CPU.
    node: &'a [Option<CostFn>],
}

impl Problem<'_> {
    fn cost(&self, fl: &[f64], gl: &[f64]) -> f64 {
        let links: f64 = self.link.iter().zip(fl).map(|(c, &x)| c.evaluate(x)).sum();
        let nodes: f64 = self
            .node
            .iter()
            .zip(gl)
            .map(|(c, &x)| match c {
                Some(c) => c.evaluate(x),
                None if x == 0.0 => 0.0,
                None => f64::INFINITY,
            })
            .sum();
        links + nodes
    }

    /// Derivative of the cost along `(fl, gl) + gamma * (dfl, dgl)`.
    fn slope_along(&self, fl: &[f64], gl: &[f64], dfl: &[f64], dgl: &[f64], gamma: f64) -> f64 {
        let mut acc = 0.0;
        for (e, c) in self.link.iter().enumerate() {
            if dfl[e] != 0.0 {
                acc += c.derivative(fl[e] + gamma * dfl[e]) * dfl[e];
            }
        }
        for (i, c) in self.node.iter().enumerate() {
            if let Some(c) = c {
                if dgl[i] != 0.0 {
                    acc += c.derivative(gl[i] + gamma * dgl[i]) * dgl[i];
                }
            }
        }
        acc
    }

    /// All-or-nothing assignment on the layered shortest paths priced at the
    /// current marginal costs.
    fn extreme_point(&self, fl: &[f64], gl: &[f64], exec: Exec) -> (Vec<f64>, Vec<f64>) {
        let inst = self.inst;
        let n = inst.node_count();
        let m = inst.graph.edge_count();
        let link_price: Vec<f64> = self.link.iter().zip(fl).map(|(c, &x)| c.derivative(x)).collect();
        let node_price: Vec<f64> = self
            .node
            .iter()
            .zip(gl)
            .map(|(c, &x)| c.as_ref().map_or(f64::INFINITY, |c| c.derivative(x)))
            .collect();
        let per_app = par::map_range(exec, inst.apps.len(), |a| {
            let app = &inst.apps[a];
            let tree = reverse_tree(
                inst,
                a,
                |k, e| weighted(app.packet_size[k], link_price[e]),
                |k, i| {
                    let w = app.weight(i, k);
                    if w.is_finite() {
                        weighted(w, node_price[i])
                    } else {
                        f64::INFINITY
                    }
                },
                None,
            );
            let stages = app.chain_len + 1;
            let mut x = vec![0.0; stages * m];
            let mut y = vec![0.0; stages * n];
            for (src, r) in app.sources() {
                for (k, i, slot) in tree.path(inst, src) {
                    if slot == 0 {
                        y[k * n + i] += r;
                    } else {
                        x[k * m + inst.graph.out_edges(i)[slot - 1]] += r;
                    }
                }
            }
            (x, y)
        });
        let mut x = Vec::with_capacity(inst.stage_count() * m);
        let mut y = Vec::with_capacity(inst.stage_count() * n);
        for (ax, ay) in per_app {
            x.extend(ax);
            y.extend(ay);
        }
        (x, y)
    }

    fn aggregate(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let inst = self.inst;
        let n = inst.node_count();
        let m = inst.graph.edge_count();
        let mut fl = vec![0.0; m];
        let mut gl = vec![0.0; n];
        for s in 0..inst.stage_count() {
            let l = inst.packet_size(s);
            for e in 0..m {
                let v = x[s * m + e];
                if v != 0.0 && l != 0.0 {
                    fl[e] += l * v;
                }
            }
            for i in 0..n {
                let v = y[s * n + i];
                if v != 0.0 {
                    gl[i] += inst.weight(s, i) * v;
                }
            }
        }
        (fl, gl)
    }
}

/// Minimizes the convex flow-domain cost by Frank-Wolfe with exact line
/// search, starting from the flows of [`initial_strategy`]. Every iterate
/// has finite cost, so the linearization gives a valid lower bound.
pub fn frank_wolfe_oracle(inst: &Instance, params: &OracleParams) -> Result<OracleResult> {
    let p = Problem {
        inst,
        link: &inst.costs.link,
        node: &inst.costs.node,
    };
    let exec = params.exec;
    let start = initial_strategy(inst).map_err(|e| match e {
        Error::NoFeasibleInit(msg) => Error::Saturated(msg),
        e => e,
    })?;
    let flow = solve_traffic(inst, &start)?;
    let (mut x, mut y) = (flow.link_flow, flow.cpu_flow);
    let (mut fl, mut gl) = p.aggregate(&x, &y);

    let mut iterations = 0;
    let (mut lower, mut upper, mut gap);
    let mut converged = false;
    loop {
        let (xh, yh) = p.extreme_point(&fl, &gl, exec);
        let (flh, glh) = p.aggregate(&xh, &yh);
        let dfl: Vec<f64> = flh.iter().zip(&fl).map(|(a, b)| a - b).collect();
        let dgl: Vec<f64> = glh.iter().zip(&gl).map(|(a, b)| a - b).collect();
        upper = p.cost(&fl, &gl);
        let fw_gap = (-p.slope_along(&fl, &gl, &dfl, &dgl, 0.0)).max(0.0);
        lower = upper - fw_gap;
        gap = fw_gap;
        let tol = params.rel_gap_tol.map_or(params.gap_tol, |r| r * upper.abs());
        if gap <= tol {
            converged = true;
            break;
        }
        if iterations >= params.max_iters {
            break;
        }
        // exact line search on the convex restriction; beyond capacity the
        // slope is infinite, which keeps iterates feasible
        let gamma = if p.slope_along(&fl, &gl, &dfl, &dgl, 1.0) <= 0.0 {
            1.0
        } else {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..LINE_SEARCH_STEPS {
                let mid = 0.5 * (lo + hi);
                if p.slope_along(&fl, &gl, &dfl, &dgl, mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            lo
        };
        if gamma == 0.0 {
            break;
        }
        for (a, b) in x.iter_mut().zip(&xh) {
            *a += gamma * (b - *a);
        }
        for (a, b) in y.iter_mut().zip(&yh) {
            *a += gamma * (b - *a);
        }
        (fl, gl) = p.aggregate(&x, &y);
        iterations += 1;
    }
    Ok(OracleResult {
        link_flow: x,
        cpu_flow: y,
        link_agg: fl,
        node_agg: gl,
        cost: upper,
        lower,
        gap,
        iterations,
        converged,
    })
}
