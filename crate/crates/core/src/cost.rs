//! Convex, increasing cost functions for links and CPUs.
//!
//! Saturation is represented by `f64::INFINITY`, never NaN. Anything that
//! multiplies a weight by a marginal goes through [`weighted`] so a zero
//! weight times an infinite marginal stays zero.

use serde::{Deserialize, Serialize};

use crate::model::{FlowState, NetworkGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostFn {
    /// `d * x`
    Linear {
        #[serde(alias = "d")]
        slope: f64,
    },
    /// M/M/1 occupancy `x / (mu - x)`, saturating at `mu`.
    Queue { mu: f64 },
}

impl CostFn {
    pub fn evaluate(&self, load: f64) -> f64 {
        match *self {
            CostFn::Linear { slope } => slope * load,
            CostFn::Queue { mu } => {
                if load >= mu {
                    f64::INFINITY
                } else {
                    load / (mu - load)
                }
            }
        }
    }

    pub fn derivative(&self, load: f64) -> f64 {
        match *self {
            CostFn::Linear { slope } => slope,
            CostFn::Queue { mu } => {
                if load >= mu {
                    f64::INFINITY
                } else {
                    mu / ((mu - load) * (mu - load))
                }
            }
        }
    }

    pub fn second_derivative(&self, load: f64) -> f64 {
        match *self {
            CostFn::Linear { .. } => 0.0,
            CostFn::Queue { mu } => {
                if load >= mu {
                    f64::INFINITY
                } else {
                    2.0 * mu / (mu - load).powi(3)
                }
            }
        }
    }

    /// Load at which the cost becomes infinite, if any.
    pub fn capacity(&self) -> Option<f64> {
        match *self {
            CostFn::Linear { .. } => None,
            CostFn::Queue { mu } => Some(mu),
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            CostFn::Linear { slope } => slope.is_finite() && slope >= 0.0,
            CostFn::Queue { mu } => mu.is_finite() && mu > 0.0,
        }
    }
}

/// `weight * marginal`, with `0 * inf = 0`.
#[inline]
pub fn weighted(weight: f64, marginal: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * marginal
    }
}

/// Per-link costs `D_ij` (indexed by edge id) and per-node CPU costs `C_i`.
/// A node without a CPU has `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostModel {
    pub link: Vec<CostFn>,
    pub node: Vec<Option<CostFn>>,
}

impl CostModel {
    pub fn marginal_link(&self, edge: usize, load: f64) -> f64 {
        self.link[edge].derivative(load)
    }

    /// Marginal CPU cost; a node without a CPU is infinitely expensive.
    pub fn marginal_node(&self, node: usize, load: f64) -> f64 {
        match &self.node[node] {
            Some(c) => c.derivative(load),
            None => f64::INFINITY,
        }
    }

    pub fn node_cost(&self, node: usize, load: f64) -> f64 {
        match &self.node[node] {
            Some(c) => c.evaluate(load),
            None if load == 0.0 => 0.0,
            None => f64::INFINITY,
        }
    }

    pub fn check(&self, graph: &NetworkGraph) -> Result<(), String> {
        if self.link.len() != graph.edge_count() {
            return Err(format!(
                "{} link costs for {} edges",
                self.link.len(),
                graph.edge_count()
            ));
        }
        if self.node.len() != graph.node_count() {
            return Err(format!(
                "{} node costs for {} nodes",
                self.node.len(),
                graph.node_count()
            ));
        }
        if let Some(e) = self.link.iter().position(|c| !c.is_valid()) {
            return Err(format!("bad cost parameters on edge {e}"));
        }
        if let Some(i) = self
            .node
            .iter()
            .position(|c| c.is_some_and(|c| !c.is_valid()))
        {
            return Err(format!("bad cost parameters on node {i}"));
        }
        Ok(())
    }

    /// Cost of a set of aggregate link and node loads.
    pub fn cost_of_loads(&self, link_load: &[f64], node_load: &[f64]) -> f64 {
        let links: f64 = self
            .link
            .iter()
            .zip(link_load)
            .map(|(c, &f)| c.evaluate(f))
            .sum();
        let nodes: f64 = node_load
            .iter()
            .enumerate()
            .map(|(i, &g)| self.node_cost(i, g))
            .sum();
        links + nodes
    }
}

/// Aggregate objective: sum of link costs plus sum of CPU costs.
pub fn total_cost(flow: &FlowState, costs: &CostModel) -> f64 {
    costs.cost_of_loads(&flow.link_agg, &flow.node_agg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        let lin = CostFn::Linear { slope: 2.0 };
        assert_eq!(lin.evaluate(10.0), 20.0);
        assert_eq!(CostFn::Linear { slope: 3.0 }.derivative(123.0), 3.0);

        let q = CostFn::Queue { mu: 10.0 };
        assert_eq!(q.evaluate(5.0), 1.0);
        assert_eq!(q.derivative(5.0), 0.4);
        assert_eq!(q.evaluate(10.0), f64::INFINITY);
        assert_eq!(q.derivative(10.0), f64::INFINITY);
        assert_eq!(q.evaluate(12.0), f64::INFINITY);
        assert_eq!(CostFn::Queue { mu: 20.0 }.derivative(0.0), 1.0 / 20.0);
        assert!((CostFn::Queue { mu: 12.0 }.derivative(6.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(q.evaluate(0.0), 0.0);
        assert_eq!(lin.evaluate(0.0), 0.0);
    }

    #[test]
    fn infinite_sentinel_never_nan() {
        assert_eq!(weighted(0.0, f64::INFINITY), 0.0);
        assert_eq!(weighted(2.0, f64::INFINITY), f64::INFINITY);
        let costs = CostModel {
            link: vec![CostFn::Queue { mu: 1.0 }],
            node: vec![None, Some(CostFn::Linear { slope: 1.0 })],
        };
        let c = costs.cost_of_loads(&[2.0], &[0.0, 1.0]);
        assert_eq!(c, f64::INFINITY);
        assert_eq!(costs.node_cost(0, 0.0), 0.0);
        assert_eq!(costs.marginal_node(0, 0.0), f64::INFINITY);
    }

    #[test]
    fn serde_shape() {
        let q: CostFn = serde_json::from_str(r#"{"kind":"queue","mu":10.0}"#).unwrap();
        assert_eq!(q, CostFn::Queue { mu: 10.0 });
        let l: CostFn = serde_json::from_str(r#"{"kind":"linear","d":2.5}"#).unwrap();
        assert_eq!(l, CostFn::Linear { slope: 2.5 });
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(mu in 1.0f64..50.0, frac in 0.0f64..0.95) {
            let q = CostFn::Queue { mu };
            let x = frac * mu;
            let h = 1e-6 * mu;
            let lo = (x - h).max(0.0);
            let fd = (q.evaluate(x + h) - q.evaluate(lo)) / (x + h - lo);
            let d = q.derivative(x);
            prop_assert!(((fd - d) / d).abs() < 1e-6);
        }

        #[test]
        fn monotone_and_convex(mu in 1.0f64..50.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let q = CostFn::Queue { mu };
            let (lo, hi) = if a <= b { (a * mu, b * mu) } else { (b * mu, a * mu) };
            prop_assert!(q.evaluate(lo) <= q.evaluate(hi));
            prop_assert!(q.derivative(lo) <= q.derivative(hi));
            prop_assert!(q.derivative(lo) >= 0.0);
        }

        #[test]
        fn total_nonnegative_zero_iff_idle(loads in proptest::collection::vec(0.0f64..5.0, 3)) {
            let costs = CostModel {
                link: vec![CostFn::Queue { mu: 10.0 }, CostFn::Linear { slope: 1.5 }],
                node: vec![Some(CostFn::Queue { mu: 8.0 })],
            };
            let c = costs.cost_of_loads(&loads[..2], &loads[2..]);
            prop_assert!(c >= 0.0);
            prop_assert_eq!(c == 0.0, loads.iter().all(|&x| x == 0.0));
        }
    }
}
