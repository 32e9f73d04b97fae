//! The two optimality tests: the KKT condition on `dD/dphi` and the
//! sufficient condition on the modified marginals `delta`.

use serde::Serialize;

use crate::cost::CostFn;
use crate::error::{Error, Result};
use crate::marginal::MarginalState;
use crate::model::{Application, Instance, InstanceBuilder, Strategy, EPS_PHI};

pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowResidual {
    pub node: usize,
    pub app: usize,
    pub k: usize,
    pub residual: f64,
    /// Zero-traffic row whose KKT test holds only because its gradient vanishes.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub condition: &'static str,
    pub tol: f64,
    pub satisfied: bool,
    pub max_residual: f64,
    /// Rows with a positive residual or flagged degenerate.
    pub rows: Vec<RowResidual>,
}

impl OptimalityReport {
    pub fn violations(&self) -> impl Iterator<Item = &RowResidual> {
        self.rows.iter().filter(move |r| r.residual > self.tol)
    }

    pub fn degenerate_rows(&self) -> impl Iterator<Item = &RowResidual> {
        self.rows.iter().filter(|r| r.degenerate)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Largest gap between an active direction's value and the row minimum.
fn row_residual(phi: &[f64], values: &[f64]) -> f64 {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    phi.iter()
        .zip(values)
        .filter(|(&p, _)| p > EPS_PHI)
        .map(|(_, &v)| if v == min { 0.0 } else { v - min })
        .fold(0.0, f64::max)
}

fn check(
    inst: &Instance,
    strategy: &Strategy,
    marg: &MarginalState,
    tol: f64,
    kkt: bool,
) -> OptimalityReport {
    let n = inst.node_count();
    let mut rows = Vec::new();
    let mut max_residual: f64 = 0.0;
    for s in 0..inst.stage_count() {
        let st = inst.stage(s);
        for i in 0..n {
            let phi = strategy.row(s, i);
            let degenerate = kkt && marg.t(s, i) == 0.0 && inst.row_target(s, i) > 0.0;
            let residual = if degenerate {
                0.0
            } else if kkt {
                row_residual(phi, marg.dd_dphi(s, i))
            } else {
                row_residual(phi, marg.delta(s, i))
            };
            max_residual = max_residual.max(residual);
            if residual > 0.0 || degenerate {
                rows.push(RowResidual {
                    node: i,
                    app: inst.apps[st.app].id,
                    k: st.k,
                    residual,
                    degenerate,
                });
            }
        }
    }
    OptimalityReport {
        condition: if kkt { "kkt" } else { "sufficiency" },
        tol,
        satisfied: max_residual <= tol,
        max_residual,
        rows,
    }
}

/// Every active direction must have minimal `dD/dphi` in its row. Rows
/// without traffic pass vacuously and are flagged.
pub fn check_kkt(
    inst: &Instance,
    strategy: &Strategy,
    marg: &MarginalState,
    tol: f64,
) -> OptimalityReport {
    check(inst, strategy, marg, tol, true)
}

/// Every active direction must have minimal `delta` in its row, whether or
/// not the row carries traffic.
pub fn check_sufficiency(
    inst: &Instance,
    strategy: &Strategy,
    marg: &MarginalState,
    tol: f64,
) -> OptimalityReport {
    check(inst, strategy, marg, tol, false)
}

/// A four-node instance with a strategy of cost 1 that passes the KKT test
/// while the optimum costs `rho`.
///
/// Data enters at node 0 and must be processed at node 3, the only CPU
/// (cost `rho/2` per unit). The cheap route `0 -> 1 -> 2 -> 3` costs `rho/6`
/// per hop. The returned strategy sends data directly over `0 -> 3`
/// (cost `1 - rho/2`) and routes node 1's (zero) traffic over `1 -> 3`, which
/// makes the cheap route look expensive from node 0.
pub fn build_degenerate_instance(rho: f64) -> Result<(Instance, Strategy)> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::OutOfRange(format!("rho must lie in (0, 1), got {rho}")));
    }
    let lin = |slope: f64| CostFn::Linear { slope };
    let inst = InstanceBuilder::new(4)
        .link(0, 1, lin(rho / 6.0))
        .link(1, 2, lin(rho / 6.0))
        .link(2, 3, lin(rho / 6.0))
        .link(0, 3, lin(1.0 - rho / 2.0))
        .link(1, 3, lin(1.0 - rho / 2.0 - rho / 12.0))
        .cpu(3, lin(rho / 2.0))
        .app(Application::new(0, 3, vec![1.0, 1.0], 4).with_rate(0, 1.0))
        .build()?;
    let mut phi = Strategy::zeros(&inst);
    for s in 0..2 {
        phi.row_mut(s, 0)[inst.link_slot(0, 3).unwrap()] = 1.0;
        phi.row_mut(s, 1)[inst.link_slot(1, 3).unwrap()] = 1.0;
        phi.row_mut(s, 2)[inst.link_slot(2, 3).unwrap()] = 1.0;
    }
    phi.row_mut(0, 3)[0] = 1.0;
    Ok((inst, phi))
}
