//! Comparison methods and the flow-space convex oracle.
//!
//! * [`spoc`] fixes forwarding to zero-load shortest paths and optimizes only
//!   where along each path tasks run.
//! * [`lcof`] computes every task at the data source and optimizes only the
//!   routing of results.
//! * [`lpr_sc`] routes each source on its cheapest zero-load path in the
//!   layered (node, stage) graph, ignoring congestion.
//! * [`frank_wolfe_oracle`] solves the flow-domain convex program directly.

mod lcof;
mod lpr_sc;
mod oracle;
mod spoc;

pub use lcof::{lcof, lcof_mask};
pub use lpr_sc::lpr_sc;
pub use oracle::{frank_wolfe_oracle, OracleParams, OracleResult};
pub use spoc::{spoc, spoc_mask};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::total_cost;
use crate::error::{Error, Result};
use crate::gp::{run_gp_masked, GpParams};
use crate::model::{initial_strategy_masked, solve_traffic, DirectionMask, FlowState, Instance, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gp,
    Spoc,
    Lcof,
    LprSc,
    Oracle,
}

impl Method {
    pub const BASELINES: [Method; 3] = [Method::Spoc, Method::Lcof, Method::LprSc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gp => "gp",
            Method::Spoc => "spoc",
            Method::Lcof => "lcof",
            Method::LprSc => "lpr-sc",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gp" => Ok(Method::Gp),
            "spoc" => Ok(Method::Spoc),
            "lcof" => Ok(Method::Lcof),
            "lpr-sc" | "lprsc" | "lpr_sc" => Ok(Method::LprSc),
            "oracle" => Ok(Method::Oracle),
            _ => Err(Error::UnknownEntity(format!("method {s}"))),
        }
    }
}

/// A strategy produced by a baseline together with its true cost.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub method: Method,
    pub strategy: Strategy,
    pub flow: FlowState,
    /// `+inf` when some queue saturates.
    pub cost: f64,
    /// Sufficiency residual of the restricted problem, for methods that
    /// optimize within a mask.
    pub residual: Option<f64>,
}

impl BaselineResult {
    pub fn saturated(&self) -> bool {
        !self.cost.is_finite()
    }
}

pub(crate) fn evaluate(method: Method, inst: &Instance, strategy: Strategy) -> Result<BaselineResult> {
    let flow = solve_traffic(inst, &strategy)?;
    let cost = total_cost(&flow, &inst.costs);
    Ok(BaselineResult {
        method,
        strategy,
        flow,
        cost,
        residual: None,
    })
}

/// Optimizes within `mask`, starting from the masked zero-load routing.
pub(crate) fn masked_optimum(
    method: Method,
    inst: &Instance,
    mask: &DirectionMask,
    params: &GpParams,
) -> Result<BaselineResult> {
    let init = initial_strategy_masked(inst, Some(mask))?;
    let run = run_gp_masked(inst, params, &init, Some(mask))?;
    Ok(BaselineResult {
        method,
        strategy: run.strategy,
        flow: run.flow,
        cost: run.cost,
        residual: Some(run.residual),
    })
}
