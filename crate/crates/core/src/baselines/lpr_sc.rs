use super::{evaluate, BaselineResult, Method};
use crate::error::Result;
use crate::layered::{zero_load_tree, LayeredTree};
use crate::model::{tree_strategy, Instance};

/// Routes every source's flow on its cheapest path in the layered graph,
/// with links and CPUs priced at their zero-load marginal cost. One path per
/// source; the resulting cost is evaluated under real congestion.
pub fn lpr_sc(inst: &Instance) -> Result<BaselineResult> {
    let trees: Vec<LayeredTree> = (0..inst.apps.len())
        .map(|a| zero_load_tree(inst, a, None))
        .collect();
    evaluate(Method::LprSc, inst, tree_strategy(inst, &trees)?)
}
