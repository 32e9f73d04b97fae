use super::{masked_optimum, BaselineResult, Method};
use crate::error::{Error, Result};
use crate::gp::GpParams;
use crate::layered::zero_load_tree;
use crate::model::{DirectionMask, Instance};

/// Directions LCOF may use: sources compute every task locally, all other
/// non-final rows follow the zero-load layered tree, and the final stage is
/// routed freely.
pub fn lcof_mask(inst: &Instance) -> Result<DirectionMask> {
    let mut mask = DirectionMask::none(inst);
    for (a, app) in inst.apps.iter().enumerate() {
        let tree = zero_load_tree(inst, a, None);
        for k in 0..=app.chain_len {
            let s = inst.stage_index(a, k);
            for i in 0..inst.node_count() {
                if k == app.chain_len {
                    for slot in 1..inst.row_len(i) {
                        mask.set(s, i, slot, true);
                    }
                } else if app.rate(i) > 0.0 {
                    if !app.weight(i, k).is_finite() {
                        return Err(Error::SourceLacksCompute { app: app.id, node: i, k });
                    }
                    mask.set(s, i, 0, true);
                } else if let Some(slot) = tree.next(k, i) {
                    mask.set(s, i, slot, true);
                }
            }
        }
    }
    Ok(mask)
}

/// Local computation at sources with optimized result routing.
pub fn lcof(inst: &Instance, params: &GpParams) -> Result<BaselineResult> {
    masked_optimum(Method::Lcof, inst, &lcof_mask(inst)?, params)
}
