//! One synchronous update of every row.

use serde::{Deserialize, Serialize};

use super::blocked::BlockedSets;
use super::curvature::Curvature;
use crate::error::{Error, Result};
use crate::marginal::MarginalState;
use crate::model::{DirectionMask, Instance, Strategy, EPS_PHI};
use crate::par::{self, Exec};

/// Relative tolerance under which two `delta` values tie for the minimum.
pub const MIN_TIE_TOL: f64 = 1e-12;

/// How the stepsize is scaled per row before moving `alpha * e` mass away
/// from a non-minimal direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepScaling {
    /// Divide by the row's traffic, so flow moves in proportion to the
    /// marginal gap; rows without traffic jump straight to the minimizers.
    Traffic,
    /// Divide by the row's largest gap, so each row moves at most `alpha`.
    MaxExcess,
    /// Divide by the traffic times the downstream cost curvature of the
    /// source and target directions: a diagonal Newton step.
    #[default]
    Newton,
}

/// Mass moved within one row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowTransfer {
    pub node: usize,
    pub app: usize,
    pub k: usize,
    pub moved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub transfers: Vec<RowTransfer>,
}

impl StepReport {
    pub fn total_moved(&self) -> f64 {
        self.transfers.iter().map(|t| t.moved).sum()
    }
}

/// Applies the projection update to one row. `delta` and `blocked` are the
/// row's marginals and blocked flags, `scale` multiplies each gap. Returns
/// `None` when no unblocked direction has a finite marginal.
pub fn update_row(
    phi: &[f64],
    delta: &[f64],
    blocked: &[bool],
    target: f64,
    scale: f64,
) -> Option<(Vec<f64>, f64)> {
    update_row_by(phi, delta, blocked, target, |_, _| scale)
}

/// As [`update_row`], with the gap of direction `d` multiplied by
/// `scale(d, minimizers)`.
pub(crate) fn update_row_by(
    phi: &[f64],
    delta: &[f64],
    blocked: &[bool],
    target: f64,
    scale: impl Fn(usize, &[usize]) -> f64,
) -> Option<(Vec<f64>, f64)> {
    if target == 0.0 {
        return Some((vec![0.0; phi.len()], 0.0));
    }
    let usable = |d: usize| !blocked[d] && delta[d].is_finite();
    let min = (0..phi.len())
        .filter(|&d| usable(d))
        .map(|d| delta[d])
        .fold(f64::INFINITY, f64::min);
    if min.is_infinite() {
        return None;
    }
    let tie = MIN_TIE_TOL * min.abs().max(1.0);
    let is_min = |d: usize| usable(d) && delta[d] <= min + tie;

    let minimizers: Vec<usize> = (0..phi.len()).filter(|&d| is_min(d)).collect();
    let mut next = phi.to_vec();
    let mut moved = 0.0;
    for d in 0..phi.len() {
        if is_min(d) || phi[d] == 0.0 {
            continue;
        }
        let take = if usable(d) {
            phi[d].min(scale(d, &minimizers) * (delta[d] - min))
        } else {
            phi[d]
        };
        next[d] -= take;
        moved += take;
    }
    let share = moved / minimizers.len() as f64;
    for &d in &minimizers {
        next[d] += share;
    }

    // drop dust, then put the rounding residue on the first minimizer
    for d in 0..next.len() {
        if next[d] <= EPS_PHI && !minimizers.contains(&d) {
            next[minimizers[0]] += next[d];
            next[d] = 0.0;
        }
    }
    let sum: f64 = next.iter().sum();
    next[minimizers[0]] += target - sum;
    if next[minimizers[0]] < 0.0 {
        next[minimizers[0]] = 0.0;
    }
    Some((next, moved))
}

/// Scale applied to each gap of row `(s, i)` by the first two rules.
pub(crate) fn row_scale(
    scaling: StepScaling,
    alpha: f64,
    t: f64,
    phi: &[f64],
    delta: &[f64],
    blocked: &[bool],
) -> f64 {
    match scaling {
        StepScaling::Traffic => {
            if t > 0.0 {
                alpha / t
            } else {
                f64::INFINITY
            }
        }
        StepScaling::Newton => unreachable!("per-direction scale"),
        StepScaling::MaxExcess => {
            let usable = (0..phi.len()).filter(|&d| !blocked[d] && delta[d].is_finite());
            let (min, max) = usable
                .map(|d| delta[d])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let gap = max - min;
            if gap > 0.0 {
                alpha / gap
            } else {
                0.0
            }
        }
    }
}

/// Nodes that can reach `i` over stage-`s` active links (including `i`).
fn upstream_of(inst: &Instance, strategy: &Strategy, s: usize, i: usize) -> Vec<bool> {
    let g = &inst.graph;
    let mut seen = vec![false; inst.node_count()];
    seen[i] = true;
    let mut stack = vec![i];
    while let Some(v) = stack.pop() {
        for &e in g.in_edges(v) {
            let u = g.edge(e).0;
            if !seen[u] && strategy.row(s, u)[g.slot_of(e)] > EPS_PHI {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen
}

/// Blocked flags for a row whose every unblocked direction is unusable:
/// only mask-forbidden links and links leading back upstream stay blocked.
fn fallback_blocked(
    inst: &Instance,
    strategy: &Strategy,
    mask: Option<&DirectionMask>,
    s: usize,
    i: usize,
) -> Vec<bool> {
    let g = &inst.graph;
    let up = upstream_of(inst, strategy, s, i);
    let mut flags = vec![false; inst.row_len(i)];
    for &e in g.out_edges(i) {
        let slot = g.slot_of(e);
        flags[slot] = mask.is_some_and(|m| !m.allows(s, i, slot)) || up[g.edge(e).1];
    }
    flags
}

/// One synchronous update of every row from the same marginals.
#[allow(clippy::too_many_arguments)]
pub fn gp_step(
    inst: &Instance,
    strategy: &Strategy,
    marg: &MarginalState,
    blocked: &BlockedSets,
    mask: Option<&DirectionMask>,
    alpha: f64,
    scaling: StepScaling,
    curv: Option<&Curvature>,
    exec: Exec,
) -> Result<(Strategy, StepReport)> {
    let n = inst.node_count();
    let rows = par::map_range(exec, inst.stage_count() * n, |r| {
        let (s, i) = (r / n, r % n);
        let phi = strategy.row(s, i);
        let delta = marg.delta(s, i);
        let target = inst.row_target(s, i);
        let t = marg.t(s, i);
        let try_with = |flags: &[bool]| match (scaling, curv) {
            (StepScaling::Newton, Some(cv)) => update_row_by(phi, delta, flags, target, |d, mins| {
                let h_min = mins.iter().map(|&m| cv.direction(inst, s, i, m)).sum::<f64>()
                    / mins.len() as f64;
                let h = t * (cv.direction(inst, s, i, d) + h_min);
                if h > 0.0 {
                    alpha / h
                } else {
                    f64::INFINITY
                }
            }),
            _ => {
                let scaling = if scaling == StepScaling::Newton {
                    StepScaling::Traffic
                } else {
                    scaling
                };
                let scale = row_scale(scaling, alpha, t, phi, delta, flags);
                update_row(phi, delta, flags, target, scale)
            }
        };
        try_with(blocked.row(s, i))
            .or_else(|| try_with(&fallback_blocked(inst, strategy, mask, s, i)))
            .ok_or_else(|| {
                let st = inst.stage(s);
                Error::NoUnblockedDirection {
                    node: i,
                    app: inst.apps[st.app].id,
                    k: st.k,
                }
            })
    });
    let mut out = Vec::with_capacity(rows.len());
    let mut transfers = Vec::new();
    for (r, row) in rows.into_iter().enumerate() {
        let (row, moved) = row?;
        if moved > 0.0 {
            let st = inst.stage(r / n);
            transfers.push(RowTransfer {
                node: r % n,
                app: inst.apps[st.app].id,
                k: st.k,
                moved,
            });
        }
        out.push(row);
    }
    Ok((Strategy::from_rows(n, out), StepReport { transfers }))
}
