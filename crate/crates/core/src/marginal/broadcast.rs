//! Round-synchronous simulation of the marginal broadcast. Each application
//! runs one phase per stage, last stage first; within a phase a node reports
//! its `dD/dt` upstream once every active downstream neighbour has reported.

use serde::Serialize;

use super::{finish, node_dd_dt, MarginalState, Prices};
use crate::error::{Error, Result};
use crate::model::{FlowState, Instance, Strategy};
use crate::par::Exec;

/// Messages delivered in one round of one phase. `phase` is the stage index
/// `k`; phases run from `chain_len` down to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RoundRecord {
    pub app: usize,
    pub phase: usize,
    pub round: usize,
    pub messages: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BroadcastLog {
    pub records: Vec<RoundRecord>,
}

impl BroadcastLog {
    pub fn total_messages(&self) -> usize {
        self.records.iter().map(|r| r.messages).sum()
    }

    /// Last round in which some node of the phase computed its value.
    pub fn completion_round(&self, app: usize, phase: usize) -> Option<usize> {
        self.records
            .iter()
            .filter(|r| r.app == app && r.phase == phase)
            .map(|r| r.round)
            .max()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("app,phase,round,messages\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.app, r.phase, r.round, r.messages));
        }
        out
    }
}

/// Same numbers as [`super::compute_marginals`], produced by message passing.
pub fn broadcast_marginals(
    inst: &Instance,
    strategy: &Strategy,
    flow: &FlowState,
) -> Result<(MarginalState, BroadcastLog)> {
    let n = inst.node_count();
    let g = &inst.graph;
    let prices = Prices::new(inst, flow);
    let mut dd_dt = vec![0.0; inst.stage_count() * n];
    let mut log = BroadcastLog::default();

    for (a, app) in inst.apps.iter().enumerate() {
        let base = inst.stage_index(a, 0);
        for k in (0..=app.chain_len).rev() {
            let s = base + k;
            let (head, tail) = dd_dt.split_at_mut((s + 1) * n);
            let cur = &mut head[s * n..];
            let next = (k < app.chain_len).then(|| &tail[..n]);

            // number of active downstream neighbours still to hear from
            let mut pending: Vec<usize> = (0..n)
                .map(|i| {
                    let row = strategy.row(s, i);
                    (1..row.len()).filter(|&p| row[p] > 0.0).count()
                })
                .collect();
            let mut done = vec![false; n];
            let mut ready: Vec<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
            let mut round = 0;
            while !ready.is_empty() {
                let mut messages = 0;
                let mut next_ready = Vec::new();
                for &i in &ready {
                    cur[i] = node_dd_dt(inst, strategy, &prices, s, i, cur, next);
                    done[i] = true;
                    for &e in g.in_edges(i) {
                        let u = g.edge(e).0;
                        if strategy.row(s, u)[g.slot_of(e)] > 0.0 {
                            messages += 1;
                            pending[u] -= 1;
                            if pending[u] == 0 {
                                next_ready.push(u);
                            }
                        }
                    }
                }
                log.records.push(RoundRecord {
                    app: app.id,
                    phase: k,
                    round,
                    messages,
                });
                next_ready.sort_unstable();
                ready = next_ready;
                round += 1;
            }
            let waiting: Vec<usize> = (0..n).filter(|&i| !done[i]).collect();
            if !waiting.is_empty() {
                return Err(Error::Deadlock { app: a, k, waiting });
            }
        }
    }
    Ok((finish(inst, flow, &prices, dd_dt, Exec::Sequential), log))
}
