//! Distributed gradient projection: every slot, each node shifts traffic from
//! its more expensive directions toward the cheapest unblocked one.

mod blocked;
mod curvature;
pub use curvature::{curvature, Curvature};
mod events;
mod step;

pub use blocked::{compute_blocked_sets, BlockedSets, TIE_TOL};
pub use events::{apply_event, run_with_events, Event, EventRun, NewLink, ScheduledEvent};
pub use step::{gp_step, update_row, RowTransfer, StepReport, StepScaling, MIN_TIE_TOL};

use serde::{Deserialize, Serialize};

use crate::cost::total_cost;
use crate::error::{Error, Result};
use crate::marginal::{broadcast_marginals, compute_marginals_with, MarginalState};
use crate::model::{
    solve_traffic_with, stage_topo_order, validate_strategy, DirectionMask, FlowState, Instance,
    Strategy, EPS_PHI,
};
use crate::optimality::DEFAULT_TOL;
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpParams {
    /// Initial stepsize; backtracking adapts it between `alpha / 2^40` and
    /// `alpha * 2^10` (never above `alpha` with Newton scaling).
    pub alpha: f64,
    pub max_iters: usize,
    /// Target sufficiency residual.
    pub tol: f64,
    pub scaling: StepScaling,
    /// Halve the stepsize until a step does not increase the cost.
    pub backtracking: bool,
    /// Obtain marginals through the simulated broadcast.
    pub distributed: bool,
    /// Relative cost change treated as no progress.
    pub stall_tol: f64,
    /// Consecutive iterations with a flat cost and no new best residual
    /// before giving up.
    pub stall_patience: usize,
    /// Seed for random rows of nodes added by events.
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for GpParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            max_iters: 5000,
            tol: DEFAULT_TOL,
            scaling: StepScaling::default(),
            backtracking: true,
            distributed: false,
            stall_tol: 1e-9,
            stall_patience: 50,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

const ALPHA_SHRINK_LIMIT: i32 = 40;
const ALPHA_GROW_LIMIT: i32 = 10;
/// Relative cost change below which a step is treated as pure noise.
const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub iter: usize,
    pub cost: f64,
    pub residual: f64,
    pub loop_free: bool,
    /// Largest row-sum or sign violation.
    pub row_error: f64,
    pub messages: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    Stalled,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct GpRun {
    pub strategy: Strategy,
    pub flow: FlowState,
    pub cost: f64,
    pub residual: f64,
    pub iterations: usize,
    pub stop: StopReason,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl GpRun {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut out = String::from("iter,cost,residual,loop_free,row_error,messages\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.iter, p.cost, p.residual, p.loop_free, p.row_error, p.messages
        ));
    }
    out
}

/// Largest gap between an active direction's `delta` and its row minimum
/// over the directions allowed by `mask`.
pub fn sufficiency_residual(
    inst: &Instance,
    strategy: &Strategy,
    marg: &MarginalState,
    mask: Option<&DirectionMask>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..inst.stage_count() {
        for i in 0..inst.node_count() {
            let phi = strategy.row(s, i);
            let delta = marg.delta(s, i);
            let allowed = |d: usize| mask.is_none_or(|m| m.allows(s, i, d));
            let min = (0..phi.len())
                .filter(|&d| allowed(d))
                .map(|d| delta[d])
                .fold(f64::INFINITY, f64::min);
            for d in 0..phi.len() {
                if phi[d] > EPS_PHI && delta[d] != min {
                    worst = worst.max(delta[d] - min);
                }
            }
        }
    }
    worst
}

/// Number of positive-fraction links summed over stages: the messages one
/// broadcast round trip costs.
pub fn message_count(inst: &Instance, strategy: &Strategy) -> usize {
    let g = &inst.graph;
    (0..inst.stage_count())
        .map(|s| {
            (0..inst.node_count())
                .map(|i| {
                    let row = strategy.row(s, i);
                    g.out_edges(i).iter().filter(|&&e| row[g.slot_of(e)] > 0.0).count()
                })
                .sum::<usize>()
        })
        .sum()
}

/// Traffic, cost and marginals at one strategy.
pub(crate) struct Evaluation {
    pub flow: FlowState,
    pub cost: f64,
    pub marg: MarginalState,
    pub messages: usize,
}

pub(crate) fn evaluate(inst: &Instance, strategy: &Strategy, params: &GpParams) -> Result<Evaluation> {
    let flow = solve_traffic_with(inst, strategy, params.exec)?;
    let cost = total_cost(&flow, &inst.costs);
    let (marg, messages) = if params.distributed {
        let (m, log) = broadcast_marginals(inst, strategy, &flow)?;
        (m, log.total_messages())
    } else {
        (
            compute_marginals_with(inst, strategy, &flow, params.exec)?,
            message_count(inst, strategy),
        )
    };
    Ok(Evaluation {
        flow,
        cost,
        marg,
        messages,
    })
}

fn check_start(inst: &Instance, strategy: &Strategy) -> Result<()> {
    let rep = validate_strategy(inst, strategy);
    if !rep.is_feasible() {
        return Err(Error::InvalidStrategy(format!(
            "initial strategy infeasible: {} row-sum, {} range, {} cpu violations",
            rep.simplex_violations.len(),
            rep.range_violations.len(),
            rep.cpu_violations.len()
        )));
    }
    if let Some(&(app, k)) = rep.loops.first() {
        return Err(Error::LoopDetected { app, k });
    }
    Ok(())
}

fn is_loop_free(inst: &Instance, strategy: &Strategy) -> bool {
    (0..inst.stage_count()).all(|s| stage_topo_order(inst, strategy, s, 0.0).is_some())
}

/// Runs gradient projection from `initial` until the sufficiency residual
/// drops to `tol`, progress stalls, or `max_iters` slots have passed.
pub fn run_gp(inst: &Instance, params: &GpParams, initial: &Strategy) -> Result<GpRun> {
    run_gp_masked(inst, params, initial, None)
}

/// As [`run_gp`], with directions outside `mask` permanently blocked.
pub fn run_gp_masked(
    inst: &Instance,
    params: &GpParams,
    initial: &Strategy,
    mask: Option<&DirectionMask>,
) -> Result<GpRun> {
    let mut driver = Driver::start(inst, params, initial, mask, 0)?;
    driver.run(params.max_iters)?;
    Ok(driver.finish())
}

/// Iteration state shared by plain and event-driven runs.
pub(crate) struct Driver<'a> {
    inst: &'a Instance,
    params: &'a GpParams,
    mask: Option<&'a DirectionMask>,
    strategy: Strategy,
    eval: Evaluation,
    residual: f64,
    alpha: f64,
    iter: usize,
    stall: usize,
    best_residual: f64,
    stop: StopReason,
    trajectory: Vec<TrajectoryPoint>,
}

impl<'a> Driver<'a> {
    pub(crate) fn start(
        inst: &'a Instance,
        params: &'a GpParams,
        initial: &Strategy,
        mask: Option<&'a DirectionMask>,
        iter: usize,
    ) -> Result<Self> {
        if !(params.alpha > 0.0) || !(params.tol >= 0.0) {
            return Err(Error::OutOfRange("alpha must be positive and tol non-negative".into()));
        }
        check_start(inst, initial)?;
        let eval = evaluate(inst, initial, params)?;
        if !eval.cost.is_finite() {
            return Err(Error::Saturated("initial strategy has infinite cost".into()));
        }
        let residual = sufficiency_residual(inst, initial, &eval.marg, mask);
        let mut d = Self {
            inst,
            params,
            mask,
            strategy: initial.clone(),
            eval,
            residual,
            alpha: params.alpha,
            iter,
            stall: 0,
            best_residual: residual,
            stop: StopReason::MaxIters,
            trajectory: Vec::new(),
        };
        d.record();
        Ok(d)
    }

    fn record(&mut self) {
        self.trajectory.push(TrajectoryPoint {
            iter: self.iter,
            cost: self.eval.cost,
            residual: self.residual,
            loop_free: is_loop_free(self.inst, &self.strategy),
            row_error: self.strategy.feasibility_error(self.inst),
            messages: self.eval.messages,
        });
    }

    /// Performs up to `slots` updates; returns early on convergence or stall.
    pub(crate) fn run(&mut self, slots: usize) -> Result<()> {
        let p = self.params;
        let alpha_min = p.alpha * 2f64.powi(-ALPHA_SHRINK_LIMIT);
        // a Newton step is already sized; growing past it only oscillates
        let alpha_max = match p.scaling {
            StepScaling::Newton => p.alpha,
            _ => p.alpha * 2f64.powi(ALPHA_GROW_LIMIT),
        };
        let mut rising = 0;
        for _ in 0..slots {
            if self.residual <= p.tol {
                self.stop = StopReason::Converged;
                return Ok(());
            }
            let blocked = compute_blocked_sets(self.inst, &self.strategy, &self.eval.marg, self.mask, p.exec);
            let curv = match p.scaling {
                StepScaling::Newton => Some(curvature(
                    self.inst,
                    &self.strategy,
                    &self.eval.flow,
                    p.exec,
                )?),
                _ => None,
            };
            let mut backtracked = false;
            let accepted = loop {
                let (cand, _) = gp_step(
                    self.inst,
                    &self.strategy,
                    &self.eval.marg,
                    &blocked,
                    self.mask,
                    self.alpha,
                    p.scaling,
                    curv.as_ref(),
                    p.exec,
                )?;
                let eval = evaluate(self.inst, &cand, p)?;
                let band = NOISE_FLOOR * self.eval.cost.abs().max(1.0);
                let ok = if (eval.cost - self.eval.cost).abs() <= band {
                    // the cost cannot see progress at this scale, the residual can
                    sufficiency_residual(self.inst, &cand, &eval.marg, self.mask) <= self.residual
                } else {
                    eval.cost < self.eval.cost
                };
                if ok || !p.backtracking {
                    if !ok {
                        rising += 1;
                        if rising >= p.stall_patience {
                            return Err(Error::Divergence { iter: self.iter + 1 });
                        }
                    } else {
                        rising = 0;
                    }
                    break Some((cand, eval));
                }
                self.alpha /= 2.0;
                backtracked = true;
                if self.alpha < alpha_min {
                    break None;
                }
            };
            let Some((cand, eval)) = accepted else {
                self.alpha = alpha_min;
                self.stop = StopReason::Stalled;
                return Ok(());
            };
            let before = self.eval.cost;
            self.strategy = cand;
            self.eval = eval;
            self.iter += 1;
            self.residual = sufficiency_residual(self.inst, &self.strategy, &self.eval.marg, self.mask);
            self.record();
            if !backtracked {
                self.alpha = (self.alpha * 2.0).min(alpha_max);
            }

            let flat = (before - self.eval.cost).abs() <= p.stall_tol * before.abs().max(1.0);
            if self.residual < self.best_residual {
                self.best_residual = self.residual;
                self.stall = 0;
            } else if flat {
                self.stall += 1;
                if self.stall >= p.stall_patience && self.residual > p.tol {
                    self.stop = StopReason::Stalled;
                    return Ok(());
                }
            } else {
                self.stall = 0;
            }
        }
        self.stop = if self.residual <= p.tol {
            StopReason::Converged
        } else {
            StopReason::MaxIters
        };
        Ok(())
    }

    pub(crate) fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub(crate) fn iter(&self) -> usize {
        self.iter
    }

    pub(crate) fn take_trajectory(&mut self) -> Vec<TrajectoryPoint> {
        std::mem::take(&mut self.trajectory)
    }

    pub(crate) fn finish(self) -> GpRun {
        GpRun {
            strategy: self.strategy,
            flow: self.eval.flow,
            cost: self.eval.cost,
            residual: self.residual,
            iterations: self.iter,
            stop: self.stop,
            trajectory: self.trajectory,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimality::{build_degenerate_instance, check_sufficiency};

    #[test]
    fn escapes_degenerate_point() {
        for scaling in [StepScaling::Newton, StepScaling::Traffic, StepScaling::MaxExcess] {
            let (inst, phi) = build_degenerate_instance(0.1).unwrap();
            let params = GpParams {
                scaling,
                alpha: if scaling == StepScaling::MaxExcess { 0.05 } else { 1.0 },
                ..GpParams::default()
            };
            let run = run_gp(&inst, &params, &phi).unwrap();
            assert!(run.converged(), "{scaling:?} {:?} {}", run.stop, run.residual);
            assert!(run.cost <= 0.101, "{scaling:?} {}", run.cost);
            let flow = &run.flow;
            let m = crate::marginal::compute_marginals(&inst, &run.strategy, flow).unwrap();
            assert!(check_sufficiency(&inst, &run.strategy, &m, 1e-6).satisfied);
            assert!(run.trajectory.windows(2).all(|w| w[1].cost <= w[0].cost * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn fixed_point_stops_at_iteration_zero() {
        let (inst, phi) = build_degenerate_instance(0.2).unwrap();
        let run = run_gp(&inst, &GpParams::default(), &phi).unwrap();
        let again = run_gp(&inst, &GpParams::default(), &run.strategy).unwrap();
        assert_eq!(again.iterations, 0);
        assert!(again.converged());
        assert_eq!(again.trajectory.len(), 1);
    }

    #[test]
    fn distributed_matches_central() {
        let (inst, phi) = build_degenerate_instance(0.4).unwrap();
        let a = run_gp(&inst, &GpParams::default(), &phi).unwrap();
        let b = run_gp(
            &inst,
            &GpParams {
                distributed: true,
                ..GpParams::default()
            },
            &phi,
        )
        .unwrap();
        assert_eq!(a.strategy, b.strategy);
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn csv_header() {
        let (inst, phi) = build_degenerate_instance(0.4).unwrap();
        let run = run_gp(&inst, &GpParams::default(), &phi).unwrap();
        let csv = trajectory_csv(&run.trajectory);
        assert!(csv.starts_with("iter,cost,residual,loop_free,row_error,messages\n0,1,"));
    }
}
