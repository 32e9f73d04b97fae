//! Changes to rates and topology while the optimizer runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::step::update_row;
use super::{compute_blocked_sets, evaluate, Driver, GpParams, GpRun};
use crate::cost::{total_cost, CostFn, CostModel};
use crate::error::{Error, Result};
use crate::marginal::MarginalState;
use crate::model::{
    solve_traffic, Application, DirectionMask, Instance, NetworkGraph, Strategy, EPS_PHI,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewLink {
    pub from: usize,
    pub to: usize,
    pub cost: CostFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Event {
    /// `app` is the application id.
    RateChange { node: usize, app: usize, rate: f64 },
    LinkRemove { from: usize, to: usize },
    LinkAdd { from: usize, to: usize, cost: CostFn },
    /// Adds node `n` (the next free index) with the given links, which must
    /// all touch it.
    NodeAdd {
        links: Vec<NewLink>,
        #[serde(default)]
        cpu: Option<CostFn>,
    },
}

/// An event firing at slot `at`, or when the run converges before that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub at: usize,
    #[serde(flatten)]
    pub event: Event,
}

/// Carries `strategy` over to `new`, whose edges map back to the old ones
/// through `old_edge`. Rows of nodes that did not exist are left empty.
fn remap(
    old: &Instance,
    new: &Instance,
    strategy: &Strategy,
    old_edge: impl Fn(usize) -> Option<usize>,
) -> Strategy {
    let mut out = Strategy::zeros(new);
    let n_old = old.node_count();
    for s in 0..new.stage_count() {
        for i in 0..n_old {
            let src = strategy.row(s, i);
            let dst = out.row_mut(s, i);
            dst[0] = src[0];
            for &e in new.graph.out_edges(i) {
                if let Some(oe) = old_edge(e) {
                    dst[new.graph.slot_of(e)] = src[old.graph.slot_of(oe)];
                }
            }
        }
    }
    out
}

fn rebuild(
    edges: Vec<(usize, usize)>,
    costs: CostModel,
    apps: Vec<Application>,
    n: usize,
) -> Result<Instance> {
    Instance::new(NetworkGraph::new(n, edges)?, apps, costs)
}

fn finite_cost(inst: &Instance, strategy: &Strategy) -> Result<()> {
    let flow = solve_traffic(inst, strategy)?;
    if total_cost(&flow, &inst.costs).is_finite() {
        Ok(())
    } else {
        Err(Error::Saturated("cost is infinite after the event".into()))
    }
}

/// Applies `event` and returns the modified instance and strategy, ready for
/// the optimizer to continue from.
pub fn apply_event(
    inst: &Instance,
    strategy: &Strategy,
    event: &Event,
    params: &GpParams,
) -> Result<(Instance, Strategy)> {
    let n = inst.node_count();
    let (out_inst, out_strategy) = match event {
        Event::RateChange { node, app, rate } => {
            let a = inst
                .app_index(*app)
                .ok_or_else(|| Error::UnknownEntity(format!("application {app}")))?;
            if *node >= n {
                return Err(Error::UnknownEntity(format!("node {node}")));
            }
            let mut apps = inst.apps.clone();
            if *rate == 0.0 {
                apps[a].input_rate.remove(node);
            } else {
                apps[a].input_rate.insert(*node, *rate);
            }
            let new = Instance::new(inst.graph.clone(), apps, inst.costs.clone())?;
            (new, strategy.clone())
        }
        Event::LinkRemove { from, to } => {
            let e = inst
                .graph
                .find(*from, *to)
                .ok_or_else(|| Error::UnknownEntity(format!("link {from} -> {to}")))?;
            let phi = drain_link(inst, strategy, e, params)?;
            let mut edges = inst.graph.edges().to_vec();
            edges.remove(e);
            let mut costs = inst.costs.clone();
            costs.link.remove(e);
            let new = rebuild(edges, costs, inst.apps.clone(), n)?;
            let phi = remap(inst, &new, &phi, |x| Some(if x < e { x } else { x + 1 }));
            (new, phi)
        }
        Event::LinkAdd { from, to, cost } => {
            let mut edges = inst.graph.edges().to_vec();
            edges.push((*from, *to));
            let mut costs = inst.costs.clone();
            costs.link.push(*cost);
            let m = inst.graph.edge_count();
            let new = rebuild(edges, costs, inst.apps.clone(), n)?;
            let phi = remap(inst, &new, strategy, |x| (x < m).then_some(x));
            (new, phi)
        }
        Event::NodeAdd { links, cpu } => {
            let v = n;
            let mut edges = inst.graph.edges().to_vec();
            let mut costs = inst.costs.clone();
            for l in links {
                if l.from != v && l.to != v {
                    return Err(Error::InvalidInstance(format!(
                        "link {} -> {} of the new node {v} does not touch it",
                        l.from, l.to
                    )));
                }
                edges.push((l.from, l.to));
                costs.link.push(l.cost);
            }
            costs.node.push(*cpu);
            let mut apps = inst.apps.clone();
            let w = if cpu.is_some() { 1.0 } else { f64::INFINITY };
            for app in &mut apps {
                app.comp_weight.push(vec![w; app.chain_len]);
            }
            let m = inst.graph.edge_count();
            let new = rebuild(edges, costs, apps, n + 1)?;
            let mut phi = remap(inst, &new, strategy, |x| (x < m).then_some(x));
            randomize_rows(&new, &mut phi, v, params.seed);
            (new, phi)
        }
    };
    finite_cost(&out_inst, &out_strategy)?;
    Ok((out_inst, out_strategy))
}

/// Moves all traffic off edge `e` at its tail toward the cheapest unblocked
/// direction, treating `e` as blocked.
fn drain_link(inst: &Instance, strategy: &Strategy, e: usize, params: &GpParams) -> Result<Strategy> {
    let (i, _) = inst.graph.edge(e);
    let slot = inst.graph.slot_of(e);
    let users: Vec<usize> = (0..inst.stage_count())
        .filter(|&s| strategy.row(s, i)[slot] > 0.0)
        .collect();
    if users.is_empty() {
        return Ok(strategy.clone());
    }
    let eval = evaluate(inst, strategy, params)?;
    let mut mask = DirectionMask::all(inst);
    for s in 0..inst.stage_count() {
        mask.set(s, i, slot, false);
    }
    let blocked = compute_blocked_sets(inst, strategy, &eval.marg, Some(&mask), params.exec);
    let mut out = strategy.clone();
    for s in users {
        let phi = strategy.row(s, i);
        let delta = eval.marg.delta(s, i);
        let target = inst.row_target(s, i);
        let row = update_row(phi, delta, blocked.row(s, i), target, 0.0).or_else(|| {
            // fall back to any other link that does not lead back upstream
            let mut flags = vec![false; phi.len()];
            flags[slot] = true;
            let up = upstream(inst, strategy, s, i);
            for &x in inst.graph.out_edges(i) {
                if up[inst.graph.edge(x).1] {
                    flags[inst.graph.slot_of(x)] = true;
                }
            }
            update_row(phi, delta, &flags, target, 0.0)
        });
        match row {
            Some((row, _)) => *out.row_mut(s, i) = row,
            None => reroute_upstream(inst, strategy, &eval.marg, s, i, e, &mut out)?,
        }
    }
    Ok(out)
}

/// Sends every node that feeds `i` in stage `s`, and `i` itself, along a
/// cheapest path that avoids `e` and ends where the stage is consumed or at
/// a node whose routing never touches `i`.
fn reroute_upstream(
    inst: &Instance,
    strategy: &Strategy,
    marg: &MarginalState,
    s: usize,
    i: usize,
    e: usize,
    out: &mut Strategy,
) -> Result<()> {
    let g = &inst.graph;
    let n = inst.node_count();
    let up = upstream(inst, strategy, s, i);
    let mut dist = vec![f64::INFINITY; n];
    let mut choice = vec![None; n];
    for u in (0..n).filter(|&u| up[u]) {
        let delta = marg.delta(s, u);
        if !inst.is_final(s) && delta[0] < dist[u] {
            dist[u] = delta[0];
            choice[u] = Some(0);
        }
        for &x in g.out_edges(u) {
            let slot = g.slot_of(x);
            if x != e && !up[g.edge(x).1] && delta[slot] < dist[u] {
                dist[u] = delta[slot];
                choice[u] = Some(slot);
            }
        }
    }
    // Dijkstra inside the upstream set; link weights are nonnegative
    let mut done = vec![false; n];
    while let Some(v) = (0..n)
        .filter(|&v| up[v] && !done[v] && dist[v].is_finite())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
    {
        done[v] = true;
        for &x in g.in_edges(v) {
            let u = g.edge(x).0;
            if x == e || !up[u] || done[u] {
                continue;
            }
            let slot = g.slot_of(x);
            let d = marg.delta(s, u)[slot] - marg.dd_dt(s, v) + dist[v];
            if d < dist[u] {
                dist[u] = d;
                choice[u] = Some(slot);
            }
        }
    }
    for u in (0..n).filter(|&u| up[u]) {
        let target = inst.row_target(s, u);
        let row = out.row_mut(s, u);
        row.iter_mut().for_each(|x| *x = 0.0);
        if target == 0.0 {
            continue;
        }
        let Some(slot) = choice[u] else {
            let st = inst.stage(s);
            return Err(Error::NoUnblockedDirection {
                node: u,
                app: inst.apps[st.app].id,
                k: st.k,
            });
        };
        row[slot] = target;
    }
    Ok(())
}

fn upstream(inst: &Instance, strategy: &Strategy, s: usize, i: usize) -> Vec<bool> {
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

/// Random feasible rows for a node nobody routes to yet.
fn randomize_rows(inst: &Instance, strategy: &mut Strategy, v: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (v as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    for s in 0..inst.stage_count() {
        let target = inst.row_target(s, v);
        let len = inst.row_len(v);
        let mut row = vec![0.0; len];
        if target > 0.0 {
            let cpu_ok = !inst.is_final(s) && inst.weight(s, v).is_finite();
            for (slot, x) in row.iter_mut().enumerate() {
                if slot > 0 || cpu_ok {
                    *x = rng.gen_range(0.05..1.0);
                }
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x *= target / sum);
        }
        *strategy.row_mut(s, v) = row;
    }
}

/// Result of a run with scripted events.
#[derive(Debug, Clone)]
pub struct EventRun {
    pub instance: Instance,
    pub run: GpRun,
}

/// Runs the optimizer, applying `events` in order of their slot.
pub fn run_with_events(
    inst: &Instance,
    params: &GpParams,
    initial: &Strategy,
    events: &[ScheduledEvent],
) -> Result<EventRun> {
    let mut events = events.to_vec();
    events.sort_by_key(|e| e.at);
    let mut cur = inst.clone();
    let mut strategy = initial.clone();
    let mut iter = 0;
    let mut trajectory = Vec::new();
    for ev in &events {
        let mut d = Driver::start(&cur, params, &strategy, None, iter)?;
        d.run(ev.at.saturating_sub(iter).min(params.max_iters.saturating_sub(iter)))?;
        trajectory.extend(d.take_trajectory());
        iter = d.iter();
        strategy = d.strategy().clone();
        drop(d);
        let (next_inst, next_strategy) = apply_event(&cur, &strategy, &ev.event, params)?;
        cur = next_inst;
        strategy = next_strategy;
    }
    let mut d = Driver::start(&cur, params, &strategy, None, iter)?;
    d.run(params.max_iters.saturating_sub(iter))?;
    trajectory.extend(d.take_trajectory());
    let mut run = d.finish();
    run.trajectory = trajectory;
    Ok(EventRun { instance: cur, run })
}
