use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::Instance;
use crate::error::{Error, Result};

/// Fractions at or below this are treated as unused when checking loops,
/// activity and KKT conditions.
pub const EPS_PHI: f64 = 1e-9;

/// Tolerance on row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Where a fraction of a node's traffic goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    /// The node's own CPU; advances the stage.
    Cpu,
    /// Out-link, by edge id.
    Link(usize),
}

/// Forwarding/offloading fractions. Row `(s, i)` has one entry per direction
/// of node `i`: slot 0 is the CPU, slot `1 + p` is the `p`-th out-link.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl Strategy {
    pub fn zeros(inst: &Instance) -> Self {
        let n = inst.node_count();
        let rows = (0..inst.stage_count())
            .flat_map(|_| (0..n).map(|i| vec![0.0; inst.row_len(i)]))
            .collect();
        Self { n, rows }
    }

    pub fn from_rows(n: usize, rows: Vec<Vec<f64>>) -> Self {
        Self { n, rows }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn row(&self, s: usize, i: usize) -> &[f64] {
        &self.rows[s * self.n + i]
    }

    pub fn row_mut(&mut self, s: usize, i: usize) -> &mut Vec<f64> {
        &mut self.rows[s * self.n + i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    /// Fraction on the link `i -> j` for stage `s` (zero if no such link).
    pub fn link(&self, inst: &Instance, s: usize, i: usize, j: usize) -> f64 {
        inst.link_slot(i, j).map_or(0.0, |slot| self.row(s, i)[slot])
    }

    pub fn cpu(&self, s: usize, i: usize) -> f64 {
        self.row(s, i)[0]
    }

    pub fn shape_matches(&self, inst: &Instance) -> bool {
        self.n == inst.node_count()
            && self.rows.len() == inst.stage_count() * self.n
            && self
                .rows
                .iter()
                .enumerate()
                .all(|(r, row)| row.len() == inst.row_len(r % self.n))
    }

    /// Largest deviation of any row sum from its target, or of any entry
    /// below zero.
    pub fn feasibility_error(&self, inst: &Instance) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..inst.stage_count() {
            for i in 0..self.n {
                let row = self.row(s, i);
                let sum: f64 = row.iter().sum();
                worst = worst.max((sum - inst.row_target(s, i)).abs());
                worst = row.iter().fold(worst, |w, &x| if -x > w { -x } else { w });
            }
        }
        worst
    }

    /// Serializes as a map from `"node/app_id/k"` to direction -> fraction,
    /// where a direction is `"cpu"` or the neighbor id. Zeros are omitted.
    pub fn to_json(&self, inst: &Instance) -> String {
        let mut map: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for s in 0..inst.stage_count() {
            let st = inst.stage(s);
            let app_id = inst.apps[st.app].id;
            for i in 0..self.n {
                let mut entry = BTreeMap::new();
                for (slot, &v) in self.row(s, i).iter().enumerate() {
                    if v != 0.0 {
                        let key = match inst.dir(i, slot) {
                            super::Dir::Cpu => "cpu".to_string(),
                            super::Dir::Link(e) => inst.graph.edge(e).1.to_string(),
                        };
                        entry.insert(key, v);
                    }
                }
                if !entry.is_empty() {
                    map.insert(format!("{i}/{app_id}/{}", st.k), entry);
                }
            }
        }
        serde_json::to_string_pretty(&map).expect("strategy serializes")
    }

    pub fn from_json(inst: &Instance, text: &str) -> Result<Self> {
        let map: BTreeMap<String, BTreeMap<String, f64>> = serde_json::from_str(text)?;
        let mut out = Self::zeros(inst);
        for (key, dirs) in map {
            let parts: Vec<&str> = key.split('/').collect();
            let parse = |p: &str| {
                p.parse::<usize>()
                    .map_err(|_| Error::InvalidStrategy(format!("bad row key {key:?}")))
            };
            if parts.len() != 3 {
                return Err(Error::InvalidStrategy(format!("bad row key {key:?}")));
            }
            let (i, app_id, k) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
            let a = inst
                .app_index(app_id)
                .ok_or_else(|| Error::UnknownEntity(format!("application {app_id}")))?;
            if i >= inst.node_count() || k > inst.apps[a].chain_len {
                return Err(Error::UnknownEntity(format!("row {key}")));
            }
            let s = inst.stage_index(a, k);
            for (d, v) in dirs {
                let slot = if d == "cpu" {
                    0
                } else {
                    let j: usize = d
                        .parse()
                        .map_err(|_| Error::InvalidStrategy(format!("bad direction {d:?}")))?;
                    inst.link_slot(i, j)
                        .ok_or_else(|| Error::UnknownEntity(format!("link ({i},{j})")))?
                };
                out.row_mut(s, i)[slot] = v;
            }
        }
        Ok(out)
    }

    pub fn load(inst: &Instance, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(inst, &std::fs::read_to_string(path)?)
    }
}

/// Restricts which directions a strategy may use. Same shape as a strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionMask {
    n: usize,
    allowed: Vec<Vec<bool>>,
}

impl DirectionMask {
    pub fn all(inst: &Instance) -> Self {
        let n = inst.node_count();
        let allowed = (0..inst.stage_count())
            .flat_map(|_| (0..n).map(|i| vec![true; inst.row_len(i)]))
            .collect();
        Self { n, allowed }
    }

    pub fn none(inst: &Instance) -> Self {
        let mut m = Self::all(inst);
        for row in &mut m.allowed {
            row.iter_mut().for_each(|x| *x = false);
        }
        m
    }

    pub fn allows(&self, s: usize, i: usize, slot: usize) -> bool {
        self.allowed[s * self.n + i][slot]
    }

    pub fn set(&mut self, s: usize, i: usize, slot: usize, v: bool) {
        self.allowed[s * self.n + i][slot] = v;
    }

    pub fn row(&self, s: usize, i: usize) -> &[bool] {
        &self.allowed[s * self.n + i]
    }
}

/// Topological order of the nodes in the stage-`s` subgraph made of links
/// whose fraction exceeds `threshold`. `None` if that subgraph has a cycle.
pub fn stage_topo_order(
    inst: &Instance,
    strategy: &Strategy,
    s: usize,
    threshold: f64,
) -> Option<Vec<usize>> {
    let n = inst.node_count();
    let g = &inst.graph;
    let mut indeg = vec![0usize; n];
    for i in 0..n {
        let row = strategy.row(s, i);
        for (p, &e) in g.out_edges(i).iter().enumerate() {
            if row[p + 1] > threshold {
                indeg[g.edge(e).1] += 1;
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut queue: std::collections::VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    while let Some(u) = queue.pop_front() {
        order.push(u);
        let row = strategy.row(s, u);
        for (p, &e) in g.out_edges(u).iter().enumerate() {
            if row[p + 1] > threshold {
                let v = g.edge(e).1;
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowSumIssue {
    pub node: usize,
    pub app: usize,
    pub k: usize,
    pub sum: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowRef {
    pub node: usize,
    pub app: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ValidationReport {
    pub shape_ok: bool,
    pub simplex_violations: Vec<RowSumIssue>,
    /// Entries outside `[0, 1]` or NaN.
    pub range_violations: Vec<RowRef>,
    /// Stages `(app, k)` whose active subgraph has a cycle.
    pub loops: Vec<(usize, usize)>,
    /// Positive CPU fraction where the task cannot run (including final stages).
    pub cpu_violations: Vec<RowRef>,
}

impl ValidationReport {
    pub fn is_feasible(&self) -> bool {
        self.shape_ok
            && self.simplex_violations.is_empty()
            && self.range_violations.is_empty()
            && self.cpu_violations.is_empty()
    }

    pub fn is_loop_free(&self) -> bool {
        self.shape_ok && self.loops.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.is_feasible() && self.is_loop_free()
    }
}

/// Checks row sums, entry ranges, CPU capability and per-stage loop-freedom.
pub fn validate_strategy(inst: &Instance, strategy: &Strategy) -> ValidationReport {
    if !strategy.shape_matches(inst) {
        return ValidationReport::default();
    }
    let mut rep = ValidationReport {
        shape_ok: true,
        ..Default::default()
    };
    for s in 0..inst.stage_count() {
        let st = inst.stage(s);
        for i in 0..inst.node_count() {
            let row = strategy.row(s, i);
            let at = RowRef {
                node: i,
                app: st.app,
                k: st.k,
            };
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                rep.range_violations.push(at.clone());
            }
            let sum: f64 = row.iter().sum();
            let expected = inst.row_target(s, i);
            if (sum - expected).abs() > ROW_SUM_TOL {
                rep.simplex_violations.push(RowSumIssue {
                    node: i,
                    app: st.app,
                    k: st.k,
                    sum,
                    expected,
                });
            }
            if row[0] > 0.0 && !inst.weight(s, i).is_finite() {
                rep.cpu_violations.push(at);
            }
        }
        if stage_topo_order(inst, strategy, s, EPS_PHI).is_none() {
            rep.loops.push((st.app, st.k));
        }
    }
    rep
}
