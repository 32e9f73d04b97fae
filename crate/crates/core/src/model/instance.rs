use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Application, Dir, NetworkGraph, Stage};
use crate::cost::{CostFn, CostModel};
use crate::error::{Error, Result};

/// A complete problem: topology, applications and costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub graph: NetworkGraph,
    pub apps: Vec<Application>,
    pub costs: CostModel,
    stages: Vec<Stage>,
    stage_offset: Vec<usize>,
}

impl Instance {
    pub fn new(graph: NetworkGraph, apps: Vec<Application>, costs: CostModel) -> Result<Self> {
        let mut stages = Vec::new();
        let mut stage_offset = Vec::with_capacity(apps.len());
        for (a, app) in apps.iter().enumerate() {
            stage_offset.push(stages.len());
            stages.extend((0..=app.chain_len).map(|k| Stage { app: a, k }));
        }
        let inst = Self {
            graph,
            apps,
            costs,
            stages,
            stage_offset,
        };
        inst.check()?;
        Ok(inst)
    }

    fn check(&self) -> Result<()> {
        let n = self.graph.node_count();
        let bad = |m: String| Err(Error::InvalidInstance(m));
        self.costs.check(&self.graph).map_err(Error::InvalidInstance)?;
        if self.apps.is_empty() {
            return bad("no applications".into());
        }
        for (a, app) in self.apps.iter().enumerate() {
            if app.chain_len == 0 {
                return bad(format!("app {a}: chain_len must be at least 1"));
            }
            if app.destination >= n {
                return bad(format!("app {a}: destination {} not a node", app.destination));
            }
            if app.packet_size.len() != app.chain_len + 1 {
                return bad(format!(
                    "app {a}: {} packet sizes for chain_len {}",
                    app.packet_size.len(),
                    app.chain_len
                ));
            }
            if app.packet_size.iter().any(|&l| !(l.is_finite() && l >= 0.0)) {
                return bad(format!("app {a}: packet sizes must be finite and >= 0"));
            }
            for (&i, &r) in &app.input_rate {
                if i >= n || !(r.is_finite() && r >= 0.0) {
                    return bad(format!("app {a}: bad input rate {r} at node {i}"));
                }
            }
            if app.sources().next().is_none() {
                return bad(format!("app {a}: no source with positive rate"));
            }
            if app.comp_weight.len() != n || app.comp_weight.iter().any(|w| w.len() != app.chain_len)
            {
                return bad(format!("app {a}: comp_weight must be nodes x chain_len"));
            }
            for (i, ws) in app.comp_weight.iter().enumerate() {
                for &w in ws {
                    if w.is_nan() || w < 0.0 {
                        return bad(format!("app {a}: bad computational weight at node {i}"));
                    }
                    if w.is_finite() && self.costs.node[i].is_none() {
                        return bad(format!(
                            "app {a}: node {i} has a finite weight but no CPU cost"
                        ));
                    }
                }
            }
            let reach = crate::layered::reaches_target(self, a);
            for k in 0..=app.chain_len {
                if let Some(i) = (0..n).find(|&i| !reach[k][i]) {
                    return bad(format!(
                        "app {a}: node {i} at stage {k} cannot finish the chain and reach the destination"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage(&self, s: usize) -> Stage {
        self.stages[s]
    }

    pub fn stage_index(&self, app: usize, k: usize) -> usize {
        self.stage_offset[app] + k
    }

    /// Application owning stage `s`.
    pub fn app_of(&self, s: usize) -> &Application {
        &self.apps[self.stages[s].app]
    }

    pub fn is_final(&self, s: usize) -> bool {
        let st = self.stages[s];
        st.k == self.apps[st.app].chain_len
    }

    /// Required row sum: 0 for the destination's final stage, 1 elsewhere.
    pub fn row_target(&self, s: usize, i: usize) -> f64 {
        if self.is_final(s) && self.app_of(s).destination == i {
            0.0
        } else {
            1.0
        }
    }

    pub fn packet_size(&self, s: usize) -> f64 {
        let st = self.stages[s];
        self.apps[st.app].packet_size[st.k]
    }

    /// Workload per packet when stage `s` is processed at `i`.
    pub fn weight(&self, s: usize, i: usize) -> f64 {
        let st = self.stages[s];
        self.apps[st.app].weight(i, st.k)
    }

    /// Number of directions in node `i`'s row (the CPU plus out-links).
    pub fn row_len(&self, i: usize) -> usize {
        1 + self.graph.out_degree(i)
    }

    pub fn dir(&self, i: usize, slot: usize) -> Dir {
        if slot == 0 {
            Dir::Cpu
        } else {
            Dir::Link(self.graph.out_edges(i)[slot - 1])
        }
    }

    /// Slot of the link `i -> j` in `i`'s row.
    pub fn link_slot(&self, i: usize, j: usize) -> Option<usize> {
        let e = self.graph.find(i, j)?;
        self.graph
            .out_edges(i)
            .iter()
            .position(|&x| x == e)
            .map(|p| p + 1)
    }

    pub fn app_index(&self, id: usize) -> Option<usize> {
        self.apps.iter().position(|a| a.id == id)
    }

    /// Copy with every input rate multiplied by `scale`.
    pub fn with_rate_scale(&self, scale: f64) -> Result<Self> {
        let mut apps = self.apps.clone();
        for app in &mut apps {
            for r in app.input_rate.values_mut() {
                *r *= scale;
            }
        }
        Self::new(self.graph.clone(), apps, self.costs.clone())
    }

    pub fn to_dot(&self) -> String {
        self.graph.to_dot(|e| match self.costs.link[e] {
            CostFn::Linear { slope } => format!("lin {slope}"),
            CostFn::Queue { mu } => format!("mu {mu}"),
        })
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile::from(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)?;
        file.into_instance()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// On-disk instance layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub nodes: usize,
    pub edges: Vec<EdgeSpec>,
    /// Nodes not listed have no CPU.
    pub node_costs: Vec<NodeCostSpec>,
    pub applications: Vec<AppSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub link: [usize; 2],
    pub cost: CostFn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeCostSpec {
    pub node: usize,
    pub cost: CostFn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppSpec {
    pub id: usize,
    pub chain_len: usize,
    pub destination: usize,
    pub packet_sizes: Vec<f64>,
    pub input_rates: BTreeMap<usize, f64>,
    #[serde(default)]
    pub comp_weights: WeightSpec,
}

/// Computational weights: a default for every CPU-equipped node plus
/// per-(node, task) overrides. `null` means the task cannot run there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSpec {
    pub default: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<WeightOverride>,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            default: Some(1.0),
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightOverride {
    pub node: usize,
    pub k: usize,
    pub weight: Option<f64>,
}

fn finite_or_none(w: f64) -> Option<f64> {
    w.is_finite().then_some(w)
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        let g = &inst.graph;
        let edges = g
            .edges()
            .iter()
            .zip(&inst.costs.link)
            .map(|(&(i, j), &cost)| EdgeSpec { link: [i, j], cost })
            .collect();
        let node_costs = inst
            .costs
            .node
            .iter()
            .enumerate()
            .filter_map(|(node, c)| c.map(|cost| NodeCostSpec { node, cost }))
            .collect();
        let applications = inst
            .apps
            .iter()
            .map(|app| {
                // most common finite weight among CPU nodes becomes the default
                let mut counts: Vec<(f64, usize)> = Vec::new();
                for (i, ws) in app.comp_weight.iter().enumerate() {
                    if inst.costs.node[i].is_none() {
                        continue;
                    }
                    for &w in ws {
                        match counts.iter_mut().find(|(v, _)| v.to_bits() == w.to_bits()) {
                            Some(c) => c.1 += 1,
                            None => counts.push((w, 1)),
                        }
                    }
                }
                let default = counts
                    .iter()
                    .fold(None::<(f64, usize)>, |best, &(v, c)| match best {
                        Some((_, bc)) if bc >= c => best,
                        _ => Some((v, c)),
                    })
                    .map(|(v, _)| v)
                    .unwrap_or(f64::INFINITY);
                let mut overrides = Vec::new();
                for (i, ws) in app.comp_weight.iter().enumerate() {
                    if inst.costs.node[i].is_none() {
                        continue;
                    }
                    for (k, &w) in ws.iter().enumerate() {
                        if w.to_bits() != default.to_bits() {
                            overrides.push(WeightOverride {
                                node: i,
                                k,
                                weight: finite_or_none(w),
                            });
                        }
                    }
                }
                AppSpec {
                    id: app.id,
                    chain_len: app.chain_len,
                    destination: app.destination,
                    packet_sizes: app.packet_size.clone(),
                    input_rates: app.input_rate.clone(),
                    comp_weights: WeightSpec {
                        default: finite_or_none(default),
                        overrides,
                    },
                }
            })
            .collect();
        InstanceFile {
            nodes: g.node_count(),
            edges,
            node_costs,
            applications,
        }
    }
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance> {
        let n = self.nodes;
        let graph = NetworkGraph::new(n, self.edges.iter().map(|e| (e.link[0], e.link[1])).collect())?;
        let mut node = vec![None; n];
        for nc in &self.node_costs {
            if nc.node >= n {
                return Err(Error::InvalidInstance(format!(
                    "node cost for unknown node {}",
                    nc.node
                )));
            }
            node[nc.node] = Some(nc.cost);
        }
        let costs = CostModel {
            link: self.edges.iter().map(|e| e.cost).collect(),
            node,
        };
        let mut apps = Vec::with_capacity(self.applications.len());
        for spec in self.applications {
            let default = spec.comp_weights.default.unwrap_or(f64::INFINITY);
            let mut comp_weight: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let w = if costs.node[i].is_some() { default } else { f64::INFINITY };
                    vec![w; spec.chain_len]
                })
                .collect();
            for o in &spec.comp_weights.overrides {
                if o.node >= n || o.k >= spec.chain_len {
                    return Err(Error::InvalidInstance(format!(
                        "weight override ({}, {}) out of range",
                        o.node, o.k
                    )));
                }
                comp_weight[o.node][o.k] = o.weight.unwrap_or(f64::INFINITY);
            }
            apps.push(Application {
                id: spec.id,
                chain_len: spec.chain_len,
                destination: spec.destination,
                packet_size: spec.packet_sizes,
                input_rate: spec.input_rates,
                comp_weight,
            });
        }
        Instance::new(graph, apps, costs)
    }
}

/// Convenience constructor. Nodes without a CPU cost automatically get
/// infinite computational weights.
#[derive(Debug, Clone)]
pub struct InstanceBuilder {
    n: usize,
    edges: Vec<(usize, usize)>,
    link: Vec<CostFn>,
    node: Vec<Option<CostFn>>,
    apps: Vec<Application>,
}

impl InstanceBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: Vec::new(),
            link: Vec::new(),
            node: vec![None; n],
            apps: Vec::new(),
        }
    }

    pub fn link(mut self, i: usize, j: usize, cost: CostFn) -> Self {
        self.edges.push((i, j));
        self.link.push(cost);
        self
    }

    pub fn bilink(self, i: usize, j: usize, cost: CostFn) -> Self {
        self.link(i, j, cost).link(j, i, cost)
    }

    pub fn cpu(mut self, i: usize, cost: CostFn) -> Self {
        self.node[i] = Some(cost);
        self
    }

    pub fn cpus(mut self, cost: CostFn) -> Self {
        self.node = vec![Some(cost); self.n];
        self
    }

    pub fn app(mut self, app: Application) -> Self {
        self.apps.push(app);
        self
    }

    pub fn build(self) -> Result<Instance> {
        let graph = NetworkGraph::new(self.n, self.edges)?;
        let mut apps = self.apps;
        for app in &mut apps {
            for (i, ws) in app.comp_weight.iter_mut().enumerate() {
                if self.node.get(i).is_none_or(|c| c.is_none()) {
                    ws.iter_mut().for_each(|w| *w = f64::INFINITY);
                }
            }
        }
        Instance::new(
            graph,
            apps,
            CostModel {
                link: self.link,
                node: self.node,
            },
        )
    }
}
