//! Seeded instance generators for the evaluation topologies.

mod topology;

pub use topology::{balanced_tree, connected_er, small_world, ABILENE, FOG, GEANT, LHC};

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostFn, CostModel};
use crate::error::{Error, Result};
use crate::model::{Application, Instance, NetworkGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    ConnectedEr,
    BalancedTree,
    Fog,
    Abilene,
    Lhc,
    Geant,
    SmallWorld,
}

impl Topology {
    pub const ALL: [Topology; 7] = [
        Topology::ConnectedEr,
        Topology::BalancedTree,
        Topology::Fog,
        Topology::Abilene,
        Topology::Lhc,
        Topology::Geant,
        Topology::SmallWorld,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topology::ConnectedEr => "connected-er",
            Topology::BalancedTree => "balanced-tree",
            Topology::Fog => "fog",
            Topology::Abilene => "abilene",
            Topology::Lhc => "lhc",
            Topology::Geant => "geant",
            Topology::SmallWorld => "small-world",
        }
    }

    fn fixed(self) -> Option<(usize, &'static [(usize, usize)])> {
        match self {
            Topology::Fog => Some(FOG),
            Topology::Abilene => Some(ABILENE),
            Topology::Lhc => Some(LHC),
            Topology::Geant => Some(GEANT),
            _ => None,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topology::ALL
            .into_iter()
            .find(|t| t.name() == s || (s == "sw" && *t == Topology::SmallWorld))
            .ok_or_else(|| Error::UnknownEntity(format!("topology {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    Linear,
    Queue,
}

impl CostKind {
    fn make(self, param: f64) -> CostFn {
        match self {
            CostKind::Linear => CostFn::Linear { slope: param },
            CostKind::Queue => CostFn::Queue { mu: param },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub topology: Topology,
    pub nodes: usize,
    /// Undirected links; each becomes two directed edges.
    pub links: usize,
    pub apps: usize,
    /// Data sources per application.
    pub sources: usize,
    pub link_cost: CostKind,
    /// Mean link parameter (capacity or slope); samples are uniform in
    /// `[0.5, 1.5]` times the mean.
    pub link_mean: f64,
    pub comp_cost: CostKind,
    pub comp_mean: f64,
    pub chain_len: usize,
    /// Packet size per stage; `chain_len + 1` entries.
    pub packet_sizes: Vec<f64>,
    pub rate_range: (f64, f64),
    /// Multiplies every sampled input rate.
    pub rate_scale: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// The scenario as listed in the evaluation table.
    pub fn table(topology: Topology) -> Self {
        let (nodes, links, apps, sources, link_mean, comp_mean) = match topology {
            Topology::ConnectedEr => (20, 40, 5, 3, 10.0, 12.0),
            Topology::BalancedTree => (15, 14, 5, 3, 20.0, 15.0),
            Topology::Fog => (19, 30, 5, 3, 20.0, 17.0),
            Topology::Abilene => (11, 14, 3, 3, 15.0, 10.0),
            Topology::Lhc => (16, 31, 8, 3, 15.0, 15.0),
            Topology::Geant => (22, 33, 10, 5, 20.0, 20.0),
            Topology::SmallWorld => (100, 320, 30, 8, 20.0, 20.0),
        };
        Self {
            topology,
            nodes,
            links,
            apps,
            sources,
            link_cost: CostKind::Queue,
            link_mean,
            comp_cost: CostKind::Queue,
            comp_mean,
            chain_len: 2,
            packet_sizes: vec![10.0, 5.0, 0.0],
            rate_range: (0.5, 1.5),
            rate_scale: 1.0,
            seed: 0,
        }
    }

    /// As [`table`](Self::table), with the small-world network shrunk to
    /// 30 nodes, 96 links, 9 applications and 3 sources each.
    pub fn desk(topology: Topology) -> Self {
        let mut c = Self::table(topology);
        if topology == Topology::SmallWorld {
            c.nodes = 30;
            c.links = 96;
            c.apps = 9;
            c.sources = 3;
        }
        c
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::OutOfRange(msg));
        if self.packet_sizes.len() != self.chain_len + 1 {
            return bad(format!(
                "{} packet sizes for chain length {}",
                self.packet_sizes.len(),
                self.chain_len
            ));
        }
        if self.nodes < 2 || self.apps == 0 || self.sources == 0 || self.sources >= self.nodes {
            return bad("need at least 2 nodes, 1 app and 1 to nodes-1 sources".into());
        }
        let (lo, hi) = self.rate_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) || !(self.rate_scale > 0.0) {
            return bad("rates must be positive".into());
        }
        if !(self.link_mean > 0.0 && self.comp_mean > 0.0) {
            return bad("cost means must be positive".into());
        }
        if let Some((n, l)) = self.topology.fixed() {
            if self.nodes != n || self.links != l.len() {
                return bad(format!(
                    "{} has {n} nodes and {} links",
                    self.topology,
                    l.len()
                ));
            }
        }
        Ok(())
    }
}

fn spread<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    rng.gen_range(0.5 * mean..=1.5 * mean)
}

/// Builds the instance `config` describes. The seed determines everything.
pub fn generate(config: &ScenarioConfig) -> Result<Instance> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.nodes;
    let links = match config.topology {
        Topology::ConnectedEr => connected_er(n, config.links, &mut rng)?,
        Topology::BalancedTree => {
            if config.links != n - 1 {
                return Err(Error::OutOfRange("a tree has nodes - 1 links".into()));
            }
            balanced_tree(n)
        }
        Topology::SmallWorld => small_world(n, config.links, &mut rng)?,
        fixed => fixed.fixed().expect("fixed topology").1.to_vec(),
    };
    let graph = NetworkGraph::bidirectional(n, &links)?;
    let link = (0..graph.edge_count())
        .map(|_| config.link_cost.make(spread(&mut rng, config.link_mean)))
        .collect();
    let node = (0..n)
        .map(|_| Some(config.comp_cost.make(spread(&mut rng, config.comp_mean))))
        .collect();
    let mut apps = Vec::with_capacity(config.apps);
    for id in 0..config.apps {
        let dest = rng.gen_range(0..n);
        let mut app = Application::new(id, dest, config.packet_sizes.clone(), n);
        let others: Vec<usize> = (0..n).filter(|&v| v != dest).collect();
        let mut picked: Vec<usize> = sample(&mut rng, others.len(), config.sources)
            .into_iter()
            .map(|x| others[x])
            .collect();
        picked.sort_unstable();
        for src in picked {
            let r = rng.gen_range(config.rate_range.0..=config.rate_range.1);
            app = app.with_rate(src, r * config.rate_scale);
        }
        apps.push(app);
    }
    Instance::new(graph, apps, CostModel { link, node })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Multiplies every input rate.
    RateScale,
    /// Sets the data packet size to `value * L[1]`, keeping later stages.
    L0Ratio,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rate-scale" => Ok(SweepAxis::RateScale),
            "l0-ratio" | "L0-ratio" => Ok(SweepAxis::L0Ratio),
            _ => Err(Error::UnknownEntity(format!("sweep axis {s}"))),
        }
    }
}

/// One instance per value, sharing the topology and every random draw.
pub fn sweep(config: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<Instance>> {
    values
        .iter()
        .map(|&v| {
            let mut c = config.clone();
            match axis {
                SweepAxis::RateScale => c.rate_scale = config.rate_scale * v,
                SweepAxis::L0Ratio => {
                    if c.chain_len == 0 {
                        return Err(Error::OutOfRange("L0-ratio needs a chain".into()));
                    }
                    c.packet_sizes[0] = v * c.packet_sizes[1];
                }
            }
            generate(&c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let er = ScenarioConfig::table(Topology::ConnectedEr);
        assert_eq!((er.nodes, er.links, er.apps, er.sources), (20, 40, 5, 3));
        assert_eq!((er.link_mean, er.comp_mean), (10.0, 12.0));
        let g = ScenarioConfig::table(Topology::Geant);
        assert_eq!((g.nodes, g.links, g.apps, g.sources, g.link_mean, g.comp_mean), (22, 33, 10, 5, 20.0, 20.0));
        for t in Topology::ALL {
            let inst = generate(&ScenarioConfig::table(t).with_seed(3)).unwrap();
            let c = ScenarioConfig::table(t);
            assert_eq!(inst.node_count(), c.nodes);
            assert_eq!(inst.graph.edge_count(), 2 * c.links);
            assert_eq!(inst.apps.len(), c.apps);
            assert!(inst.apps.iter().all(|a| a.sources().count() == c.sources));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let c = ScenarioConfig::desk(Topology::SmallWorld).with_seed(11);
        assert_eq!(generate(&c).unwrap().to_json(), generate(&c).unwrap().to_json());
        let other = generate(&c.clone().with_seed(12)).unwrap().to_json();
        assert_ne!(generate(&c).unwrap().to_json(), other);
    }

    #[test]
    fn sweeps_vary_only_their_axis() {
        let c = ScenarioConfig::table(Topology::Abilene).with_seed(1);
        let xs = sweep(&c, SweepAxis::RateScale, &[0.5, 1.0, 1.5, 2.0]).unwrap();
        assert_eq!(xs.len(), 4);
        assert!(xs.windows(2).all(|w| w[0].graph == w[1].graph && w[0].costs == w[1].costs));
        for (x, s) in xs.iter().zip([0.5, 1.0, 1.5, 2.0]) {
            let base = &xs[1];
            for (a, b) in x.apps.iter().zip(&base.apps) {
                for (node, r) in &a.input_rate {
                    assert!((r - s * b.input_rate[node]).abs() < 1e-12);
                }
            }
        }
        let ls = sweep(&c, SweepAxis::L0Ratio, &[1.0, 3.0]).unwrap();
        assert_eq!(ls[0].apps[0].packet_size, vec![5.0, 5.0, 0.0]);
        assert_eq!(ls[1].apps[0].packet_size, vec![15.0, 5.0, 0.0]);
        assert_eq!(ls[0].apps[0].input_rate, ls[1].apps[0].input_rate);
        assert!(sweep(&c, SweepAxis::RateScale, &[]).unwrap().is_empty());
    }
}
