use std::collections::BTreeMap;

/// A service chain: `chain_len` tasks applied in order to data entering at the
/// sources, with results delivered to `destination`.
#[derive(Debug, Clone, PartialEq)]
pub struct Application {
    pub id: usize,
    pub chain_len: usize,
    pub destination: usize,
    /// Packet size in bits for stages `0..=chain_len`.
    pub packet_size: Vec<f64>,
    /// Exogenous input rate (packets/sec) by node; absent means zero.
    pub input_rate: BTreeMap<usize, f64>,
    /// `comp_weight[node][k]` is the workload per packet of task `k + 1` at
    /// `node`; `f64::INFINITY` marks a node that cannot run it.
    pub comp_weight: Vec<Vec<f64>>,
}

impl Application {
    pub fn rate(&self, node: usize) -> f64 {
        self.input_rate.get(&node).copied().unwrap_or(0.0)
    }

    /// Workload of task `k + 1` at `node`. The final stage is never computed.
    pub fn weight(&self, node: usize, k: usize) -> f64 {
        if k >= self.chain_len {
            f64::INFINITY
        } else {
            self.comp_weight[node][k]
        }
    }

    pub fn sources(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.input_rate
            .iter()
            .filter(|(_, &r)| r > 0.0)
            .map(|(&i, &r)| (i, r))
    }

    pub fn total_rate(&self) -> f64 {
        self.input_rate.values().sum()
    }
}

/// Stage `(app, k)`: flow of `app` that has completed its first `k` tasks.
/// `app` is the index of the application in the instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Stage {
    pub app: usize,
    pub k: usize,
}

impl Application {
    /// Application with unit computational weights everywhere and no sources.
    /// `packet_size` has one entry per stage, so `chain_len = len - 1`.
    pub fn new(id: usize, destination: usize, packet_size: Vec<f64>, nodes: usize) -> Self {
        let chain_len = packet_size.len().saturating_sub(1);
        Self {
            id,
            chain_len,
            destination,
            packet_size,
            input_rate: BTreeMap::new(),
            comp_weight: vec![vec![1.0; chain_len]; nodes],
        }
    }

    pub fn with_rate(mut self, node: usize, rate: f64) -> Self {
        self.input_rate.insert(node, rate);
        self
    }

    pub fn with_weight(mut self, node: usize, k: usize, w: f64) -> Self {
        self.comp_weight[node][k] = w;
        self
    }
}
