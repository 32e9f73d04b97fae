use std::collections::HashMap;

use crate::error::{Error, Result};

/// Directed network graph. Nodes are `0..node_count`, edges are identified by
/// their position in the edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    // position of each edge in its tail's out list
    out_pos: Vec<usize>,
    index: HashMap<(usize, usize), usize>,
}

impl NetworkGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInstance("graph has no nodes".into()));
        }
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        let mut out_pos = Vec::with_capacity(edges.len());
        let mut index = HashMap::with_capacity(edges.len());
        for (e, &(i, j)) in edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::InvalidInstance(format!(
                    "edge ({i},{j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                return Err(Error::InvalidInstance(format!("self-loop at node {i}")));
            }
            if index.insert((i, j), e).is_some() {
                return Err(Error::InvalidInstance(format!("duplicate edge ({i},{j})")));
            }
            out_pos.push(out_edges[i].len());
            out_edges[i].push(e);
            in_edges[j].push(e);
        }
        Ok(Self {
            n,
            edges,
            out_edges,
            in_edges,
            out_pos,
            index,
        })
    }

    /// Builds a graph with both directions of every listed pair.
    pub fn bidirectional(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = pairs.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
        Self::new(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        self.index.get(&(i, j)).copied()
    }

    /// Edge ids leaving `i`, in edge-list order.
    pub fn out_edges(&self, i: usize) -> &[usize] {
        &self.out_edges[i]
    }

    /// Row slot of edge `e` in its tail's strategy row (slot 0 is the CPU).
    pub fn slot_of(&self, e: usize) -> usize {
        self.out_pos[e] + 1
    }

    pub fn in_edges(&self, i: usize) -> &[usize] {
        &self.in_edges[i]
    }

    pub fn out_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.out_edges[i].iter().map(move |&e| self.edges[e].1)
    }

    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.in_edges[i].iter().map(move |&e| self.edges[e].0)
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_edges[i].len()
    }

    /// Nodes reachable from `src` following edge direction.
    pub fn reachable_from(&self, src: usize) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut stack = vec![src];
        seen[src] = true;
        while let Some(u) = stack.pop() {
            for v in self.out_neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    /// Graphviz rendering of the topology.
    pub fn to_dot(&self, labels: impl Fn(usize) -> String) -> String {
        let mut s = String::from("digraph network {\n");
        for i in 0..self.n {
            s.push_str(&format!("  {i};\n"));
        }
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            s.push_str(&format!("  {i} -> {j} [label=\"{}\"];\n", labels(e)));
        }
        s.push_str("}\n");
        s
    }
}
