//! Shortest paths in the layered (node, stage) graph of one application.
//!
//! Layer `k` holds a copy of every node. A link `(i, j)` connects `(k, i)` to
//! `(k, j)`; the CPU of `i` connects `(k, i)` to `(k + 1, i)`. Every path from
//! `(0, source)` to `(chain_len, destination)` is one way to serve a packet.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::{DirectionMask, Instance};

/// Shortest-path tree towards `(chain_len, destination)`.
#[derive(Debug, Clone)]
pub struct LayeredTree {
    n: usize,
    pub dist: Vec<f64>,
    pub hops: Vec<u32>,
    /// Row slot to follow from `(k, i)`; `None` at the root or if unreachable.
    pub next: Vec<Option<usize>>,
}

impl LayeredTree {
    pub fn dist(&self, k: usize, i: usize) -> f64 {
        self.dist[k * self.n + i]
    }

    pub fn next(&self, k: usize, i: usize) -> Option<usize> {
        self.next[k * self.n + i]
    }

    /// Walks the tree from `(0, src)`, returning `(k, node, slot)` per hop.
    pub fn path(&self, inst: &Instance, src: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        let (mut k, mut i) = (0, src);
        while let Some(slot) = self.next(k, i) {
            out.push((k, i, slot));
            if slot == 0 {
                k += 1;
            } else {
                i = inst.graph.edge(inst.graph.out_edges(i)[slot - 1]).1;
            }
        }
        out
    }
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    hops: u32,
    k: usize,
    i: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.hops.cmp(&self.hops))
            .then(other.k.cmp(&self.k))
            .then(other.i.cmp(&self.i))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn better(d: f64, h: u32, cur_d: f64, cur_h: u32) -> bool {
    d < cur_d || (d == cur_d && h < cur_h)
}

/// Reverse Dijkstra from `(chain_len, destination)` of app `a`.
///
/// `link_w(k, e)` and `cpu_w(k, i)` give non-negative weights; infinite
/// weights are skipped. Ties are broken by fewer link hops, so every tree edge
/// inside a layer strictly decreases `(dist, hops)`.
pub fn reverse_tree(
    inst: &Instance,
    a: usize,
    link_w: impl Fn(usize, usize) -> f64,
    cpu_w: impl Fn(usize, usize) -> f64,
    mask: Option<&DirectionMask>,
) -> LayeredTree {
    let app = &inst.apps[a];
    let g = &inst.graph;
    let n = inst.node_count();
    let layers = app.chain_len + 1;
    let mut tree = LayeredTree {
        n,
        dist: vec![f64::INFINITY; layers * n],
        hops: vec![u32::MAX; layers * n],
        next: vec![None; layers * n],
    };
    let mut done = vec![false; layers * n];
    let root = app.chain_len * n + app.destination;
    tree.dist[root] = 0.0;
    tree.hops[root] = 0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        dist: 0.0,
        hops: 0,
        k: app.chain_len,
        i: app.destination,
    });
    let allowed = |k: usize, i: usize, slot: usize| {
        mask.is_none_or(|m| m.allows(inst.stage_index(a, k), i, slot))
    };
    while let Some(Entry { dist, hops, k, i: j }) = heap.pop() {
        let u = k * n + j;
        if done[u] {
            continue;
        }
        done[u] = true;
        for &e in g.in_edges(j) {
            let i = g.edge(e).0;
            let slot = g.slot_of(e);
            let v = k * n + i;
            if done[v] || !allowed(k, i, slot) {
                continue;
            }
            let w = link_w(k, e);
            if !w.is_finite() {
                continue;
            }
            let (d, h) = (dist + w, hops + 1);
            if better(d, h, tree.dist[v], tree.hops[v]) {
                tree.dist[v] = d;
                tree.hops[v] = h;
                tree.next[v] = Some(slot);
                heap.push(Entry { dist: d, hops: h, k, i });
            }
        }
        if k > 0 {
            let v = (k - 1) * n + j;
            if !done[v] && allowed(k - 1, j, 0) {
                let w = cpu_w(k - 1, j);
                if w.is_finite() {
                    let d = dist + w;
                    if better(d, hops, tree.dist[v], tree.hops[v]) {
                        tree.dist[v] = d;
                        tree.hops[v] = hops;
                        tree.next[v] = Some(0);
                        heap.push(Entry {
                            dist: d,
                            hops,
                            k: k - 1,
                            i: j,
                        });
                    }
                }
            }
        }
    }
    tree
}

/// `reach[k][i]`: can `(k, i)` finish the chain and reach the destination?
pub fn reaches_target(inst: &Instance, a: usize) -> Vec<Vec<bool>> {
    let app = &inst.apps[a];
    let g = &inst.graph;
    let n = inst.node_count();
    let mut reach = vec![vec![false; n]; app.chain_len + 1];
    let mut stack = vec![(app.chain_len, app.destination)];
    reach[app.chain_len][app.destination] = true;
    while let Some((k, j)) = stack.pop() {
        for i in g.in_neighbors(j) {
            if !reach[k][i] {
                reach[k][i] = true;
                stack.push((k, i));
            }
        }
        if k > 0 && !reach[k - 1][j] && app.weight(j, k - 1).is_finite() {
            reach[k - 1][j] = true;
            stack.push((k - 1, j));
        }
    }
    reach
}

/// Zero-load marginal weights: `L_k * D'_ij(0)` on links and
/// `w_i(a,k) * C'_i(0)` on CPUs.
pub fn zero_load_tree(inst: &Instance, a: usize, mask: Option<&DirectionMask>) -> LayeredTree {
    let app = &inst.apps[a];
    reverse_tree(
        inst,
        a,
        |k, e| crate::cost::weighted(app.packet_size[k], inst.costs.marginal_link(e, 0.0)),
        |k, i| {
            let w = app.weight(i, k);
            if w.is_finite() {
                crate::cost::weighted(w, inst.costs.marginal_node(i, 0.0))
            } else {
                f64::INFINITY
            }
        },
        mask,
    )
}
