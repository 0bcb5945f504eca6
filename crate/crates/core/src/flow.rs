//! Edge-level flow functions and residual arithmetic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Amount, ChannelGraph, NodeId};

/// Antisymmetric flow function `f(v, w) = -f(w, v)`.
///
/// Only one orientation is stored per pair (keyed `lo < hi`), so
/// antisymmetry holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowAssignment {
    pub source: NodeId,
    pub sink: NodeId,
    flow: BTreeMap<(NodeId, NodeId), i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowViolation {
    #[error("f({from},{to}) = {flow} exceeds c({from},{to}) = {capacity}")]
    Capacity {
        from: NodeId,
        to: NodeId,
        flow: i64,
        capacity: Amount,
    },
    #[error("node {node} has net inflow {net}")]
    Conservation { node: NodeId, net: i64 },
}

impl FlowAssignment {
    pub fn new(source: NodeId, sink: NodeId) -> Self {
        FlowAssignment {
            source,
            sink,
            flow: BTreeMap::new(),
        }
    }

    /// `f(v, w)`; zero for pairs never touched.
    pub fn get(&self, v: NodeId, w: NodeId) -> i64 {
        if v < w {
            self.flow.get(&(v, w)).copied().unwrap_or(0)
        } else {
            -self.flow.get(&(w, v)).copied().unwrap_or(0)
        }
    }

    /// `f(v, w) += delta` (and `f(w, v) -= delta`).
    pub fn add(&mut self, v: NodeId, w: NodeId, delta: i64) {
        if v == w || delta == 0 {
            return;
        }
        let (key, d) = if v < w { ((v, w), delta) } else { ((w, v), -delta) };
        let e = self.flow.entry(key).or_insert(0);
        *e += d;
        if *e == 0 {
            self.flow.remove(&key);
        }
    }

    pub fn set(&mut self, v: NodeId, w: NodeId, value: i64) {
        let cur = self.get(v, w);
        self.add(v, w, value - cur);
    }

    /// Stored pairs as `(lo, hi, f(lo, hi))`, zero entries omitted.
    pub fn entries(&self) -> impl Iterator<Item = (NodeId, NodeId, i64)> + '_ {
        self.flow.iter().map(|(&(u, v), &f)| (u, v, f))
    }

    /// Directed edges carrying strictly positive flow, in `(from, to)` order.
    pub fn positive_edges(&self) -> Vec<(NodeId, NodeId, Amount)> {
        let mut out: Vec<_> = self
            .entries()
            .map(|(u, v, f)| if f > 0 { (u, v, f as Amount) } else { (v, u, (-f) as Amount) })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_empty(&self) -> bool {
        self.flow.is_empty()
    }

    /// Net flow into `v`: `Σ_u f(u, v)`.
    pub fn net_inflow(&self, v: NodeId) -> i64 {
        self.flow
            .iter()
            .map(|(&(a, b), &f)| {
                if b == v {
                    f
                } else if a == v {
                    -f
                } else {
                    0
                }
            })
            .sum()
    }

    /// Net flow into the sink.
    pub fn value(&self) -> i64 {
        self.net_inflow(self.sink)
    }

    pub fn negated(&self) -> FlowAssignment {
        FlowAssignment {
            source: self.source,
            sink: self.sink,
            flow: self.flow.iter().map(|(&k, &f)| (k, -f)).collect(),
        }
    }

    /// Checks capacity on every directed pair and conservation at every
    /// node other than source and sink.
    pub fn validate(&self, g: &ChannelGraph) -> Result<(), FlowViolation> {
        for (u, v, f) in self.entries() {
            let (from, to, amt) = if f > 0 { (u, v, f) } else { (v, u, -f) };
            let capacity = g.capacity(from, to);
            if amt > capacity as i64 {
                return Err(FlowViolation::Capacity {
                    from,
                    to,
                    flow: amt,
                    capacity,
                });
            }
        }
        let mut net: BTreeMap<NodeId, i64> = BTreeMap::new();
        for (u, v, f) in self.entries() {
            *net.entry(v).or_insert(0) += f;
            *net.entry(u).or_insert(0) -= f;
        }
        for (node, net) in net {
            if net != 0 && node != self.source && node != self.sink {
                return Err(FlowViolation::Conservation { node, net });
            }
        }
        Ok(())
    }
}

/// Residual capacities of a graph under a flow.
#[derive(Debug, Clone)]
pub struct ResidualView<'a> {
    graph: &'a ChannelGraph,
    flow: &'a FlowAssignment,
}

impl<'a> ResidualView<'a> {
    pub fn new(graph: &'a ChannelGraph, flow: &'a FlowAssignment) -> Self {
        ResidualView { graph, flow }
    }

    pub fn residual(&self, v: NodeId, w: NodeId) -> i64 {
        self.graph.capacity(v, w) as i64 - self.flow.get(v, w)
    }

    /// Neighbors of `v` reachable over a positive residual edge.
    pub fn residual_neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.graph
            .neighbors(v)
            .iter()
            .copied()
            .filter(move |&w| self.residual(v, w) > 0)
    }

    /// Breadth-first reachability over positive residual edges.
    pub fn path_exists(&self, from: NodeId, to: NodeId) -> bool {
        let mut seen = vec![false; self.graph.node_count()];
        let mut queue = std::collections::VecDeque::new();
        seen[from.index()] = true;
        queue.push_back(from);
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            for w in self.residual_neighbors(v) {
                if !seen[w.index()] {
                    seen[w.index()] = true;
                    queue.push_back(w);
                }
            }
        }
        false
    }
}
