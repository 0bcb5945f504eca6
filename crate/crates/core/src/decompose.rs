//! Path decomposition of an edge flow.
//!
//! Cycles are cancelled first; then the maximum-bottleneck source-to-sink
//! path is extracted repeatedly, breaking ties by the lexicographically
//! smallest node sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowAssignment;
use crate::graph::{Amount, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowPath {
    pub nodes: Vec<NodeId>,
    pub value: Amount,
}

impl fmt::Display for FlowPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hops: Vec<String> = self.nodes.iter().map(ToString::to_string).collect();
        write!(f, "{}:{}", hops.join("-"), self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlowDecomposition {
    pub paths: Vec<FlowPath>,
}

impl FlowDecomposition {
    pub fn total(&self) -> Amount {
        self.paths.iter().map(|p| p.value).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecomposeError {
    #[error("flow of {0} units left over after path extraction")]
    Leftover(Amount),
}

type Adjacency = BTreeMap<NodeId, BTreeMap<NodeId, Amount>>;

fn sub_edge(adj: &mut Adjacency, u: NodeId, v: NodeId, amount: Amount) {
    let out = adj.get_mut(&u).expect("edge present");
    let e = out.get_mut(&v).expect("edge present");
    *e -= amount;
    if *e == 0 {
        out.remove(&v);
        if out.is_empty() {
            adj.remove(&u);
        }
    }
}

/// Finds one directed cycle, visiting nodes and neighbors in ascending order.
fn find_cycle(adj: &Adjacency) -> Option<Vec<NodeId>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<NodeId, u8> = BTreeMap::new();
    for &root in adj.keys() {
        if state.get(&root).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
        let mut path: Vec<NodeId> = Vec::new();
        let succ = |v: NodeId| -> Vec<NodeId> {
            adj.get(&v)
                .map(|m| m.keys().rev().copied().collect())
                .unwrap_or_default()
        };
        state.insert(root, 1);
        path.push(root);
        stack.push((root, succ(root)));
        while let Some((_, pending)) = stack.last_mut() {
            match pending.pop() {
                Some(w) => match state.get(&w).copied().unwrap_or(0) {
                    0 => {
                        state.insert(w, 1);
                        path.push(w);
                        stack.push((w, succ(w)));
                    }
                    1 => {
                        let start = path.iter().position(|&x| x == w).unwrap();
                        return Some(path[start..].to_vec());
                    }
                    _ => {}
                },
                None => {
                    let (v, _) = stack.pop().unwrap();
                    state.insert(v, 2);
                    path.pop();
                }
            }
        }
    }
    None
}

/// Removes all flow cycles in place.
fn cancel_cycles(adj: &mut Adjacency) {
    while let Some(cycle) = find_cycle(adj) {
        let edges: Vec<(NodeId, NodeId)> = (0..cycle.len())
            .map(|i| (cycle[i], cycle[(i + 1) % cycle.len()]))
            .collect();
        let min = edges.iter().map(|&(u, v)| adj[&u][&v]).min().unwrap();
        for (u, v) in edges {
            sub_edge(adj, u, v, min);
        }
    }
}

/// Lexicographically smallest `s -> r` path using edges carrying at least
/// `threshold` units. The edge set is acyclic.
fn lex_path(adj: &Adjacency, s: NodeId, r: NodeId, threshold: Amount) -> Option<Vec<NodeId>> {
    fn dfs(
        adj: &Adjacency,
        v: NodeId,
        r: NodeId,
        threshold: Amount,
        dead: &mut BTreeSet<NodeId>,
        path: &mut Vec<NodeId>,
    ) -> bool {
        path.push(v);
        if v == r {
            return true;
        }
        if let Some(out) = adj.get(&v) {
            for (&w, &f) in out {
                if f >= threshold && !dead.contains(&w) && dfs(adj, w, r, threshold, dead, path) {
                    return true;
                }
            }
        }
        dead.insert(v);
        path.pop();
        false
    }
    let mut path = Vec::new();
    let mut dead = BTreeSet::new();
    dfs(adj, s, r, threshold, &mut dead, &mut path).then_some(path)
}

/// Splits `flow` into source-to-sink paths whose values sum to the flow's
/// value. Each extracted path has the largest achievable bottleneck.
pub fn decompose(flow: &FlowAssignment) -> Result<FlowDecomposition, DecomposeError> {
    let (s, r) = (flow.source, flow.sink);
    let mut adj: Adjacency = BTreeMap::new();
    for (u, v, f) in flow.positive_edges() {
        adj.entry(u).or_default().insert(v, f);
    }
    cancel_cycles(&mut adj);

    let mut paths = Vec::new();
    loop {
        let mut caps: Vec<Amount> = adj.values().flat_map(|m| m.values().copied()).collect();
        caps.sort_unstable_by(|a, b| b.cmp(a));
        caps.dedup();
        let found = caps
            .iter()
            .find_map(|&t| lex_path(&adj, s, r, t).map(|p| (p, t)));
        let Some((nodes, _)) = found else { break };
        let value = nodes.windows(2).map(|e| adj[&e[0]][&e[1]]).min().unwrap();
        for e in nodes.windows(2) {
            sub_edge(&mut adj, e[0], e[1], value);
        }
        paths.push(FlowPath { nodes, value });
    }
    let leftover: Amount = adj.values().flat_map(|m| m.values()).sum();
    if leftover > 0 {
        return Err(DecomposeError::Leftover(leftover));
    }
    Ok(FlowDecomposition { paths })
}
