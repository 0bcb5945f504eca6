//! Payment channel network model.
//!
//! A channel is stored once per unordered node pair with one capacity per
//! direction. The capacity `c(u, v)` is what `u` can currently send to `v`;
//! moving `x` units from `u` to `v` shifts `x` from `c(u, v)` to `c(v, u)`,
//! leaving the channel total unchanged.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowAssignment;

/// Channel balances and payment values. All arithmetic is exact.
pub type Amount = u64;

/// Dense node index. Real nodes of an `n`-node graph occupy `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unordered node pair key; `lo < hi` always.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelId {
    pub lo: NodeId,
    pub hi: NodeId,
}

impl ChannelId {
    pub fn new(u: NodeId, v: NodeId) -> Self {
        if u <= v {
            ChannelId { lo: u, hi: v }
        } else {
            ChannelId { lo: v, hi: u }
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    /// Capacity `lo -> hi`.
    pub cap_forward: Amount,
    /// Capacity `hi -> lo`.
    pub cap_backward: Amount,
}

impl Channel {
    /// Total escrow locked in the channel.
    pub fn total(&self) -> Amount {
        self.cap_forward + self.cap_backward
    }

    /// Capacity from `from` towards the other endpoint.
    pub fn capacity_from(&self, from: NodeId) -> Amount {
        if from == self.id.lo {
            self.cap_forward
        } else {
            self.cap_backward
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("channel {0} already exists")]
    DuplicateChannel(ChannelId),
    #[error("self-loop channel on node {0}")]
    SelfLoop(NodeId),
    #[error("negative capacity {0}")]
    NegativeCapacity(i64),
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelId),
    #[error("node {node} out of range for a graph of {n} nodes")]
    UnknownNode { node: NodeId, n: usize },
    #[error("flow {flow} on {from}->{to} exceeds capacity {capacity}")]
    CapacityViolation {
        from: NodeId,
        to: NodeId,
        flow: i64,
        capacity: Amount,
    },
}

/// Bidirected capacitated graph of accounts and channels.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChannelGraph {
    n: usize,
    channels: BTreeMap<ChannelId, Channel>,
    /// Sorted neighbor lists.
    adjacency: Vec<Vec<NodeId>>,
}

impl ChannelGraph {
    pub fn new(n: usize) -> Self {
        ChannelGraph {
            n,
            channels: BTreeMap::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).map(NodeId::from)
    }

    /// Channels in `ChannelId` order.
    pub fn channels(&self) -> impl Iterator<Item = &Channel> + '_ {
        self.channels.values()
    }

    pub fn channel(&self, id: ChannelId) -> Option<&Channel> {
        self.channels.get(&id)
    }

    /// Neighbors of `v` in ascending id order.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v.index()]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v.index()].len()
    }

    pub fn contains_node(&self, v: NodeId) -> bool {
        v.index() < self.n
    }

    pub fn check_node(&self, v: NodeId) -> Result<(), GraphError> {
        if self.contains_node(v) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode { node: v, n: self.n })
        }
    }

    pub fn open_channel(
        &mut self,
        u: NodeId,
        v: NodeId,
        cap_uv: Amount,
        cap_vu: Amount,
    ) -> Result<ChannelId, GraphError> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        let id = ChannelId::new(u, v);
        if self.channels.contains_key(&id) {
            return Err(GraphError::DuplicateChannel(id));
        }
        let (cap_forward, cap_backward) = if u == id.lo { (cap_uv, cap_vu) } else { (cap_vu, cap_uv) };
        self.channels.insert(
            id,
            Channel {
                id,
                cap_forward,
                cap_backward,
            },
        );
        for (a, b) in [(u, v), (v, u)] {
            let adj = &mut self.adjacency[a.index()];
            let pos = adj.binary_search(&b).unwrap_err();
            adj.insert(pos, b);
        }
        Ok(id)
    }

    /// Signed-capacity variant used by parsers; rejects negative inputs.
    pub fn open_channel_checked(
        &mut self,
        u: NodeId,
        v: NodeId,
        cap_uv: i64,
        cap_vu: i64,
    ) -> Result<ChannelId, GraphError> {
        for c in [cap_uv, cap_vu] {
            if c < 0 {
                return Err(GraphError::NegativeCapacity(c));
            }
        }
        self.open_channel(u, v, cap_uv as Amount, cap_vu as Amount)
    }

    /// Removes the channel and returns its final balances as
    /// `(balance of id.lo, balance of id.hi)`.
    pub fn close_channel(&mut self, id: ChannelId) -> Result<(Amount, Amount), GraphError> {
        let ch = self
            .channels
            .remove(&id)
            .ok_or(GraphError::UnknownChannel(id))?;
        for (a, b) in [(id.lo, id.hi), (id.hi, id.lo)] {
            let adj = &mut self.adjacency[a.index()];
            if let Ok(pos) = adj.binary_search(&b) {
                adj.remove(pos);
            }
        }
        Ok((ch.cap_forward, ch.cap_backward))
    }

    /// `c(v, w)`; zero for non-adjacent pairs.
    pub fn capacity(&self, v: NodeId, w: NodeId) -> Amount {
        if v == w {
            return 0;
        }
        self.channels
            .get(&ChannelId::new(v, w))
            .map_or(0, |ch| ch.capacity_from(v))
    }

    /// Sum of channel totals; conserved by `apply_flow`.
    pub fn total_escrow(&self) -> Amount {
        self.channels.values().map(Channel::total).sum()
    }

    /// Sum of capacities out of `v`.
    pub fn outgoing_capacity(&self, v: NodeId) -> Amount {
        self.neighbors(v).iter().map(|&w| self.capacity(v, w)).sum()
    }

    /// Shifts channel balances by `flow`. Fails without touching `self` if
    /// any directed flow exceeds its capacity or runs over a non-edge.
    pub fn apply_flow(&self, flow: &FlowAssignment) -> Result<ChannelGraph, GraphError> {
        let mut out = self.clone();
        for (u, v, f) in flow.entries() {
            if f == 0 {
                continue;
            }
            let id = ChannelId::new(u, v);
            let ch = match out.channels.get_mut(&id) {
                Some(ch) => ch,
                None => {
                    let (from, to, amt) = if f > 0 { (u, v, f) } else { (v, u, -f) };
                    return Err(GraphError::CapacityViolation {
                        from,
                        to,
                        flow: amt,
                        capacity: 0,
                    });
                }
            };
            // Orient to lo -> hi.
            let forward = if u == id.lo { f } else { -f };
            if forward > 0 {
                let amt = forward as Amount;
                if amt > ch.cap_forward {
                    return Err(GraphError::CapacityViolation {
                        from: id.lo,
                        to: id.hi,
                        flow: forward,
                        capacity: ch.cap_forward,
                    });
                }
                ch.cap_forward -= amt;
                ch.cap_backward += amt;
            } else {
                let amt = (-forward) as Amount;
                if amt > ch.cap_backward {
                    return Err(GraphError::CapacityViolation {
                        from: id.hi,
                        to: id.lo,
                        flow: -forward,
                        capacity: ch.cap_backward,
                    });
                }
                ch.cap_backward -= amt;
                ch.cap_forward += amt;
            }
        }
        Ok(out)
    }
}

/// `r_f(v, w) = c(v, w) - f(v, w)`. Never negative for a flow that is valid
/// against `g`.
pub fn residual(g: &ChannelGraph, f: &FlowAssignment, v: NodeId, w: NodeId) -> i64 {
    g.capacity(v, w) as i64 - f.get(v, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn open_sets_directional_capacity() {
        let mut g = ChannelGraph::new(2);
        g.open_channel(n(0), n(1), 10, 0).unwrap();
        assert_eq!(g.capacity(n(0), n(1)), 10);
        assert_eq!(g.capacity(n(1), n(0)), 0);
    }

    #[test]
    fn open_normalizes_reversed_endpoints() {
        let mut g = ChannelGraph::new(4);
        let id = g.open_channel(n(3), n(1), 5, 7).unwrap();
        assert_eq!(id, ChannelId::new(n(1), n(3)));
        assert_eq!(g.capacity(n(3), n(1)), 5);
        assert_eq!(g.capacity(n(1), n(3)), 7);
        assert_eq!(g.neighbors(n(1)), &[n(3)]);
        assert_eq!(g.neighbors(n(3)), &[n(1)]);
    }

    #[test]
    fn zero_capacity_channel_is_valid() {
        let mut g = ChannelGraph::new(2);
        assert!(g.open_channel(n(0), n(1), 0, 0).is_ok());
        assert_eq!(g.channel_count(), 1);
    }

    #[test]
    fn open_rejects_bad_input() {
        let mut g = ChannelGraph::new(3);
        assert_eq!(g.open_channel(n(1), n(1), 5, 5), Err(GraphError::SelfLoop(n(1))));
        g.open_channel(n(0), n(1), 1, 1).unwrap();
        assert_eq!(
            g.open_channel(n(1), n(0), 1, 1),
            Err(GraphError::DuplicateChannel(ChannelId::new(n(0), n(1))))
        );
        assert_eq!(
            g.open_channel_checked(n(0), n(2), -3, 1),
            Err(GraphError::NegativeCapacity(-3))
        );
        assert!(matches!(
            g.open_channel(n(0), n(9), 1, 1),
            Err(GraphError::UnknownNode { .. })
        ));
    }

    #[test]
    fn close_returns_balances() {
        let mut g = ChannelGraph::new(2);
        let id = g.open_channel(n(0), n(1), 7, 3).unwrap();
        assert_eq!(g.clone().close_channel(id), Ok((7, 3)));

        let mut f = FlowAssignment::new(n(0), n(1));
        f.add(n(0), n(1), 4);
        let mut after = g.apply_flow(&f).unwrap();
        assert_eq!(after.close_channel(id), Ok((3, 7)));
        assert!(after.neighbors(n(0)).is_empty());
    }

    #[test]
    fn close_unknown_channel() {
        let mut g = ChannelGraph::new(3);
        let id = ChannelId::new(n(0), n(2));
        assert_eq!(g.close_channel(id), Err(GraphError::UnknownChannel(id)));
    }

    #[test]
    fn residual_uses_antisymmetry() {
        let mut g = ChannelGraph::new(2);
        g.open_channel(n(0), n(1), 10, 0).unwrap();
        let mut f = FlowAssignment::new(n(0), n(1));
        assert_eq!(residual(&g, &f, n(0), n(1)), 10);
        f.add(n(0), n(1), 10);
        assert_eq!(residual(&g, &f, n(0), n(1)), 0);
        // c(A,S) = 0, f(A,S) = -10
        assert_eq!(residual(&g, &f, n(1), n(0)), 10);
    }

    #[test]
    fn non_edges_have_zero_capacity() {
        let g = ChannelGraph::new(3);
        assert_eq!(g.capacity(n(0), n(2)), 0);
        assert_eq!(g.capacity(n(1), n(1)), 0);
    }

    #[test]
    fn apply_flow_rejects_overdraft() {
        let mut g = ChannelGraph::new(3);
        g.open_channel(n(0), n(1), 5, 0).unwrap();
        let mut f = FlowAssignment::new(n(0), n(1));
        f.add(n(0), n(1), 6);
        assert!(matches!(g.apply_flow(&f), Err(GraphError::CapacityViolation { .. })));
        let mut f = FlowAssignment::new(n(0), n(2));
        f.add(n(0), n(2), 1);
        assert!(matches!(g.apply_flow(&f), Err(GraphError::CapacityViolation { capacity: 0, .. })));
    }

    #[test]
    fn apply_empty_flow_is_identity() {
        let mut g = ChannelGraph::new(3);
        g.open_channel(n(0), n(1), 5, 2).unwrap();
        g.open_channel(n(1), n(2), 1, 9).unwrap();
        let f = FlowAssignment::new(n(0), n(2));
        assert_eq!(g.apply_flow(&f).unwrap(), g);
    }
}
