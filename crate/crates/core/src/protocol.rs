//! Per-node state machines of the distributed push-relabel routing protocol.
//!
//! Every node owns its label, its excess and a ledger entry per incident
//! edge. Nodes interact only through [`ProtocolMessage`]s:
//!
//! * an active node applies a push optimistically and sends `PushRequest`;
//! * the receiver accepts iff its own label is strictly below the sender's
//!   label, otherwise it answers `Nak` with its current label;
//! * on `Nak` the sender rolls the push back exactly and refreshes its cached
//!   label of the receiver;
//! * a node with excess and no eligible neighbor relabels to one more than
//!   the smallest cached label across its residual edges and broadcasts a
//!   `LabelUpdate`.
//!
//! The routed amount enters through a virtual dummy source `s'` attached to
//! `s` and leaves through a virtual dummy sink `r'` attached to `r`. Neither
//! dummy ever initiates a push. Whatever cannot reach `r'` eventually drains
//! back into `s'`.
//!
//! A node scans its neighbors only while it has no push in flight, so at
//! most one push is outstanding per directed edge and a node never relabels
//! against its own optimistic ledger.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowAssignment;
use crate::graph::{Amount, ChannelGraph, NodeId};

pub type Label = u32;

/// Globally unique push identifier: the sender plus a sender-local counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId {
    pub origin: NodeId,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolMessage {
    PushRequest {
        id: RequestId,
        delta: Amount,
        sender_label: Label,
    },
    Accept {
        id: RequestId,
        delta: Amount,
        responder_label: Label,
    },
    Nak {
        id: RequestId,
        delta: Amount,
        responder_label: Label,
    },
    LabelUpdate {
        new_label: Label,
    },
}

impl ProtocolMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::PushRequest { .. } => "push_request",
            ProtocolMessage::Accept { .. } => "accept",
            ProtocolMessage::Nak { .. } => "nak",
            ProtocolMessage::LabelUpdate { .. } => "label_update",
        }
    }

    pub fn delta(&self) -> Amount {
        match *self {
            ProtocolMessage::PushRequest { delta, .. }
            | ProtocolMessage::Accept { delta, .. }
            | ProtocolMessage::Nak { delta, .. } => delta,
            ProtocolMessage::LabelUpdate { .. } => 0,
        }
    }

    /// Label of the sending node as carried in the message.
    pub fn carried_label(&self) -> Label {
        match *self {
            ProtocolMessage::PushRequest { sender_label, .. } => sender_label,
            ProtocolMessage::Accept { responder_label, .. }
            | ProtocolMessage::Nak { responder_label, .. } => responder_label,
            ProtocolMessage::LabelUpdate { new_label } => new_label,
        }
    }
}

/// A message addressed to `to`, sent by `from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub from: NodeId,
    pub to: NodeId,
    pub msg: ProtocolMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Normal,
    Source,
    Sink,
    DummySource,
    DummySink,
}

impl Role {
    pub fn is_dummy(self) -> bool {
        matches!(self, Role::DummySource | Role::DummySink)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("source and sink are the same node {0}")]
    SameSourceSink(NodeId),
    #[error("payment value must be positive")]
    ZeroValue,
    #[error("node {node} out of range for a graph of {n} nodes")]
    UnknownNode { node: NodeId, n: usize },
    #[error("node {node} has no edge to {peer}")]
    UnknownNeighbor { node: NodeId, peer: NodeId },
    #[error("node {node} got a reply for unknown request {id:?}")]
    UnknownRequestId { node: NodeId, id: RequestId },
    #[error("node {0} holds excess but has no residual edge")]
    NoResidualNeighbor(NodeId),
    #[error("routing has not terminated")]
    NotTerminated,
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
}

/// One incident edge as seen by its owner `v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub peer: NodeId,
    /// `c(v, peer)`
    pub cap_out: Amount,
    /// `c(peer, v)`
    pub cap_in: Amount,
    /// `f(v, peer)` including this node's optimistic in-flight pushes.
    pub flow: i64,
    /// Last known `d(peer)`; monotone non-decreasing.
    pub peer_label: Label,
    /// Whether a push over this edge has ever been accepted, in either
    /// direction.
    pub touched: bool,
}

impl Link {
    pub fn residual(&self) -> i64 {
        self.cap_out as i64 - self.flow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingPush {
    pub peer: NodeId,
    pub delta: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: NodeId,
    pub role: Role,
    pub label: Label,
    /// For real nodes the preflow excess. For the dummies, the total they
    /// have absorbed: delivered at `r'`, returned at `s'`.
    pub excess: Amount,
    /// Links sorted by peer id.
    pub links: Vec<Link>,
    pub pending: BTreeMap<RequestId, PendingPush>,
    pub relabels: u64,
    /// The real neighbor whose accepted push first gave this node excess.
    /// Never set for the source.
    pub upstream: Option<NodeId>,
    next_seq: u64,
    /// Real nodes have ids below this; used to skip dummies in broadcasts.
    real_nodes: usize,
}

impl NodeState {
    fn new(id: NodeId, role: Role, real_nodes: usize) -> Self {
        NodeState {
            id,
            role,
            label: 0,
            excess: 0,
            links: Vec::new(),
            pending: BTreeMap::new(),
            relabels: 0,
            upstream: None,
            next_seq: 0,
            real_nodes,
        }
    }

    fn link_index(&self, peer: NodeId) -> Option<usize> {
        self.links.binary_search_by_key(&peer, |l| l.peer).ok()
    }

    pub fn link(&self, peer: NodeId) -> Option<&Link> {
        self.link_index(peer).map(|i| &self.links[i])
    }

    /// `f(v, peer)` from this node's ledger; zero for non-neighbors.
    pub fn flow_to(&self, peer: NodeId) -> i64 {
        self.link(peer).map_or(0, |l| l.flow)
    }

    pub fn is_active(&self) -> bool {
        !self.role.is_dummy() && self.excess > 0
    }

    fn lookup(&self, peer: NodeId) -> Result<usize, ProtocolError> {
        self.link_index(peer).ok_or(ProtocolError::UnknownNeighbor {
            node: self.id,
            peer,
        })
    }

    /// Push procedure. Pushes `min(e(v), r_f(v, w))` to every neighbor with
    /// residual capacity and a cached label strictly below `d(v)`, in
    /// ascending id order. With no such neighbor the node relabels first.
    ///
    /// Inactive nodes, dummies and nodes still waiting on replies return no
    /// messages.
    pub fn on_activate(&mut self) -> Result<Vec<(NodeId, ProtocolMessage)>, ProtocolError> {
        if !self.is_active() || !self.pending.is_empty() {
            return Ok(Vec::new());
        }
        let mut out = self.scan();
        if out.is_empty() {
            let label = self.relabel()?;
            out.extend(
                self.links
                    .iter()
                    .filter(|l| l.peer.index() < self.real_nodes)
                    .map(|l| (l.peer, ProtocolMessage::LabelUpdate { new_label: label })),
            );
            let pushes = self.scan();
            debug_assert!(!pushes.is_empty(), "relabel always leaves an eligible neighbor");
            out.extend(pushes);
        }
        Ok(out)
    }

    fn scan(&mut self) -> Vec<(NodeId, ProtocolMessage)> {
        let mut out = Vec::new();
        for i in 0..self.links.len() {
            if self.excess == 0 {
                break;
            }
            let link = &self.links[i];
            let residual = link.residual();
            if residual <= 0 || link.peer_label >= self.label {
                continue;
            }
            let delta = self.excess.min(residual as Amount);
            let peer = link.peer;
            self.links[i].flow += delta as i64;
            self.excess -= delta;
            let id = RequestId {
                origin: self.id,
                seq: self.next_seq,
            };
            self.next_seq += 1;
            self.pending.insert(id, PendingPush { peer, delta });
            out.push((
                peer,
                ProtocolMessage::PushRequest {
                    id,
                    delta,
                    sender_label: self.label,
                },
            ));
        }
        out
    }

    /// Relabel procedure: `d(v) = 1 + min { cached d(w) : r_f(v, w) > 0 }`.
    /// The caller broadcasts the new label.
    pub fn relabel(&mut self) -> Result<Label, ProtocolError> {
        let min = self
            .links
            .iter()
            .filter(|l| l.residual() > 0)
            .map(|l| l.peer_label)
            .min()
            .ok_or(ProtocolError::NoResidualNeighbor(self.id))?;
        self.label = min + 1;
        self.relabels += 1;
        Ok(self.label)
    }

    /// Push-request procedure. Accepts iff `d(v) < d(sender)`.
    pub fn on_push_request(
        &mut self,
        from: NodeId,
        id: RequestId,
        delta: Amount,
        sender_label: Label,
    ) -> Result<ProtocolMessage, ProtocolError> {
        let i = self.lookup(from)?;
        if delta == 0 {
            return Err(ProtocolError::InvariantViolated(format!(
                "zero-valued push {id:?} from {from} to {}",
                self.id
            )));
        }
        if self.label < sender_label {
            self.links[i].flow -= delta as i64;
            self.links[i].touched = true;
            self.excess += delta;
            if self.upstream.is_none() && self.role != Role::Source && from.index() < self.real_nodes {
                self.upstream = Some(from);
            }
            Ok(ProtocolMessage::Accept {
                id,
                delta,
                responder_label: self.label,
            })
        } else {
            Ok(ProtocolMessage::Nak {
                id,
                delta,
                responder_label: self.label,
            })
        }
    }

    /// Accept commits the optimistic push; Nak rolls it back.
    pub fn on_reply(&mut self, from: NodeId, reply: ProtocolMessage) -> Result<(), ProtocolError> {
        let (id, rejected, responder_label) = match reply {
            ProtocolMessage::Accept {
                id, responder_label, ..
            } => (id, false, responder_label),
            ProtocolMessage::Nak {
                id, responder_label, ..
            } => (id, true, responder_label),
            _ => unreachable!("on_reply only takes Accept or Nak"),
        };
        let pending = self.pending.remove(&id).ok_or(ProtocolError::UnknownRequestId {
            node: self.id,
            id,
        })?;
        if pending.peer != from {
            return Err(ProtocolError::UnknownRequestId { node: self.id, id });
        }
        let i = self.lookup(from)?;
        let link = &mut self.links[i];
        link.peer_label = link.peer_label.max(responder_label);
        if rejected {
            link.flow -= pending.delta as i64;
            self.excess += pending.delta;
        } else {
            link.touched = true;
        }
        Ok(())
    }

    pub fn on_label_update(&mut self, from: NodeId, new_label: Label) -> Result<(), ProtocolError> {
        let i = self.lookup(from)?;
        let link = &mut self.links[i];
        link.peer_label = link.peer_label.max(new_label);
        Ok(())
    }

    /// Handles one delivered message and then runs the push procedure if
    /// the node became (or stayed) active with no push in flight.
    pub fn handle(
        &mut self,
        from: NodeId,
        msg: ProtocolMessage,
    ) -> Result<Vec<(NodeId, ProtocolMessage)>, ProtocolError> {
        let mut out = Vec::new();
        match msg {
            ProtocolMessage::PushRequest {
                id,
                delta,
                sender_label,
            } => out.push((from, self.on_push_request(from, id, delta, sender_label)?)),
            ProtocolMessage::Accept { .. } | ProtocolMessage::Nak { .. } => self.on_reply(from, msg)?,
            ProtocolMessage::LabelUpdate { new_label } => self.on_label_update(from, new_label)?,
        }
        out.extend(self.on_activate()?);
        Ok(out)
    }

    /// Node-local safety checks: capacity in both directions of every edge
    /// and the label ceiling.
    pub fn check_invariants(&self, label_bound: Label) -> Result<(), ProtocolError> {
        for l in &self.links {
            if l.flow > l.cap_out as i64 || -l.flow > l.cap_in as i64 {
                return Err(ProtocolError::InvariantViolated(format!(
                    "edge {}-{} carries {} outside [-{}, {}]",
                    self.id, l.peer, l.flow, l.cap_in, l.cap_out
                )));
            }
        }
        if self.role != Role::DummySource && self.label > label_bound {
            return Err(ProtocolError::InvariantViolated(format!(
                "label {} of node {} exceeds bound {}",
                self.label, self.id, label_bound
            )));
        }
        Ok(())
    }
}

/// A routing request together with the derived dummy ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    /// Number of real nodes.
    pub n: usize,
    pub source: NodeId,
    pub sink: NodeId,
    pub value: Amount,
}

impl Instance {
    pub fn dummy_source(&self) -> NodeId {
        NodeId::from(self.n)
    }

    pub fn dummy_sink(&self) -> NodeId {
        NodeId::from(self.n + 1)
    }

    /// Initial label of the dummy source.
    pub fn source_ceiling(&self) -> Label {
        (self.n + 2) as Label
    }

    /// Ceiling any label may reach during a run: `2 (n + 2)`.
    pub fn label_bound(&self) -> Label {
        2 * (self.n + 2) as Label
    }
}

/// Builds the per-node state for routing `val` from `s` to `r`, including
/// the two dummy nodes at ids `n` and `n + 1`. On return `e(s) = val`,
/// `f(s', s) = val`, `d(s') = n + 2` and every other label, excess and flow
/// is zero.
pub fn init_instance(
    g: &ChannelGraph,
    s: NodeId,
    r: NodeId,
    val: Amount,
) -> Result<(Instance, Vec<NodeState>), ProtocolError> {
    let n = g.node_count();
    for v in [s, r] {
        if !g.contains_node(v) {
            return Err(ProtocolError::UnknownNode { node: v, n });
        }
    }
    if s == r {
        return Err(ProtocolError::SameSourceSink(s));
    }
    if val == 0 {
        return Err(ProtocolError::ZeroValue);
    }
    let inst = Instance {
        n,
        source: s,
        sink: r,
        value: val,
    };
    let (ds, dr) = (inst.dummy_source(), inst.dummy_sink());

    let mut states: Vec<NodeState> = (0..n)
        .map(|i| {
            let id = NodeId::from(i);
            let role = if id == s {
                Role::Source
            } else if id == r {
                Role::Sink
            } else {
                Role::Normal
            };
            let mut st = NodeState::new(id, role, n);
            st.links = g
                .neighbors(id)
                .iter()
                .map(|&w| Link {
                    peer: w,
                    cap_out: g.capacity(id, w),
                    cap_in: g.capacity(w, id),
                    flow: 0,
                    peer_label: 0,
                    touched: false,
                })
                .collect();
            st
        })
        .collect();

    // Dummy ids exceed every real id, so appending keeps links sorted.
    states[s.index()].links.push(Link {
        peer: ds,
        cap_out: 0,
        cap_in: val,
        flow: -(val as i64),
        peer_label: inst.source_ceiling(),
        touched: true,
    });
    states[s.index()].excess = val;
    states[r.index()].links.push(Link {
        peer: dr,
        cap_out: val,
        cap_in: 0,
        flow: 0,
        peer_label: 0,
        touched: false,
    });

    let mut dsrc = NodeState::new(ds, Role::DummySource, n);
    dsrc.label = inst.source_ceiling();
    dsrc.links.push(Link {
        peer: s,
        cap_out: val,
        cap_in: 0,
        flow: val as i64,
        peer_label: 0,
        touched: true,
    });
    let mut dsink = NodeState::new(dr, Role::DummySink, n);
    dsink.links.push(Link {
        peer: r,
        cap_out: 0,
        cap_in: val,
        flow: 0,
        peer_label: 0,
        touched: false,
    });
    states.push(dsrc);
    states.push(dsink);
    Ok((inst, states))
}

/// Counters gathered by whoever drives the state machines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub messages_sent: u64,
    pub events: u64,
    pub simulated_time: u64,
}

/// What one real node knows once routing has terminated.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NodeView {
    /// `(peer, f(v, peer))` for every real neighbor over which a push was
    /// ever accepted, in peer order. The flow may be zero or negative.
    pub touched: Vec<(NodeId, i64)>,
    pub upstream: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingOutcome {
    pub delivered: Amount,
    pub returned: Amount,
    /// Net real-edge flow; dummy edges excluded.
    pub flow: FlowAssignment,
    pub messages_sent: u64,
    pub relabels: u64,
    pub events: u64,
    /// Timestamp of the last delivered event, in simulator time units.
    pub simulated_time: u64,
    /// Host time spent in the run. Hardware dependent.
    pub wallclock: Duration,
    pub terminated: bool,
    /// Terminal local state of each real node, indexed by id.
    pub views: Vec<NodeView>,
}

impl RoutingOutcome {
    /// Everything except the host-dependent wall-clock time.
    pub fn same_result(&self, other: &RoutingOutcome) -> bool {
        self.delivered == other.delivered
            && self.returned == other.returned
            && self.flow == other.flow
            && self.messages_sent == other.messages_sent
            && self.relabels == other.relabels
            && self.events == other.events
            && self.simulated_time == other.simulated_time
            && self.terminated == other.terminated
            && self.views == other.views
    }
}

/// Assembles the outcome of a quiescent run and checks the terminal
/// invariants: zero excess at every real node, matching ledgers on both
/// ends of every edge, and `delivered + returned = val`.
pub fn extract_outcome(
    inst: &Instance,
    states: &[NodeState],
    metrics: RunMetrics,
) -> Result<RoutingOutcome, ProtocolError> {
    if states.iter().any(|s| !s.pending.is_empty() || s.is_active()) {
        return Err(ProtocolError::NotTerminated);
    }
    let mut flow = FlowAssignment::new(inst.source, inst.sink);
    for st in &states[..inst.n] {
        for l in &st.links {
            if l.peer.index() >= inst.n || l.peer < st.id {
                continue;
            }
            let mirror = states[l.peer.index()].flow_to(st.id);
            if mirror != -l.flow {
                return Err(ProtocolError::InvariantViolated(format!(
                    "ledger mismatch on {}-{}: {} vs {}",
                    st.id, l.peer, l.flow, mirror
                )));
            }
            flow.add(st.id, l.peer, l.flow);
        }
    }
    let delivered = states[inst.dummy_sink().index()].excess;
    let returned = states[inst.dummy_source().index()].excess;
    if delivered + returned != inst.value {
        return Err(ProtocolError::InvariantViolated(format!(
            "delivered {delivered} + returned {returned} != {}",
            inst.value
        )));
    }
    if flow.value() != delivered as i64 {
        return Err(ProtocolError::InvariantViolated(format!(
            "flow value {} != delivered {delivered}",
            flow.value()
        )));
    }
    Ok(RoutingOutcome {
        delivered,
        returned,
        flow,
        messages_sent: metrics.messages_sent,
        relabels: states.iter().map(|s| s.relabels).sum(),
        events: metrics.events,
        simulated_time: metrics.simulated_time,
        wallclock: Duration::ZERO,
        terminated: true,
        views: states[..inst.n]
            .iter()
            .map(|st| NodeView {
                touched: st
                    .links
                    .iter()
                    .filter(|l| l.touched && l.peer.index() < inst.n)
                    .map(|l| (l.peer, l.flow))
                    .collect(),
                upstream: st.upstream,
            })
            .collect(),
    })
}
