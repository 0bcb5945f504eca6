//! Deterministic discrete-event simulator for the routing protocol.
//!
//! Events are ordered by `(deliver_at, seq)` where `seq` is a global
//! insertion counter, so ties resolve FIFO. Links are reliable and FIFO per
//! directed pair: a message is never delivered before an earlier message on
//! the same link.
//!
//! Two dispatchers are provided. The sequential one pops one event at a
//! time. The sharded one pins nodes to workers by contiguous id ranges and
//! processes every event of a timestamp in parallel; outputs are merged in
//! the order of the triggering events' `seq`, which reproduces the
//! sequential schedule exactly because latencies are at least one time unit
//! and nodes only mutate their own state.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Amount, ChannelGraph, NodeId};
use crate::protocol::{
    extract_outcome, init_instance, Envelope, Instance, Label, NodeState, ProtocolError,
    ProtocolMessage, RoutingOutcome, RunMetrics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatencyModel {
    Constant(u64),
    /// Inclusive integer range, drawn from the run's seeded generator.
    Uniform { lo: u64, hi: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid latency `{0}`: expected const:<d> or uniform:<lo>:<hi> with 0 < lo <= hi")]
pub struct LatencyParseError(String);

impl LatencyModel {
    pub fn validate(&self) -> bool {
        match *self {
            LatencyModel::Constant(d) => d > 0,
            LatencyModel::Uniform { lo, hi } => lo > 0 && lo <= hi,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match *self {
            LatencyModel::Constant(d) => d,
            LatencyModel::Uniform { lo, hi } => rng.gen_range(lo..=hi),
        }
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Constant(1)
    }
}

impl FromStr for LatencyModel {
    type Err = LatencyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || LatencyParseError(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let model = match parts.as_slice() {
            ["const", d] => LatencyModel::Constant(d.parse().map_err(|_| err())?),
            ["uniform", lo, hi] => LatencyModel::Uniform {
                lo: lo.parse().map_err(|_| err())?,
                hi: hi.parse().map_err(|_| err())?,
            },
            _ => return Err(err()),
        };
        if model.validate() {
            Ok(model)
        } else {
            Err(err())
        }
    }
}

impl fmt::Display for LatencyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatencyModel::Constant(d) => write!(f, "const:{d}"),
            LatencyModel::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dispatcher {
    Sequential,
    Sharded { workers: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub latency: LatencyModel,
    /// Event cap; `None` means `50 (n+2)^2 (m+2)`.
    pub max_events: Option<u64>,
    /// Check capacity and label bounds after every event.
    pub check_invariants: bool,
    pub record_trace: bool,
    pub dispatcher: Dispatcher,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            latency: LatencyModel::default(),
            max_events: None,
            check_invariants: true,
            record_trace: false,
            dispatcher: Dispatcher::Sequential,
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        SimConfig {
            seed,
            ..SimConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Activate(NodeId),
    Deliver(Envelope),
}

impl EventKind {
    fn target(&self) -> NodeId {
        match self {
            EventKind::Activate(v) => *v,
            EventKind::Deliver(env) => env.to,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub deliver_at: u64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (deliver_at, seq).
        (other.deliver_at, other.seq).cmp(&(self.deliver_at, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One delivered message, rendered as
/// `t=<time> <event> <from> <to> δ=<v> d_from=<x> d_to=<y>`.
///
/// `d_from` is the label carried by the message and `d_to` the receiver's
/// label at delivery, before the message is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: u64,
    pub event: &'static str,
    pub from: NodeId,
    pub to: NodeId,
    pub delta: Amount,
    pub d_from: Label,
    pub d_to: Label,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} {} {} {} δ={} d_from={} d_to={}",
            self.time, self.event, self.from, self.to, self.delta, self.d_from, self.d_to
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialRun {
    pub events: u64,
    pub messages_sent: u64,
    pub now: u64,
    pub delivered_so_far: Amount,
    pub returned_so_far: Amount,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("event budget of {budget} exhausted")]
    EventBudgetExhausted { budget: u64, partial: Box<PartialRun> },
}

/// Output of processing a single event at its target node.
struct Processed {
    seq: u64,
    from: NodeId,
    out: Vec<(NodeId, ProtocolMessage)>,
    trace: Option<TraceRecord>,
}

fn process_event(
    state: &mut NodeState,
    ev: &Event,
    label_bound: Label,
    check: bool,
) -> Result<Processed, ProtocolError> {
    let (out, trace) = match ev.kind {
        EventKind::Activate(_) => (state.on_activate()?, None),
        EventKind::Deliver(env) => {
            let rec = TraceRecord {
                time: ev.deliver_at,
                event: env.msg.kind(),
                from: env.from,
                to: env.to,
                delta: env.msg.delta(),
                d_from: env.msg.carried_label(),
                d_to: state.label,
            };
            if let ProtocolMessage::PushRequest { sender_label, .. } = env.msg {
                debug_assert!(sender_label > 0, "pushes always go downhill from a positive label");
            }
            (state.handle(env.from, env.msg)?, Some(rec))
        }
    };
    if check {
        state.check_invariants(label_bound)?;
    }
    Ok(Processed {
        seq: ev.seq,
        from: state.id,
        out,
        trace,
    })
}

/// A single routing instance being simulated.
pub struct Simulation {
    inst: Instance,
    states: Vec<NodeState>,
    queue: BinaryHeap<Event>,
    next_seq: u64,
    now: u64,
    rng: ChaCha8Rng,
    link_clock: HashMap<(NodeId, NodeId), u64>,
    metrics: RunMetrics,
    budget: u64,
    cfg: SimConfig,
    trace: Vec<TraceRecord>,
}

impl Simulation {
    pub fn new(
        g: &ChannelGraph,
        s: NodeId,
        r: NodeId,
        val: Amount,
        cfg: SimConfig,
    ) -> Result<Self, SimError> {
        let (inst, states) = init_instance(g, s, r, val)?;
        let n = g.node_count() as u64 + 2;
        let m = g.channel_count() as u64 + 2;
        let budget = cfg.max_events.unwrap_or(50 * n * n * m);
        let mut sim = Simulation {
            inst,
            states,
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            link_clock: HashMap::new(),
            metrics: RunMetrics::default(),
            budget,
            cfg,
            trace: Vec::new(),
        };
        sim.schedule(0, EventKind::Activate(s));
        Ok(sim)
    }

    fn schedule(&mut self, at: u64, kind: EventKind) {
        self.queue.push(Event {
            deliver_at: at,
            seq: self.next_seq,
            kind,
        });
        self.next_seq += 1;
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: ProtocolMessage) {
        let delay = self.cfg.latency.sample(&mut self.rng);
        let clock = self.link_clock.entry((from, to)).or_insert(0);
        let at = (self.now + delay).max(*clock);
        *clock = at;
        self.metrics.messages_sent += 1;
        self.schedule(at, EventKind::Deliver(Envelope { from, to, msg }));
    }

    fn absorb(&mut self, p: Processed) {
        if let Some(rec) = p.trace {
            if self.cfg.record_trace {
                self.trace.push(rec);
            }
        }
        for (to, msg) in p.out {
            self.send(p.from, to, msg);
        }
    }

    fn exhausted(&self) -> SimError {
        SimError::EventBudgetExhausted {
            budget: self.budget,
            partial: Box::new(PartialRun {
                events: self.metrics.events,
                messages_sent: self.metrics.messages_sent,
                now: self.now,
                delivered_so_far: self.states[self.inst.dummy_sink().index()].excess,
                returned_so_far: self.states[self.inst.dummy_source().index()].excess,
            }),
        }
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn states(&self) -> &[NodeState] {
        &self.states
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// No queued event, no push awaiting a reply and no active real node.
    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty()
            && self
                .states
                .iter()
                .all(|s| s.pending.is_empty() && !s.is_active())
    }

    /// Processes the next event. Returns `false` once the queue is empty.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let Some(ev) = self.queue.pop() else {
            return Ok(false);
        };
        if self.metrics.events >= self.budget {
            self.queue.push(ev);
            return Err(self.exhausted());
        }
        self.now = ev.deliver_at;
        self.metrics.events += 1;
        if matches!(ev.kind, EventKind::Deliver(_)) {
            self.metrics.simulated_time = self.now;
        }
        let bound = self.inst.label_bound();
        let target = ev.kind.target().index();
        let p = process_event(&mut self.states[target], &ev, bound, self.cfg.check_invariants)?;
        self.absorb(p);
        Ok(true)
    }

    /// Processes every event carrying the earliest pending timestamp, with
    /// nodes split across `workers` threads.
    pub fn step_batch(&mut self, workers: usize) -> Result<bool, SimError> {
        let Some(first) = self.queue.peek() else {
            return Ok(false);
        };
        let t = first.deliver_at;
        let mut batch = Vec::new();
        while self.queue.peek().is_some_and(|e| e.deliver_at == t) {
            batch.push(self.queue.pop().unwrap());
        }
        if self.metrics.events + batch.len() as u64 > self.budget {
            self.queue.extend(batch);
            return Err(self.exhausted());
        }
        self.now = t;
        self.metrics.events += batch.len() as u64;
        if batch.iter().any(|e| matches!(e.kind, EventKind::Deliver(_))) {
            self.metrics.simulated_time = t;
        }

        let bound = self.inst.label_bound();
        let check = self.cfg.check_invariants;
        let workers = workers.max(1);
        let chunk = self.states.len().div_ceil(workers);
        // Per worker, its events in seq order (the batch is already sorted).
        let mut per_worker: Vec<Vec<Event>> = vec![Vec::new(); workers];
        for ev in batch {
            per_worker[ev.kind.target().index() / chunk].push(ev);
        }

        let results: Vec<Result<Vec<Processed>, ProtocolError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .states
                .chunks_mut(chunk)
                .zip(per_worker.iter())
                .enumerate()
                .map(|(w, (shard, events))| {
                    let base = w * chunk;
                    scope.spawn(move || {
                        events
                            .iter()
                            .map(|ev| {
                                let local = ev.kind.target().index() - base;
                                process_event(&mut shard[local], ev, bound, check)
                            })
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });

        let mut merged = Vec::new();
        for r in results {
            merged.extend(r?);
        }
        merged.sort_by_key(|p| p.seq);
        for p in merged {
            self.absorb(p);
        }
        Ok(true)
    }

    /// Runs to quiescence and assembles the outcome.
    pub fn run_to_end(mut self) -> Result<(RoutingOutcome, Vec<TraceRecord>), SimError> {
        let start = Instant::now();
        match self.cfg.dispatcher {
            Dispatcher::Sequential => while self.step()? {},
            Dispatcher::Sharded { workers } => while self.step_batch(workers)? {},
        }
        if !self.is_quiescent() {
            return Err(ProtocolError::NotTerminated.into());
        }
        let mut outcome = extract_outcome(&self.inst, &self.states, self.metrics)?;
        outcome.wallclock = start.elapsed();
        Ok((outcome, self.trace))
    }

    /// Final node states; only meaningful once quiescent.
    pub fn into_states(self) -> Vec<NodeState> {
        self.states
    }
}

/// Routes `val` from `s` to `r` and returns the outcome.
pub fn run(
    g: &ChannelGraph,
    s: NodeId,
    r: NodeId,
    val: Amount,
    cfg: &SimConfig,
) -> Result<RoutingOutcome, SimError> {
    Simulation::new(g, s, r, val, cfg.clone())?
        .run_to_end()
        .map(|(o, _)| o)
}

/// Like [`run`], but also returns the delivery trace.
pub fn run_traced(
    g: &ChannelGraph,
    s: NodeId,
    r: NodeId,
    val: Amount,
    cfg: &SimConfig,
) -> Result<(RoutingOutcome, Vec<TraceRecord>), SimError> {
    let cfg = SimConfig {
        record_trace: true,
        ..cfg.clone()
    };
    Simulation::new(g, s, r, val, cfg)?.run_to_end()
}

pub fn render_trace(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for rec in trace {
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::example_network;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn latency_parsing() {
        assert_eq!("const:3".parse(), Ok(LatencyModel::Constant(3)));
        assert_eq!(
            "uniform:1:10".parse(),
            Ok(LatencyModel::Uniform { lo: 1, hi: 10 })
        );
        assert!("const:0".parse::<LatencyModel>().is_err());
        assert!("uniform:5:2".parse::<LatencyModel>().is_err());
        assert!("poisson:2".parse::<LatencyModel>().is_err());
        assert_eq!(LatencyModel::Uniform { lo: 2, hi: 4 }.to_string(), "uniform:2:4");
    }

    #[test]
    fn events_order_by_time_then_seq() {
        let mut heap = BinaryHeap::new();
        for (t, s) in [(2, 0), (1, 2), (1, 1), (0, 3)] {
            heap.push(Event {
                deliver_at: t,
                seq: s,
                kind: EventKind::Activate(n(0)),
            });
        }
        let order: Vec<_> = std::iter::from_fn(|| heap.pop()).map(|e| (e.deliver_at, e.seq)).collect();
        assert_eq!(order, vec![(0, 3), (1, 1), (1, 2), (2, 0)]);
    }

    #[test]
    fn example_routes_fifteen() {
        let g = example_network().graph;
        let out = run(&g, n(0), n(4), 15, &SimConfig::default()).unwrap();
        assert!(out.terminated);
        assert_eq!(out.delivered, 15);
        assert_eq!(out.returned, 0);
    }

    #[test]
    fn quiescence_tracks_progress() {
        let g = example_network().graph;
        let mut sim = Simulation::new(&g, n(0), n(4), 15, SimConfig::default()).unwrap();
        assert!(!sim.is_quiescent());
        let mut naks_seen = 0;
        while sim.step().unwrap() {
            let nak_queued = sim
                .queue
                .iter()
                .any(|e| matches!(e.kind, EventKind::Deliver(Envelope { msg: ProtocolMessage::Nak { .. }, .. })));
            if nak_queued {
                naks_seen += 1;
                assert!(!sim.is_quiescent());
            }
        }
        assert!(sim.is_quiescent());
        assert!(naks_seen > 0, "the example run rejects at least one push");
    }

    #[test]
    fn isolated_source_returns_everything() {
        let mut g = ChannelGraph::new(3);
        g.open_channel(n(1), n(2), 5, 5).unwrap();
        let out = run(&g, n(0), n(2), 9, &SimConfig::default()).unwrap();
        assert_eq!(out.delivered, 0);
        assert_eq!(out.returned, 9);
    }

    #[test]
    fn unit_payment_over_unit_channel() {
        let mut g = ChannelGraph::new(2);
        g.open_channel(n(0), n(1), 1, 0).unwrap();
        let out = run(&g, n(0), n(1), 1, &SimConfig::default()).unwrap();
        assert_eq!(out.delivered, 1);
        assert_eq!(out.flow.get(n(0), n(1)), 1);
    }

    #[test]
    fn same_seed_same_trace() {
        let g = example_network().graph;
        let cfg = SimConfig {
            seed: 11,
            latency: LatencyModel::Uniform { lo: 1, hi: 10 },
            ..SimConfig::default()
        };
        let (a, ta) = run_traced(&g, n(0), n(4), 18, &cfg).unwrap();
        let (b, tb) = run_traced(&g, n(0), n(4), 18, &cfg).unwrap();
        assert!(a.same_result(&b));
        assert_eq!(render_trace(&ta), render_trace(&tb));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let g = example_network().graph;
        let cfg = SimConfig {
            max_events: Some(3),
            ..SimConfig::default()
        };
        match run(&g, n(0), n(4), 15, &cfg) {
            Err(SimError::EventBudgetExhausted { budget: 3, partial }) => assert_eq!(partial.events, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sharded_matches_sequential() {
        let g = example_network().graph;
        for workers in [1, 2, 3, 7] {
            let seq_cfg = SimConfig {
                seed: 5,
                latency: LatencyModel::Uniform { lo: 1, hi: 4 },
                ..SimConfig::default()
            };
            let par_cfg = SimConfig {
                dispatcher: Dispatcher::Sharded { workers },
                ..seq_cfg.clone()
            };
            let (a, ta) = run_traced(&g, n(0), n(4), 17, &seq_cfg).unwrap();
            let (b, tb) = run_traced(&g, n(0), n(4), 17, &par_cfg).unwrap();
            assert!(a.same_result(&b));
            assert_eq!(ta, tb);
        }
    }
}
