//! Onion-layered flow report sent from the sink back to the source after
//! routing terminates.
//!
//! Every edge that carried an accepted push gets an ephemeral key shared by
//! its two endpoints. The sink seals, for each such neighbor `u`, the triple
//! `(u, f(u, r), k_ur)` under a key `k_sink` shared only with the source and
//! appends a random padding block. A relay `v` that receives a packet from
//! `x` prepends one layer `Enc_{k_vx}(u, f(u, v), k_uv)` per packet it sends
//! on. The source peels layers from the sink end, each layer revealing the
//! key of the next one.
//!
//! Propagation: a node's first packet is fanned out to every used neighbor
//! except the one it came from (to its upstream neighbor when there is none);
//! every later packet goes to its upstream neighbor, the node whose push first
//! gave it excess. Upstream links form a tree rooted at the source, so every
//! packet eventually arrives there, and every used edge is named in some
//! packet.
//!
//! Wire layout of a packet: `layer* padding`, outermost layer first. A layer
//! is `[tag][nonce; 16][ciphertext; 256]`; the padding block has the same
//! length as a layer.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use aes_gcm::aead::consts::U16;
use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::aes::Aes256;
use aes_gcm::{AesGcm, Nonce};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::decompose::{decompose, FlowDecomposition};
use crate::flow::FlowAssignment;
use crate::graph::{ChannelId, NodeId};
use crate::protocol::RoutingOutcome;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 16;
pub const TAG_LEN: usize = 16;
/// Ciphertext block size.
pub const BLOCK_LEN: usize = 256;
pub const PLAINTEXT_LEN: usize = BLOCK_LEN - TAG_LEN;
pub const LAYER_LEN: usize = 1 + NONCE_LEN + BLOCK_LEN;

const LAYER_TAG: u8 = 0x4c;
const MAX_PACKETS: usize = 1 << 20;

#[derive(Clone, PartialEq, Eq)]
pub struct EdgeKey(pub [u8; KEY_LEN]);

impl fmt::Debug for EdgeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("EdgeKey(..)")
    }
}

impl EdgeKey {
    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        EdgeKey(k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("layer {layer} failed authentication")]
    AuthFailure { layer: usize },
    #[error("inconsistent flow report: {0}")]
    InconsistentFlow(String),
    #[error("malformed packet: {0}")]
    Malformed(String),
    #[error("packet padding was not issued by the sink")]
    UnknownPadding,
    #[error("no key for edge {0}-{1}")]
    MissingKey(NodeId, NodeId),
    #[error("report propagation exceeded {0} packets")]
    TooManyPackets(usize),
}

/// Authenticated encryption of one layer block.
pub trait LayerCipher {
    /// Returns `plaintext.len() + TAG_LEN` bytes.
    fn seal(&self, key: &EdgeKey, nonce: &[u8; NONCE_LEN], aad: &[u8], plaintext: &[u8]) -> Vec<u8>;
    fn open(&self, key: &EdgeKey, nonce: &[u8; NONCE_LEN], aad: &[u8], ciphertext: &[u8]) -> Option<Vec<u8>>;
}

type Aes256Gcm16 = AesGcm<Aes256, U16>;

/// AES-256-GCM with 16-byte nonces.
#[derive(Debug, Clone, Copy, Default)]
pub struct AesGcmCipher;

impl LayerCipher for AesGcmCipher {
    fn seal(&self, key: &EdgeKey, nonce: &[u8; NONCE_LEN], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
        Aes256Gcm16::new_from_slice(&key.0)
            .expect("32-byte key")
            .encrypt(Nonce::<U16>::from_slice(nonce), Payload { msg: plaintext, aad })
            .expect("in-memory encryption does not fail")
    }

    fn open(&self, key: &EdgeKey, nonce: &[u8; NONCE_LEN], aad: &[u8], ciphertext: &[u8]) -> Option<Vec<u8>> {
        Aes256Gcm16::new_from_slice(&key.0)
            .expect("32-byte key")
            .decrypt(Nonce::<U16>::from_slice(nonce), Payload { msg: ciphertext, aad })
            .ok()
    }
}

/// Plaintext passthrough with a SHA-256 keyed tag. For tests only: it
/// authenticates but does not hide anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCipher;

impl IdentityCipher {
    fn tag(key: &EdgeKey, nonce: &[u8; NONCE_LEN], aad: &[u8], plaintext: &[u8]) -> [u8; TAG_LEN] {
        let mut h = Sha256::new();
        h.update(key.0);
        h.update(nonce);
        h.update(aad);
        h.update(plaintext);
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&h.finalize()[..TAG_LEN]);
        tag
    }
}

impl LayerCipher for IdentityCipher {
    fn seal(&self, key: &EdgeKey, nonce: &[u8; NONCE_LEN], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
        let mut out = plaintext.to_vec();
        out.extend_from_slice(&Self::tag(key, nonce, aad, plaintext));
        out
    }

    fn open(&self, key: &EdgeKey, nonce: &[u8; NONCE_LEN], aad: &[u8], ciphertext: &[u8]) -> Option<Vec<u8>> {
        let split = ciphertext.len().checked_sub(TAG_LEN)?;
        let (pt, tag) = ciphertext.split_at(split);
        (Self::tag(key, nonce, aad, pt) == tag).then(|| pt.to_vec())
    }
}

/// Contents of one layer: the flow `f(pred, v)` into the layer's author `v`
/// and the key `k_{pred,v}` that opens the next layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerContent {
    pub pred: NodeId,
    pub flow: i64,
    pub next_key: EdgeKey,
}

impl LayerContent {
    fn encode(&self) -> [u8; PLAINTEXT_LEN] {
        let mut pt = [0u8; PLAINTEXT_LEN];
        pt[..4].copy_from_slice(&self.pred.0.to_be_bytes());
        pt[4..12].copy_from_slice(&self.flow.to_be_bytes());
        pt[12..12 + KEY_LEN].copy_from_slice(&self.next_key.0);
        pt
    }

    fn decode(pt: &[u8]) -> Result<Self, ReportError> {
        if pt.len() != PLAINTEXT_LEN || pt[12 + KEY_LEN..].iter().any(|&b| b != 0) {
            return Err(ReportError::Malformed("bad layer plaintext".into()));
        }
        let mut key = [0u8; KEY_LEN];
        key.copy_from_slice(&pt[12..12 + KEY_LEN]);
        Ok(LayerContent {
            pred: NodeId(u32::from_be_bytes(pt[..4].try_into().unwrap())),
            flow: i64::from_be_bytes(pt[4..12].try_into().unwrap()),
            next_key: EdgeKey(key),
        })
    }
}

pub fn seal_layer<R: RngCore>(
    cipher: &dyn LayerCipher,
    key: &EdgeKey,
    content: &LayerContent,
    rng: &mut R,
) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher.seal(key, &nonce, &[LAYER_TAG], &content.encode());
    debug_assert_eq!(ct.len(), BLOCK_LEN);
    let mut layer = Vec::with_capacity(LAYER_LEN);
    layer.push(LAYER_TAG);
    layer.extend_from_slice(&nonce);
    layer.extend_from_slice(&ct);
    layer
}

/// Opens one layer. `index` is only used in the error.
pub fn open_layer(
    cipher: &dyn LayerCipher,
    key: &EdgeKey,
    layer: &[u8],
    index: usize,
) -> Result<LayerContent, ReportError> {
    if layer.len() != LAYER_LEN || layer[0] != LAYER_TAG {
        return Err(ReportError::Malformed(format!("layer {index} has a bad header")));
    }
    let nonce: [u8; NONCE_LEN] = layer[1..1 + NONCE_LEN].try_into().unwrap();
    let pt = cipher
        .open(key, &nonce, &[LAYER_TAG], &layer[1 + NONCE_LEN..])
        .ok_or(ReportError::AuthFailure { layer: index })?;
    LayerContent::decode(&pt)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReportPacket {
    pub bytes: Vec<u8>,
}

impl ReportPacket {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    fn check(&self) -> Result<(), ReportError> {
        if self.bytes.len() % LAYER_LEN != 0 || self.bytes.len() < 2 * LAYER_LEN {
            return Err(ReportError::Malformed(format!("length {}", self.bytes.len())));
        }
        Ok(())
    }

    /// Number of encrypted layers, i.e. hops from the sink.
    pub fn depth(&self) -> usize {
        (self.bytes.len() / LAYER_LEN).saturating_sub(1)
    }

    /// Layers, outermost first.
    pub fn layers(&self) -> std::slice::Chunks<'_, u8> {
        let end = self.depth() * LAYER_LEN;
        self.bytes[..end].chunks(LAYER_LEN)
    }

    pub fn padding(&self) -> &[u8] {
        &self.bytes[self.bytes.len().saturating_sub(LAYER_LEN)..]
    }

    pub fn layer_nonce(layer: &[u8]) -> [u8; NONCE_LEN] {
        layer[1..1 + NONCE_LEN].try_into().unwrap()
    }
}

/// Keys of every reported edge, one per unordered node pair.
#[derive(Debug, Clone, Default)]
pub struct EdgeKeys {
    keys: BTreeMap<ChannelId, EdgeKey>,
}

impl EdgeKeys {
    pub fn insert(&mut self, a: NodeId, b: NodeId, key: EdgeKey) {
        self.keys.insert(ChannelId::new(a, b), key);
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Result<&EdgeKey, ReportError> {
        self.keys.get(&ChannelId::new(a, b)).ok_or(ReportError::MissingKey(a, b))
    }

    /// Keys known to `v`: those of its incident edges.
    pub fn held_by(&self, v: NodeId) -> Vec<&EdgeKey> {
        self.keys
            .iter()
            .filter(|(id, _)| id.lo == v || id.hi == v)
            .map(|(_, k)| k)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub to: NodeId,
    pub packet: ReportPacket,
}

#[derive(Debug, Clone)]
pub struct SinkReport {
    pub packets: Vec<Outbound>,
    /// Padding blocks the source accepts.
    pub rm_set: Vec<Vec<u8>>,
}

/// Sink side: one packet per `(u, f(u, r))` in `preds`.
pub fn build_report<R: RngCore>(
    cipher: &dyn LayerCipher,
    sink: NodeId,
    preds: &[(NodeId, i64)],
    keys: &EdgeKeys,
    k_sink: &EdgeKey,
    rng: &mut R,
) -> Result<SinkReport, ReportError> {
    let mut packets = Vec::with_capacity(preds.len());
    let mut rm_set = Vec::with_capacity(preds.len());
    for &(u, flow) in preds {
        let content = LayerContent {
            pred: u,
            flow,
            next_key: keys.get(u, sink)?.clone(),
        };
        let mut rm = vec![0u8; LAYER_LEN];
        rng.fill_bytes(&mut rm);
        let mut bytes = seal_layer(cipher, k_sink, &content, rng);
        bytes.extend_from_slice(&rm);
        rm_set.push(rm);
        packets.push(Outbound {
            to: u,
            packet: ReportPacket { bytes },
        });
    }
    Ok(SinkReport { packets, rm_set })
}

/// Relay side: `v` got `inbound` from `from` and wraps it once per
/// `(u, f(u, v))` in `preds`.
pub fn relay_report<R: RngCore>(
    cipher: &dyn LayerCipher,
    v: NodeId,
    from: NodeId,
    inbound: &ReportPacket,
    preds: &[(NodeId, i64)],
    keys: &EdgeKeys,
    rng: &mut R,
) -> Result<Vec<Outbound>, ReportError> {
    inbound.check()?;
    let key = keys.get(v, from)?;
    preds
        .iter()
        .map(|&(u, flow)| {
            let content = LayerContent {
                pred: u,
                flow,
                next_key: keys.get(u, v)?.clone(),
            };
            let mut bytes = seal_layer(cipher, key, &content, rng);
            bytes.extend_from_slice(&inbound.bytes);
            Ok(Outbound {
                to: u,
                packet: ReportPacket { bytes },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconstructedFlow {
    pub flow: FlowAssignment,
    pub paths: FlowDecomposition,
    /// Largest number of layers in any packet.
    pub depth: usize,
    /// Distinct edges reported, zero flows included.
    pub edges_reported: usize,
}

/// Source side: peels every packet, deduplicates the edge facts and checks
/// them for agreement and conservation.
pub fn reconstruct(
    cipher: &dyn LayerCipher,
    source: NodeId,
    sink: NodeId,
    packets: &[ReportPacket],
    k_sink: &EdgeKey,
    rm_set: &[Vec<u8>],
) -> Result<ReconstructedFlow, ReportError> {
    // f(lo, hi) per unordered pair.
    let mut facts: BTreeMap<ChannelId, i64> = BTreeMap::new();
    let mut depth = 0;
    for p in packets {
        p.check()?;
        if !rm_set.iter().any(|rm| rm.as_slice() == p.padding()) {
            return Err(ReportError::UnknownPadding);
        }
        depth = depth.max(p.depth());
        let mut key = k_sink.clone();
        let mut head = sink;
        for (i, layer) in p.layers().enumerate().rev() {
            let c = open_layer(cipher, &key, layer, i)?;
            if c.pred == head {
                return Err(ReportError::InconsistentFlow(format!("self edge at {head}")));
            }
            let id = ChannelId::new(c.pred, head);
            let oriented = if id.lo == c.pred { c.flow } else { -c.flow };
            if let Some(&prev) = facts.get(&id) {
                if prev != oriented {
                    return Err(ReportError::InconsistentFlow(format!(
                        "edge {}-{} reported as {prev} and {oriented}",
                        id.lo, id.hi
                    )));
                }
            } else {
                facts.insert(id, oriented);
            }
            key = c.next_key;
            head = c.pred;
        }
    }

    let mut flow = FlowAssignment::new(source, sink);
    let mut nodes = BTreeSet::new();
    for (id, &f) in &facts {
        nodes.insert(id.lo);
        nodes.insert(id.hi);
        if f != 0 {
            flow.add(id.lo, id.hi, f);
        }
    }
    for &v in &nodes {
        if v != source && v != sink && flow.net_inflow(v) != 0 {
            return Err(ReportError::InconsistentFlow(format!(
                "node {v} has net inflow {}",
                flow.net_inflow(v)
            )));
        }
    }
    let paths = decompose(&flow).map_err(|e| ReportError::InconsistentFlow(e.to_string()))?;
    Ok(ReconstructedFlow {
        flow,
        paths,
        depth,
        edges_reported: facts.len(),
    })
}

/// One packet delivery to a node other than the source.
#[derive(Debug, Clone)]
pub struct Hop {
    pub relay: NodeId,
    pub from: NodeId,
    pub inbound: ReportPacket,
}

/// Full trace of one report propagation.
#[derive(Debug, Clone)]
pub struct ReportRun {
    pub source: NodeId,
    pub sink: NodeId,
    /// Packets that reached the source, in arrival order.
    pub arrived: Vec<ReportPacket>,
    pub hops: Vec<Hop>,
    pub k_sink: EdgeKey,
    pub rm_set: Vec<Vec<u8>>,
    pub keys: EdgeKeys,
    /// Author of every layer, by nonce.
    pub authors: HashMap<[u8; NONCE_LEN], NodeId>,
    pub packets_sent: usize,
}

impl ReportRun {
    pub fn reconstruct(&self, cipher: &dyn LayerCipher) -> Result<ReconstructedFlow, ReportError> {
        reconstruct(cipher, self.source, self.sink, &self.arrived, &self.k_sink, &self.rm_set)
    }

    pub fn depth(&self) -> usize {
        self.arrived.iter().map(ReportPacket::depth).max().unwrap_or(0)
    }

    /// Keys `v` holds: its edge keys, plus `k_sink` at the sink.
    pub fn keys_held_by(&self, v: NodeId) -> Vec<&EdgeKey> {
        let mut held = self.keys.held_by(v);
        if v == self.sink {
            held.push(&self.k_sink);
        }
        held
    }

    /// Classifies the layers of an inbound packet that the relay can open
    /// with its own keys.
    pub fn exposure(&self, cipher: &dyn LayerCipher, hop: &Hop) -> Exposure {
        let held = self.keys_held_by(hop.relay);
        let layers: Vec<&[u8]> = hop.inbound.layers().collect();
        let author = |j: usize| self.authors.get(&ReportPacket::layer_nonce(layers[j])).copied();
        let mut e = Exposure::default();
        for (j, layer) in layers.iter().enumerate() {
            if !held.iter().any(|k| open_layer(cipher, k, layer, j).is_ok()) {
                continue;
            }
            if author(j) == Some(hop.relay) {
                e.own += 1;
            } else if j + 1 < layers.len() && author(j + 1) == Some(hop.relay) {
                e.addressed += 1;
            } else {
                e.foreign += 1;
            }
        }
        e
    }
}

/// Openable layers of one inbound packet, by who wrote them: the relay
/// itself, the neighbor it handed the packet to, or anyone else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Exposure {
    pub own: usize,
    pub addressed: usize,
    pub foreign: usize,
}

/// Runs the report phase over the terminal node views of `outcome`. Packets
/// are delivered in FIFO order; keys, nonces and padding come from `seed`.
/// Nothing is sent when nothing was delivered.
pub fn propagate_report(
    cipher: &dyn LayerCipher,
    outcome: &RoutingOutcome,
    seed: u64,
) -> Result<ReportRun, ReportError> {
    let (s, r) = (outcome.flow.source, outcome.flow.sink);
    let views = &outcome.views;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut keys = EdgeKeys::default();
    for (i, view) in views.iter().enumerate() {
        let v = NodeId::from(i);
        for &(u, _) in &view.touched {
            if v < u {
                keys.insert(v, u, EdgeKey::random(&mut rng));
            }
        }
    }
    let k_sink = EdgeKey::random(&mut rng);
    let mut run = ReportRun {
        source: s,
        sink: r,
        arrived: Vec::new(),
        hops: Vec::new(),
        k_sink,
        rm_set: Vec::new(),
        keys,
        authors: HashMap::new(),
        packets_sent: 0,
    };
    if outcome.delivered == 0 || r.index() >= views.len() {
        return Ok(run);
    }

    // f(u, v) for each used neighbor u of v, optionally skipping one.
    let preds_of = |v: NodeId, skip: Option<NodeId>| -> Vec<(NodeId, i64)> {
        views[v.index()]
            .touched
            .iter()
            .filter(|&&(u, _)| Some(u) != skip)
            .map(|&(u, f)| (u, -f))
            .collect()
    };
    let upstream = |v: NodeId| -> Result<(NodeId, i64), ReportError> {
        let u = views[v.index()]
            .upstream
            .ok_or_else(|| ReportError::InconsistentFlow(format!("node {v} has no upstream neighbor")))?;
        let f = views[v.index()]
            .touched
            .iter()
            .find(|&&(p, _)| p == u)
            .map_or(0, |&(_, f)| -f);
        Ok((u, f))
    };

    let mut visited = vec![false; views.len()];
    let mut queue: VecDeque<(NodeId, NodeId, ReportPacket)> = VecDeque::new();
    let record = |run: &mut ReportRun, author: NodeId, out: Vec<Outbound>, queue: &mut VecDeque<_>| {
        for o in out {
            let first = o.packet.layers().next().expect("fresh packet has a layer");
            run.authors.insert(ReportPacket::layer_nonce(first), author);
            run.packets_sent += 1;
            queue.push_back((o.to, author, o.packet));
        }
    };

    visited[r.index()] = true;
    let sink_report = build_report(cipher, r, &preds_of(r, None), &run.keys, &run.k_sink, &mut rng)?;
    run.rm_set = sink_report.rm_set;
    record(&mut run, r, sink_report.packets, &mut queue);

    while let Some((v, from, packet)) = queue.pop_front() {
        if run.packets_sent > MAX_PACKETS {
            return Err(ReportError::TooManyPackets(MAX_PACKETS));
        }
        if v == s {
            run.arrived.push(packet.clone());
        } else {
            run.hops.push(Hop {
                relay: v,
                from,
                inbound: packet.clone(),
            });
        }
        let preds = if !visited[v.index()] {
            visited[v.index()] = true;
            let fan = preds_of(v, Some(from));
            if fan.is_empty() && v != s {
                vec![upstream(v)?]
            } else {
                fan
            }
        } else if v != s {
            vec![upstream(v)?]
        } else {
            Vec::new()
        };
        let out = relay_report(cipher, v, from, &packet, &preds, &run.keys, &mut rng)?;
        record(&mut run, v, out, &mut queue);
    }
    Ok(run)
}

/// Random padding-sized block, exposed for tests that forge packets.
pub fn random_block<R: Rng>(rng: &mut R) -> Vec<u8> {
    let mut b = vec![0u8; LAYER_LEN];
    rng.fill_bytes(&mut b);
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::example_network;
    use crate::sim::{run, SimConfig};

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn example_outcome() -> RoutingOutcome {
        run(&example_network().graph, n(0), n(4), 15, &SimConfig::default()).unwrap()
    }

    fn open_chain(cipher: &dyn LayerCipher, first_key: &EdgeKey, p: &ReportPacket) -> Vec<LayerContent> {
        let mut key = first_key.clone();
        let mut out = Vec::new();
        for (i, layer) in p.layers().enumerate().rev() {
            let c = open_layer(cipher, &key, layer, i).unwrap();
            key = c.next_key.clone();
            out.push(c);
        }
        out
    }

    #[test]
    fn ciphers_round_trip_and_authenticate() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let key = EdgeKey::random(&mut rng);
        let other = EdgeKey::random(&mut rng);
        let content = LayerContent {
            pred: n(7),
            flow: -12,
            next_key: other.clone(),
        };
        for cipher in [&AesGcmCipher as &dyn LayerCipher, &IdentityCipher] {
            let layer = seal_layer(cipher, &key, &content, &mut rng);
            assert_eq!(layer.len(), LAYER_LEN);
            assert_eq!(open_layer(cipher, &key, &layer, 0).unwrap(), content);
            assert_eq!(
                open_layer(cipher, &other, &layer, 0),
                Err(ReportError::AuthFailure { layer: 0 })
            );
        }
    }

    #[test]
    fn sink_packet_names_its_predecessor() {
        let outcome = example_outcome();
        let rep = propagate_report(&AesGcmCipher, &outcome, 3).unwrap();
        let from_sink: Vec<&Hop> = rep.hops.iter().filter(|h| h.from == n(4)).collect();
        assert_eq!(from_sink.len(), 1);
        let p = &from_sink[0].inbound;
        assert_eq!(p.depth(), 1);
        assert_eq!(p.len(), 2 * LAYER_LEN);
        let c = open_layer(&AesGcmCipher, &rep.k_sink, p.layers().next().unwrap(), 0).unwrap();
        assert_eq!((c.pred, c.flow), (n(3), 15));
        assert_eq!(&c.next_key, rep.keys.get(n(3), n(4)).unwrap());
    }

    #[test]
    fn relay_fans_out_to_its_predecessors() {
        let outcome = example_outcome();
        let rep = propagate_report(&AesGcmCipher, &outcome, 3).unwrap();
        let mut named: Vec<(NodeId, i64)> = rep
            .hops
            .iter()
            .filter(|h| h.from == n(3) && h.inbound.depth() == 2)
            .map(|h| {
                let chain = open_chain(&AesGcmCipher, &rep.k_sink, &h.inbound);
                (chain[1].pred, chain[1].flow)
            })
            .collect();
        named.sort();
        assert_eq!(named, vec![(n(1), 10), (n(2), 5)]);
    }

    #[test]
    fn reconstruction_matches_the_ledger() {
        let outcome = example_outcome();
        let rep = propagate_report(&AesGcmCipher, &outcome, 9).unwrap();
        let rec = rep.reconstruct(&AesGcmCipher).unwrap();
        assert_eq!(rec.flow, outcome.flow);
        let paths: Vec<String> = rec.paths.paths.iter().map(ToString::to_string).collect();
        assert_eq!(paths, vec!["0-1-3-4:10", "0-2-3-4:5"]);
        assert_eq!(rec.paths.total(), outcome.delivered);
        assert!(rec.depth >= 3);
    }

    #[test]
    fn wrong_sink_key_fails_authentication() {
        let rep = propagate_report(&AesGcmCipher, &example_outcome(), 9).unwrap();
        let wrong = EdgeKey([7u8; KEY_LEN]);
        let err = reconstruct(&AesGcmCipher, n(0), n(4), &rep.arrived, &wrong, &rep.rm_set).unwrap_err();
        assert!(matches!(err, ReportError::AuthFailure { .. }));
    }

    #[test]
    fn tampering_is_detected() {
        let rep = propagate_report(&AesGcmCipher, &example_outcome(), 9).unwrap();
        let mut packets = rep.arrived.clone();
        let p = &mut packets[0];
        let depth = p.depth();
        // Flip a ciphertext byte in every layer position in turn.
        for layer in 0..depth {
            let mut q = p.clone();
            q.bytes[layer * LAYER_LEN + 1 + NONCE_LEN + 5] ^= 1;
            let err = reconstruct(&AesGcmCipher, n(0), n(4), &[q], &rep.k_sink, &rep.rm_set).unwrap_err();
            assert!(matches!(err, ReportError::AuthFailure { .. }), "{err:?}");
        }
        p.bytes.truncate(p.len() - 1);
        assert!(matches!(
            reconstruct(&AesGcmCipher, n(0), n(4), &packets, &rep.k_sink, &rep.rm_set),
            Err(ReportError::Malformed(_))
        ));
    }

    #[test]
    fn foreign_padding_is_rejected() {
        let rep = propagate_report(&AesGcmCipher, &example_outcome(), 9).unwrap();
        let mut p = rep.arrived[0].clone();
        let at = p.len() - LAYER_LEN;
        p.bytes[at..].copy_from_slice(&random_block(&mut ChaCha20Rng::seed_from_u64(0)));
        assert_eq!(
            reconstruct(&AesGcmCipher, n(0), n(4), &[p], &rep.k_sink, &rep.rm_set),
            Err(ReportError::UnknownPadding)
        );
    }

    #[test]
    fn duplicate_packets_are_deduplicated() {
        let rep = propagate_report(&IdentityCipher, &example_outcome(), 2).unwrap();
        let once = rep.reconstruct(&IdentityCipher).unwrap();
        let mut twice = rep.arrived.clone();
        twice.extend(rep.arrived.iter().cloned());
        let again = reconstruct(&IdentityCipher, n(0), n(4), &twice, &rep.k_sink, &rep.rm_set).unwrap();
        assert_eq!(once, again);
    }

    #[test]
    fn conflicting_facts_are_inconsistent() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut keys = EdgeKeys::default();
        keys.insert(n(0), n(1), EdgeKey::random(&mut rng));
        let k_sink = EdgeKey::random(&mut rng);
        let a = build_report(&IdentityCipher, n(1), &[(n(0), 5)], &keys, &k_sink, &mut rng).unwrap();
        let b = build_report(&IdentityCipher, n(1), &[(n(0), 6)], &keys, &k_sink, &mut rng).unwrap();
        let packets = vec![a.packets[0].packet.clone(), b.packets[0].packet.clone()];
        let rm: Vec<Vec<u8>> = a.rm_set.into_iter().chain(b.rm_set).collect();
        assert!(matches!(
            reconstruct(&IdentityCipher, n(0), n(1), &packets, &k_sink, &rm),
            Err(ReportError::InconsistentFlow(_))
        ));
    }

    #[test]
    fn broken_conservation_is_inconsistent() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut keys = EdgeKeys::default();
        keys.insert(n(1), n(2), EdgeKey::random(&mut rng));
        let k_sink = EdgeKey::random(&mut rng);
        // Node 1 forwards 5 to the sink but nothing enters node 1.
        let rep = build_report(&IdentityCipher, n(2), &[(n(1), 5)], &keys, &k_sink, &mut rng).unwrap();
        let packets = vec![rep.packets[0].packet.clone()];
        assert!(matches!(
            reconstruct(&IdentityCipher, n(0), n(2), &packets, &k_sink, &rep.rm_set),
            Err(ReportError::InconsistentFlow(_))
        ));
    }

    #[test]
    fn packet_length_depends_only_on_depth() {
        let outcome = example_outcome();
        let a = propagate_report(&AesGcmCipher, &outcome, 1).unwrap();
        let b = propagate_report(&AesGcmCipher, &outcome, 2).unwrap();
        for rep in [&a, &b] {
            for h in &rep.hops {
                assert_eq!(h.inbound.len(), (h.inbound.depth() + 1) * LAYER_LEN);
            }
        }
        let lens = |r: &ReportRun| r.hops.iter().map(|h| h.inbound.len()).collect::<Vec<_>>();
        assert_eq!(lens(&a), lens(&b));
        assert_ne!(a.arrived, b.arrived);
    }

    #[test]
    fn relays_cannot_open_other_layers() {
        let outcome = example_outcome();
        let rep = propagate_report(&AesGcmCipher, &outcome, 6).unwrap();
        for h in &rep.hops {
            let e = rep.exposure(&AesGcmCipher, h);
            assert_eq!(e.foreign, 0, "relay {}", h.relay);
            assert!(e.addressed <= 1);
            // A packet seen for the first time exposes nothing.
            if e.own == 0 {
                assert_eq!(e.addressed, 0);
            }
        }
        let first = &rep.hops[0];
        assert_eq!(rep.exposure(&AesGcmCipher, first), Exposure::default());
    }

    #[test]
    fn nothing_is_sent_without_delivery() {
        let mut g = crate::graph::ChannelGraph::new(3);
        g.open_channel(n(0), n(1), 5, 0).unwrap();
        let outcome = run(&g, n(0), n(2), 5, &SimConfig::default()).unwrap();
        let rep = propagate_report(&AesGcmCipher, &outcome, 0).unwrap();
        assert!(rep.arrived.is_empty() && rep.hops.is_empty());
        let rec = rep.reconstruct(&AesGcmCipher).unwrap();
        assert!(rec.flow.is_empty() && rec.paths.paths.is_empty());
    }
}
