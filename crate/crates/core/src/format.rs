//! Line-oriented text formats for networks and workloads.
//!
//! Network file:
//!
//! ```text
//! # comment
//! pcn <n>
//! node <id> <name>                  (optional, one per named node)
//! chan <u> <v> <cap_uv> <cap_vu>
//! ```
//!
//! Workload file: one `txn <s> <r> <val>` line per transaction.
//!
//! Blank lines and anything after `#` are ignored. Serialization emits the
//! header, then names in id order, then channels in `ChannelId` order, so a
//! parse/serialize/parse cycle is the identity.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::graph::{ChannelGraph, GraphError, NodeId};
use crate::workload::Transaction;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
    #[error("missing `pcn <n>` header")]
    MissingHeader,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

/// A channel graph plus optional human-readable node names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Network {
    pub graph: ChannelGraph,
    pub names: BTreeMap<NodeId, String>,
}

impl Network {
    pub fn new(graph: ChannelGraph) -> Self {
        Network {
            graph,
            names: BTreeMap::new(),
        }
    }

    /// Resolves a node given either its name or its numeric id.
    pub fn resolve(&self, token: &str) -> Option<NodeId> {
        if let Some((&id, _)) = self.names.iter().find(|(_, name)| name.as_str() == token) {
            return Some(id);
        }
        token
            .parse::<u32>()
            .ok()
            .map(NodeId)
            .filter(|&v| self.graph.contains_node(v))
    }

    pub fn label(&self, v: NodeId) -> String {
        self.names.get(&v).cloned().unwrap_or_else(|| v.to_string())
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn int<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T, ParseError> {
    tok.parse::<T>()
        .map_err(|_| syntax(line, format!("invalid {what} `{tok}`")))
}

pub fn parse_network(text: &str) -> Result<Network, ParseError> {
    let mut net: Option<Network> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        match (toks[0], net.as_mut()) {
            ("pcn", None) => {
                if toks.len() != 2 {
                    return Err(syntax(line, "expected `pcn <n>`"));
                }
                let n: usize = int(line, toks[1], "node count")?;
                net = Some(Network::new(ChannelGraph::new(n)));
            }
            ("pcn", Some(_)) => return Err(syntax(line, "duplicate header")),
            (_, None) => return Err(ParseError::MissingHeader),
            ("node", Some(net)) => {
                if toks.len() != 3 {
                    return Err(syntax(line, "expected `node <id> <name>`"));
                }
                let id = NodeId(int(line, toks[1], "node id")?);
                net.graph
                    .check_node(id)
                    .map_err(|source| ParseError::Graph { line, source })?;
                if toks[2].parse::<u32>().is_ok() {
                    return Err(syntax(line, "node names must not be numeric"));
                }
                if net.names.values().any(|n| n == toks[2]) {
                    return Err(syntax(line, format!("duplicate node name `{}`", toks[2])));
                }
                if net.names.insert(id, toks[2].to_string()).is_some() {
                    return Err(syntax(line, format!("node {id} named twice")));
                }
            }
            ("chan", Some(net)) => {
                if toks.len() != 5 {
                    return Err(syntax(line, "expected `chan <u> <v> <cap_uv> <cap_vu>`"));
                }
                let u = NodeId(int(line, toks[1], "node id")?);
                let v = NodeId(int(line, toks[2], "node id")?);
                let cap_uv: i64 = int(line, toks[3], "capacity")?;
                let cap_vu: i64 = int(line, toks[4], "capacity")?;
                net.graph
                    .open_channel_checked(u, v, cap_uv, cap_vu)
                    .map_err(|source| ParseError::Graph { line, source })?;
            }
            (other, Some(_)) => return Err(syntax(line, format!("unknown record `{other}`"))),
        }
    }
    net.ok_or(ParseError::MissingHeader)
}

pub fn serialize_network(net: &Network) -> String {
    let g = &net.graph;
    let mut out = String::new();
    writeln!(out, "pcn {}", g.node_count()).unwrap();
    for (id, name) in &net.names {
        writeln!(out, "node {id} {name}").unwrap();
    }
    for ch in g.channels() {
        writeln!(
            out,
            "chan {} {} {} {}",
            ch.id.lo, ch.id.hi, ch.cap_forward, ch.cap_backward
        )
        .unwrap();
    }
    out
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_network(&text)?)
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, serialize_network(net)).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_workload(text: &str) -> Result<Vec<Transaction>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = strip_comment(raw).split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks[0] != "txn" || toks.len() != 4 {
            return Err(syntax(line, "expected `txn <s> <r> <val>`"));
        }
        out.push(Transaction {
            source: NodeId(int(line, toks[1], "node id")?),
            sink: NodeId(int(line, toks[2], "node id")?),
            value: int(line, toks[3], "value")?,
        });
    }
    Ok(out)
}

pub fn serialize_workload(txns: &[Transaction]) -> String {
    let mut out = String::new();
    for t in txns {
        writeln!(out, "txn {} {} {}", t.source, t.sink, t.value).unwrap();
    }
    out
}

pub fn load_workload(path: impl AsRef<Path>) -> Result<Vec<Transaction>, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_workload(&text)?)
}

pub fn save_workload(txns: &[Transaction], path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    fs::write(path, serialize_workload(txns)).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// The five-node example network (S, A, B, C, R).
pub fn example_network() -> Network {
    let text = "\
pcn 5
node 0 S
node 1 A
node 2 B
node 3 C
node 4 R
chan 0 1 10 0
chan 0 2 10 0
chan 1 3 10 0
chan 2 3 15 0
chan 3 4 20 0
";
    parse_network(text).expect("built-in network is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_example_with_comments() {
        let net = parse_network("# header\n\npcn 3 # three\nchan 0 1 5 2\nchan 2 1 4 0\n").unwrap();
        assert_eq!(net.graph.node_count(), 3);
        assert_eq!(net.graph.capacity(NodeId(2), NodeId(1)), 4);
        assert_eq!(net.graph.capacity(NodeId(1), NodeId(2)), 0);
    }

    #[test]
    fn empty_channel_list_is_valid() {
        let net = parse_network("pcn 4\n").unwrap();
        assert_eq!(net.graph.node_count(), 4);
        assert_eq!(net.graph.channel_count(), 0);
    }

    #[test]
    fn malformed_capacity_reports_line() {
        let err = parse_network("pcn 2\n\nchan 0 1 x 3\n").unwrap_err();
        match err {
            ParseError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_network("pcn 2\nchan 0 1 -1 3\n").unwrap_err();
        assert!(matches!(
            err,
            ParseError::Graph {
                line: 2,
                source: GraphError::NegativeCapacity(-1)
            }
        ));
    }

    #[test]
    fn header_required() {
        assert!(matches!(parse_network("chan 0 1 1 1\n"), Err(ParseError::MissingHeader)));
        assert!(matches!(parse_network(""), Err(ParseError::MissingHeader)));
    }

    #[test]
    fn example_network_resolves_names() {
        let net = example_network();
        assert_eq!(net.resolve("S"), Some(NodeId(0)));
        assert_eq!(net.resolve("4"), Some(NodeId(4)));
        assert_eq!(net.resolve("Z"), None);
        assert_eq!(net.graph.channel_count(), 5);
        assert_eq!(parse_network(&serialize_network(&net)).unwrap(), net);
    }

    #[test]
    fn workload_lines() {
        let txns = parse_workload("txn 0 1 15\n# x\ntxn 3 2 10\n").unwrap();
        assert_eq!(txns.len(), 2);
        assert_eq!(serialize_workload(&txns), "txn 0 1 15\ntxn 3 2 10\n");
        assert!(parse_workload("txn 0 1\n").is_err());
    }

    proptest! {
        #[test]
        fn network_round_trip(n in 2usize..20, edges in proptest::collection::vec((0u32..20, 0u32..20, 0u64..1000, 0u64..1000), 0..40)) {
            let mut g = ChannelGraph::new(n);
            for (u, v, a, b) in edges {
                let _ = g.open_channel(NodeId(u % n as u32), NodeId(v % n as u32), a, b);
            }
            let net = Network::new(g);
            let text = serialize_network(&net);
            let back = parse_network(&text).unwrap();
            prop_assert_eq!(&back, &net);
            prop_assert_eq!(serialize_network(&back), text);
        }
    }
}
