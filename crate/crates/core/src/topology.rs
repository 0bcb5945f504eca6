//! Barabási–Albert preferential-attachment graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Amount, ChannelGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BAConfig {
    pub n: usize,
    /// Channels opened by every node that joins after the initial core.
    pub m_attach: usize,
    /// Inclusive range each directional capacity is drawn from.
    pub cap_range: (Amount, Amount),
    pub seed: u64,
}

impl Default for BAConfig {
    fn default() -> Self {
        BAConfig {
            n: 50,
            m_attach: 2,
            cap_range: (20, 100),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Builds a connected preferential-attachment graph.
///
/// The first `m_attach` nodes form a complete core; every later node opens
/// `m_attach` channels to distinct existing nodes chosen with probability
/// proportional to their degree. The result has
/// `(n - m) m + m (m - 1) / 2` channels. Each channel direction gets an
/// independent uniform capacity from `cap_range`.
pub fn generate_ba(cfg: &BAConfig) -> Result<ChannelGraph, TopologyError> {
    let m = cfg.m_attach;
    if m == 0 {
        return Err(TopologyError::InvalidConfig("m_attach must be at least 1".into()));
    }
    if cfg.n < m + 1 {
        return Err(TopologyError::InvalidConfig(format!(
            "need n >= m_attach + 1, got n = {} and m_attach = {m}",
            cfg.n
        )));
    }
    let (lo, hi) = cfg.cap_range;
    if lo > hi {
        return Err(TopologyError::InvalidConfig(format!("empty capacity range [{lo}, {hi}]")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut g = ChannelGraph::new(cfg.n);
    // Every channel endpoint appears once here, so uniform draws from it are
    // degree-proportional.
    let mut endpoints: Vec<NodeId> = Vec::with_capacity(2 * m * cfg.n);
    let connect = |g: &mut ChannelGraph, endpoints: &mut Vec<NodeId>, rng: &mut ChaCha8Rng, u: NodeId, v: NodeId| {
        let a = rng.gen_range(lo..=hi);
        let b = rng.gen_range(lo..=hi);
        g.open_channel(u, v, a, b).expect("fresh pair");
        endpoints.push(u);
        endpoints.push(v);
    };

    for i in 0..m {
        for j in (i + 1)..m {
            connect(&mut g, &mut endpoints, &mut rng, NodeId::from(i), NodeId::from(j));
        }
    }
    for v in m..cfg.n {
        let mut targets: Vec<NodeId> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = if endpoints.is_empty() {
                NodeId::from(rng.gen_range(0..v))
            } else {
                endpoints[rng.gen_range(0..endpoints.len())]
            };
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            connect(&mut g, &mut endpoints, &mut rng, NodeId::from(v), t);
        }
    }
    Ok(g)
}

/// Whether every node can reach every other over channels, ignoring
/// capacities.
pub fn is_connected(g: &ChannelGraph) -> bool {
    let n = g.node_count();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![NodeId(0)];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &w in g.neighbors(v) {
            if !seen[w.index()] {
                seen[w.index()] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{serialize_network, Network};

    #[test]
    fn fifty_nodes_two_attach() {
        let g = generate_ba(&BAConfig {
            n: 50,
            m_attach: 2,
            seed: 3,
            ..BAConfig::default()
        })
        .unwrap();
        assert_eq!(g.node_count(), 50);
        assert_eq!(g.channel_count(), 97);
        assert!(is_connected(&g));
        for ch in g.channels() {
            assert!((20..=100).contains(&ch.cap_forward));
            assert!((20..=100).contains(&ch.cap_backward));
        }
    }

    #[test]
    fn base_case_is_complete() {
        for m in 1..5 {
            let g = generate_ba(&BAConfig {
                n: m + 1,
                m_attach: m,
                ..BAConfig::default()
            })
            .unwrap();
            assert_eq!(g.channel_count(), (m + 1) * m / 2);
            assert!(g.nodes().all(|v| g.degree(v) == m));
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = |n, m_attach, cap_range| {
            generate_ba(&BAConfig {
                n,
                m_attach,
                cap_range,
                seed: 0,
            })
            .is_err()
        };
        assert!(bad(1, 2, (20, 100)));
        assert!(bad(2, 2, (20, 100)));
        assert!(bad(10, 0, (20, 100)));
        assert!(bad(10, 2, (100, 20)));
    }

    #[test]
    fn seeded_determinism() {
        let cfg = BAConfig {
            n: 200,
            seed: 99,
            ..BAConfig::default()
        };
        let a = serialize_network(&Network::new(generate_ba(&cfg).unwrap()));
        let b = serialize_network(&Network::new(generate_ba(&cfg).unwrap()));
        assert_eq!(a, b);
        let c = serialize_network(&Network::new(
            generate_ba(&BAConfig { seed: 100, ..cfg }).unwrap(),
        ));
        assert_ne!(a, c);
    }

    #[test]
    fn degrees_are_heavy_tailed() {
        for seed in 0..10 {
            let g = generate_ba(&BAConfig {
                n: 200,
                seed,
                ..BAConfig::default()
            })
            .unwrap();
            assert!(is_connected(&g));
            let mut deg: Vec<usize> = g.nodes().map(|v| g.degree(v)).collect();
            deg.sort_unstable();
            let median = deg[deg.len() / 2];
            let max = *deg.last().unwrap();
            assert!(max >= 3 * median, "seed {seed}: max {max}, median {median}");
        }
    }
}
