#![allow(dead_code)]

use hushrelay_core::{generate_ba, Amount, BAConfig, ChannelGraph, NodeId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Case {
    pub graph: ChannelGraph,
    pub source: NodeId,
    pub sink: NodeId,
    pub value: Amount,
}

/// BA instance with `n` in `[10, 60]`, caps `U[20, 100]`, val `U[10, 80]`.
pub fn ba_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(10..=60);
    let graph = generate_ba(&BAConfig {
        n,
        m_attach: 2,
        cap_range: (20, 100),
        seed,
    })
    .unwrap();
    let source = NodeId(rng.gen_range(0..n as u32));
    let sink = loop {
        let r = NodeId(rng.gen_range(0..n as u32));
        if r != source {
            break r;
        }
    };
    Case {
        graph,
        source,
        sink,
        value: rng.gen_range(10..=80),
    }
}

/// Arbitrary small graphs, including disconnected and one-way ones.
pub fn arb_case() -> impl Strategy<Value = Case> {
    (2usize..10)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec((0..n as u32, 0..n as u32, 0u64..40, 0u64..40), 0..25),
                0..n as u32,
                0..n as u32,
                1u64..120,
            )
        })
        .prop_filter("distinct endpoints", |(_, _, s, r, _)| s != r)
        .prop_map(|(n, edges, s, r, value)| {
            let mut graph = ChannelGraph::new(n);
            for (u, v, a, b) in edges {
                let _ = graph.open_channel(NodeId(u), NodeId(v), a, b);
            }
            Case {
                graph,
                source: NodeId(s),
                sink: NodeId(r),
                value,
            }
        })
}
