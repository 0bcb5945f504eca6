mod common;

use common::{arb_case, ba_case, Case};
use hushrelay_core::{feasible_flow_sequential, maxflow_augmenting, ChannelGraph, NodeId, ResidualView};
use proptest::prelude::*;

/// Minimum `s`-`r` cut by enumerating every node subset containing `s`.
fn brute_min_cut(g: &ChannelGraph, s: NodeId, r: NodeId) -> u64 {
    let n = g.node_count();
    let mut best = u64::MAX;
    for mask in 0u32..(1 << n) {
        let inside = |v: NodeId| mask & (1 << v.0) != 0;
        if !inside(s) || inside(r) {
            continue;
        }
        let cut: u64 = g
            .channels()
            .map(|ch| {
                let (a, b) = (ch.id.lo, ch.id.hi);
                match (inside(a), inside(b)) {
                    (true, false) => ch.cap_forward,
                    (false, true) => ch.cap_backward,
                    _ => 0,
                }
            })
            .sum();
        best = best.min(cut);
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn augmenting_paths_match_min_cut(case in arb_case()) {
        let Case { graph, source, sink, .. } = case;
        let res = maxflow_augmenting(&graph, source, sink);
        prop_assert_eq!(res.max_value, brute_min_cut(&graph, source, sink));
        res.flow.validate(&graph).unwrap();
        prop_assert!(!ResidualView::new(&graph, &res.flow).path_exists(source, sink));
    }

    #[test]
    fn sequential_push_relabel_matches_on_small_graphs(case in arb_case()) {
        let Case { graph, source, sink, value } = case;
        let max = maxflow_augmenting(&graph, source, sink).max_value;
        let f = feasible_flow_sequential(&graph, source, sink, value);
        f.validate(&graph).unwrap();
        prop_assert_eq!(f.value(), value.min(max) as i64);
    }
}

#[test]
fn sequential_push_relabel_matches_on_ba_corpus() {
    for seed in 0..1000 {
        let c = ba_case(seed);
        let max = maxflow_augmenting(&c.graph, c.source, c.sink).max_value;
        let f = feasible_flow_sequential(&c.graph, c.source, c.sink, c.value);
        f.validate(&c.graph).unwrap();
        assert_eq!(f.value(), c.value.min(max) as i64, "seed {seed}");
    }
}
