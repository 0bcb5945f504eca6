//! Criterion benchmarks for routing, the oracle, and flow reports. Run with `cargo bench -p hushrelay-bench`.
