//! Random payment workloads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Amount, ChannelGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub source: NodeId,
    pub sink: NodeId,
    pub value: Amount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub txn_count: usize,
    /// Directional channel capacity range used when a graph is generated
    /// alongside the workload.
    pub cap_range: (Amount, Amount),
    pub val_range: (Amount, Amount),
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            txn_count: 2000,
            cap_range: (20, 100),
            val_range: (10, 80),
            seed: 0,
        }
    }
}

/// Uniform `(s, r)` pairs with `s != r` and uniform values from
/// `val_range`.
///
/// # Panics
///
/// If the graph has fewer than two nodes or `val_range` is empty.
pub fn generate_workload(g: &ChannelGraph, cfg: &WorkloadConfig) -> Vec<Transaction> {
    let n = g.node_count();
    assert!(n >= 2, "workload needs at least two nodes");
    let (lo, hi) = cfg.val_range;
    assert!(lo <= hi, "empty value range");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.txn_count)
        .map(|_| {
            let s = rng.gen_range(0..n);
            let mut r = rng.gen_range(0..n - 1);
            if r >= s {
                r += 1;
            }
            Transaction {
                source: NodeId::from(s),
                sink: NodeId::from(r),
                value: rng.gen_range(lo..=hi),
            }
        })
        .collect()
}
