//! Benchmark runs: route a workload transaction by transaction against the
//! pristine graph, classify each against the max-flow oracle and summarise.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{Amount, ChannelGraph, NodeId};
use crate::oracle::maxflow_augmenting;
use crate::protocol::ProtocolError;
use crate::sim::{run, SimConfig, SimError};
use crate::workload::Transaction;

/// Column order of [`TxnRow`] in CSV output. Stable.
pub const ROW_COLUMNS: [&str; 15] = [
    "txn_id",
    "source",
    "sink",
    "value",
    "feasible",
    "oracle_max",
    "delivered",
    "returned",
    "success",
    "sim_ttr",
    "messages",
    "relabels",
    "events",
    "error",
    "wallclock_ms_hw",
];

/// Column order of [`Aggregate`] in CSV output, after the leading `seed`
/// column of sweep tables. Stable.
pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "txn_count",
    "successes",
    "feasible",
    "errors",
    "success_ratio",
    "feasibility_ratio",
    "mean_sim_ttr",
    "p50_sim_ttr",
    "p95_sim_ttr",
    "max_sim_ttr",
    "mean_messages",
    "max_messages",
    "mean_wallclock_ms_hw",
];

#[derive(Debug, Clone, Default)]
pub struct BenchConfig {
    /// Per-transaction simulator settings; each transaction gets its own
    /// seed derived from `sim.seed` and its id.
    pub sim: SimConfig,
    /// Record host wall-clock time per transaction. Off by default so that
    /// output is reproducible byte for byte.
    pub wallclock: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxnRow {
    pub txn_id: usize,
    pub source: NodeId,
    pub sink: NodeId,
    pub value: Amount,
    pub feasible: bool,
    pub oracle_max: Amount,
    pub delivered: Amount,
    pub returned: Amount,
    /// `delivered == value`; partial delivery is a failure.
    pub success: bool,
    pub sim_ttr: u64,
    pub messages: u64,
    pub relabels: u64,
    pub events: u64,
    pub error: Option<String>,
    /// Hardware dependent.
    pub wallclock_ms_hw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub txn_count: usize,
    pub successes: usize,
    pub feasible: usize,
    pub errors: usize,
    pub success_ratio: f64,
    pub feasibility_ratio: f64,
    pub mean_sim_ttr: f64,
    pub p50_sim_ttr: u64,
    pub p95_sim_ttr: u64,
    pub max_sim_ttr: u64,
    pub mean_messages: f64,
    pub max_messages: u64,
    pub mean_wallclock_ms_hw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<TxnRow>,
    pub aggregate: Aggregate,
}

/// Short machine-readable code for a failed run.
pub fn error_code(err: &SimError) -> &'static str {
    match err {
        SimError::EventBudgetExhausted { .. } => "event_budget",
        SimError::Protocol(p) => match p {
            ProtocolError::SameSourceSink(_) => "same_source_sink",
            ProtocolError::ZeroValue => "zero_value",
            ProtocolError::UnknownNode { .. } => "unknown_node",
            ProtocolError::UnknownNeighbor { .. } => "unknown_neighbor",
            ProtocolError::UnknownRequestId { .. } => "unknown_request",
            ProtocolError::NoResidualNeighbor(_) => "no_residual",
            ProtocolError::NotTerminated => "not_terminated",
            ProtocolError::InvariantViolated(_) => "invariant",
        },
    }
}

/// Seed of transaction `id` under base seed `seed`.
pub fn txn_seed(seed: u64, id: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(id as u64)
}

fn run_one(g: &ChannelGraph, id: usize, t: &Transaction, cfg: &BenchConfig) -> TxnRow {
    let oracle_max = if g.contains_node(t.source) && g.contains_node(t.sink) && t.source != t.sink {
        maxflow_augmenting(g, t.source, t.sink).max_value
    } else {
        0
    };
    let mut row = TxnRow {
        txn_id: id,
        source: t.source,
        sink: t.sink,
        value: t.value,
        feasible: t.value <= oracle_max,
        oracle_max,
        delivered: 0,
        returned: 0,
        success: false,
        sim_ttr: 0,
        messages: 0,
        relabels: 0,
        events: 0,
        error: None,
        wallclock_ms_hw: None,
    };
    let sim = SimConfig {
        seed: txn_seed(cfg.sim.seed, id),
        record_trace: false,
        ..cfg.sim.clone()
    };
    let start = Instant::now();
    let result = run(g, t.source, t.sink, t.value, &sim);
    if cfg.wallclock {
        row.wallclock_ms_hw = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    match result {
        Ok(o) => {
            row.delivered = o.delivered;
            row.returned = o.returned;
            row.success = o.delivered == t.value;
            row.sim_ttr = o.simulated_time;
            row.messages = o.messages_sent;
            row.relabels = o.relabels;
            row.events = o.events;
        }
        Err(e) => row.error = Some(error_code(&e).to_string()),
    }
    row
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl Aggregate {
    /// TTR and message statistics cover the runs that finished without
    /// error.
    pub fn from_rows(rows: &[TxnRow]) -> Self {
        let count = rows.len();
        let ok: Vec<&TxnRow> = rows.iter().filter(|r| r.error.is_none()).collect();
        let mut ttr: Vec<u64> = ok.iter().map(|r| r.sim_ttr).collect();
        ttr.sort_unstable();
        let ratio = |k: usize| if count == 0 { 0.0 } else { k as f64 / count as f64 };
        let mean = |xs: &mut dyn Iterator<Item = f64>, k: usize| {
            if k == 0 {
                0.0
            } else {
                xs.sum::<f64>() / k as f64
            }
        };
        let successes = rows.iter().filter(|r| r.success).count();
        let feasible = rows.iter().filter(|r| r.feasible).count();
        let wall: Vec<f64> = rows.iter().filter_map(|r| r.wallclock_ms_hw).collect();
        Aggregate {
            txn_count: count,
            successes,
            feasible,
            errors: count - ok.len(),
            success_ratio: ratio(successes),
            feasibility_ratio: ratio(feasible),
            mean_sim_ttr: mean(&mut ok.iter().map(|r| r.sim_ttr as f64), ok.len()),
            p50_sim_ttr: percentile(&ttr, 50.0),
            p95_sim_ttr: percentile(&ttr, 95.0),
            max_sim_ttr: ttr.last().copied().unwrap_or(0),
            mean_messages: mean(&mut ok.iter().map(|r| r.messages as f64), ok.len()),
            max_messages: ok.iter().map(|r| r.messages).max().unwrap_or(0),
            mean_wallclock_ms_hw: (!wall.is_empty()).then(|| wall.iter().sum::<f64>() / wall.len() as f64),
        }
    }

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.txn_count.to_string(),
            self.successes.to_string(),
            self.feasible.to_string(),
            self.errors.to_string(),
            format!("{:.6}", self.success_ratio),
            format!("{:.6}", self.feasibility_ratio),
            format!("{:.3}", self.mean_sim_ttr),
            self.p50_sim_ttr.to_string(),
            self.p95_sim_ttr.to_string(),
            self.max_sim_ttr.to_string(),
            format!("{:.3}", self.mean_messages),
            self.max_messages.to_string(),
            self.mean_wallclock_ms_hw.map(|w| format!("{w:.3}")).unwrap_or_default(),
        ]
    }
}

/// Routes every transaction on its own copy of the pristine graph. Rows
/// come back in transaction order whatever the completion order.
pub fn run_benchmark(g: &ChannelGraph, txns: &[Transaction], cfg: &BenchConfig) -> ExperimentReport {
    let work = || -> Vec<TxnRow> {
        txns.par_iter()
            .enumerate()
            .map(|(id, t)| run_one(g, id, t, cfg))
            .collect()
    };
    let rows = match cfg.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .expect("thread pool")
            .install(work),
        None => work(),
    };
    let aggregate = Aggregate::from_rows(&rows);
    ExperimentReport { rows, aggregate }
}

fn csv_string(header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for rec in records {
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

impl ExperimentReport {
    /// One line per transaction, columns as in [`ROW_COLUMNS`].
    pub fn rows_csv(&self) -> String {
        csv_string(
            &ROW_COLUMNS,
            self.rows.iter().map(|r| {
                vec![
                    r.txn_id.to_string(),
                    r.source.to_string(),
                    r.sink.to_string(),
                    r.value.to_string(),
                    r.feasible.to_string(),
                    r.oracle_max.to_string(),
                    r.delivered.to_string(),
                    r.returned.to_string(),
                    r.success.to_string(),
                    r.sim_ttr.to_string(),
                    r.messages.to_string(),
                    r.relabels.to_string(),
                    r.events.to_string(),
                    r.error.clone().unwrap_or_default(),
                    r.wallclock_ms_hw.map(|w| format!("{w:.3}")).unwrap_or_default(),
                ]
            }),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One aggregate line per seed, columns `seed` then [`AGGREGATE_COLUMNS`].
pub fn aggregates_csv(rows: &[(u64, Aggregate)]) -> String {
    let mut header = vec!["seed"];
    header.extend(AGGREGATE_COLUMNS);
    csv_string(
        &header,
        rows.iter().map(|(seed, a)| {
            let mut rec = vec![seed.to_string()];
            rec.extend(a.csv_fields());
            rec
        }),
    )
}

pub fn aggregates_json(rows: &[(u64, Aggregate)]) -> String {
    #[derive(Serialize)]
    struct Seeded<'a> {
        seed: u64,
        #[serde(flatten)]
        aggregate: &'a Aggregate,
    }
    let list: Vec<Seeded> = rows.iter().map(|(seed, aggregate)| Seeded { seed: *seed, aggregate }).collect();
    serde_json::to_string_pretty(&list).expect("aggregates serialize")
}
