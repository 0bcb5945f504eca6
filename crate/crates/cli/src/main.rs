//! `hushrelay`: generate networks, route single payments and run benchmark
//! sweeps.
//!
//! Exit codes: 0 success, 1 routing failure, 2 usage error, 3 I/O error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hushrelay_core::experiment::{aggregates_csv, aggregates_json, run_benchmark, BenchConfig};
use hushrelay_core::format::{load_network, load_workload, save_network, save_workload, Network};
use hushrelay_core::report::{propagate_report, AesGcmCipher};
use hushrelay_core::sim::{render_trace, run_traced};
use hushrelay_core::{
    decompose, generate_ba, generate_workload, Amount, BAConfig, ChannelGraph, LatencyModel, SimConfig,
    SimError, Transaction, WorkloadConfig,
};

#[derive(Parser, Debug)]
#[command(name = "hushrelay", version, about = "Distributed push-relabel routing for payment channel networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic network (and optionally a workload).
    Gen(GenArgs),
    /// Route one payment and print the outcome.
    Route(RouteArgs),
    /// Route a workload against the max-flow oracle and emit metrics.
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    Ba,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
struct TopologyArgs {
    #[arg(long, value_enum, default_value = "ba")]
    model: Model,
    #[arg(long, default_value_t = 50)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    attach: usize,
    #[arg(long, default_value_t = 20)]
    cap_min: Amount,
    #[arg(long, default_value_t = 100)]
    cap_max: Amount,
}

#[derive(Args, Debug, Clone)]
struct WorkloadArgs {
    /// Number of transactions to generate.
    #[arg(long, default_value_t = 2000)]
    txns: usize,
    #[arg(long, default_value_t = 10)]
    val_min: Amount,
    #[arg(long, default_value_t = 80)]
    val_max: Amount,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    topo: TopologyArgs,
    #[arg(long, env = "HUSHRELAY_SEED", default_value_t = 0)]
    seed: u64,
    /// Network file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write a workload file for the generated network.
    #[arg(long)]
    workload: Option<PathBuf>,
    #[command(flatten)]
    load: WorkloadArgs,
}

#[derive(Args, Debug)]
struct RouteArgs {
    #[arg(long)]
    network: PathBuf,
    /// Payer, by name or id.
    #[arg(long)]
    source: String,
    /// Payee, by name or id.
    #[arg(long)]
    sink: String,
    #[arg(long)]
    amount: Amount,
    #[arg(long, env = "HUSHRELAY_SEED", default_value_t = 0)]
    seed: u64,
    /// `const:<d>` or `uniform:<lo>:<hi>`.
    #[arg(long, default_value = "const:1")]
    latency: LatencyModel,
    /// Write the delivery trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also run the encrypted flow report back to the source.
    #[arg(long)]
    report: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Network file; generated from the topology flags when absent.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Workload file; generated from the workload flags when absent.
    #[arg(long)]
    workload: Option<PathBuf>,
    #[command(flatten)]
    topo: TopologyArgs,
    #[command(flatten)]
    load: WorkloadArgs,
    #[arg(long, env = "HUSHRELAY_SEED", default_value_t = 0, conflicts_with = "seeds")]
    seed: u64,
    /// Inclusive seed range `a..b`; emits one aggregate row per seed.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<(u64, u64)>,
    #[arg(long, default_value = "const:1")]
    latency: LatencyModel,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Fill the hardware-bound wall-clock column.
    #[arg(long)]
    wallclock: bool,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_seeds(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected `a..b`, got `{s}`"))?;
    let a: u64 = a.parse().map_err(|_| format!("bad seed `{a}`"))?;
    let b: u64 = b.parse().map_err(|_| format!("bad seed `{b}`"))?;
    if a > b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok((a, b))
}

enum Failure {
    Routing(String),
    Usage(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Routing(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Routing(m) | Failure::Usage(m) | Failure::Io(m) => m,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn open_network(path: &Path) -> Result<Network, Failure> {
    load_network(path).map_err(|e| match e {
        hushrelay_core::format::FormatError::Io { .. } => Failure::Io(e.to_string()),
        other => Failure::Usage(format!("{}: {other}", path.display())),
    })
}

fn build_graph(topo: &TopologyArgs, seed: u64) -> Result<ChannelGraph, Failure> {
    match topo.model {
        Model::Ba => generate_ba(&BAConfig {
            n: topo.nodes,
            m_attach: topo.attach,
            cap_range: (topo.cap_min, topo.cap_max),
            seed,
        })
        .map_err(|e| Failure::Usage(e.to_string())),
    }
}

fn build_workload(g: &ChannelGraph, topo: &TopologyArgs, load: &WorkloadArgs, seed: u64) -> Result<Vec<Transaction>, Failure> {
    if g.node_count() < 2 {
        return Err(Failure::Usage("a workload needs at least two nodes".into()));
    }
    if load.val_min > load.val_max {
        return Err(Failure::Usage("--val-min exceeds --val-max".into()));
    }
    Ok(generate_workload(
        g,
        &WorkloadConfig {
            txn_count: load.txns,
            cap_range: (topo.cap_min, topo.cap_max),
            val_range: (load.val_min, load.val_max),
            seed,
        },
    ))
}

fn cmd_gen(a: &GenArgs) -> CmdResult {
    let g = build_graph(&a.topo, a.seed)?;
    let workload = match &a.workload {
        Some(path) => Some((path, build_workload(&g, &a.topo, &a.load, a.seed)?)),
        None => None,
    };
    let net = Network::new(g);
    save_network(&net, &a.out).map_err(|e| Failure::Io(e.to_string()))?;
    if let Some((path, txns)) = workload {
        save_workload(&txns, path).map_err(|e| Failure::Io(e.to_string()))?;
    }
    println!(
        "wrote {} ({} nodes, {} channels)",
        a.out.display(),
        net.graph.node_count(),
        net.graph.channel_count()
    );
    Ok(())
}

fn cmd_route(a: &RouteArgs) -> CmdResult {
    let net = open_network(&a.network)?;
    let resolve = |tok: &str| {
        net.resolve(tok)
            .ok_or_else(|| Failure::Usage(format!("unknown node `{tok}`")))
    };
    let (s, r) = (resolve(&a.source)?, resolve(&a.sink)?);
    let cfg = SimConfig {
        seed: a.seed,
        latency: a.latency,
        ..SimConfig::default()
    };
    let (outcome, trace) = run_traced(&net.graph, s, r, a.amount, &cfg).map_err(|e| match e {
        SimError::Protocol(p) => Failure::Usage(p.to_string()),
        other => Failure::Routing(other.to_string()),
    })?;
    if let Some(path) = &a.trace {
        write_file(path, &render_trace(&trace))?;
    }

    let label_path = |nodes: &[hushrelay_core::NodeId]| {
        nodes.iter().map(|&v| net.label(v)).collect::<Vec<_>>().join("-")
    };
    let paths = decompose(&outcome.flow).map_err(|e| Failure::Routing(e.to_string()))?;
    let mut out = String::new();
    out += &format!("delivered {}\nreturned {}\n", outcome.delivered, outcome.returned);
    for p in &paths.paths {
        out += &format!("path {}:{}\n", label_path(&p.nodes), p.value);
    }
    out += &format!(
        "messages {}\nrelabels {}\nevents {}\nsim_ttr {}\n",
        outcome.messages_sent, outcome.relabels, outcome.events, outcome.simulated_time
    );

    if a.report {
        let rep = propagate_report(&AesGcmCipher, &outcome, a.seed).map_err(|e| Failure::Routing(e.to_string()))?;
        let rec = rep
            .reconstruct(&AesGcmCipher)
            .map_err(|e| Failure::Routing(e.to_string()))?;
        out += &format!(
            "report packets {} arrived {} depth {} edges {}\n",
            rep.packets_sent,
            rep.arrived.len(),
            rec.depth,
            rec.edges_reported
        );
        for p in &rec.paths.paths {
            out += &format!("report_path {}:{}\n", label_path(&p.nodes), p.value);
        }
        out += &format!("report_matches_ledger {}\n", rec.flow == outcome.flow);
    }
    print!("{out}");

    if outcome.delivered == a.amount {
        Ok(())
    } else {
        Err(Failure::Routing(format!(
            "delivered {} of {}",
            outcome.delivered, a.amount
        )))
    }
}

fn cmd_bench(a: &BenchArgs) -> CmdResult {
    let fixed_net = a.network.as_deref().map(open_network).transpose()?;
    let fixed_load = match &a.workload {
        Some(path) => Some(load_workload(path).map_err(|e| match e {
            hushrelay_core::format::FormatError::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Usage(format!("{}: {other}", path.display())),
        })?),
        None => None,
    };

    let (lo, hi) = a.seeds.unwrap_or((a.seed, a.seed));
    let mut aggregates = Vec::new();
    let mut last = None;
    let started = Instant::now();
    for seed in lo..=hi {
        let generated;
        let g = match &fixed_net {
            Some(net) => &net.graph,
            None => {
                generated = build_graph(&a.topo, seed)?;
                &generated
            }
        };
        let txns = match &fixed_load {
            Some(t) => t.clone(),
            None => build_workload(g, &a.topo, &a.load, seed)?,
        };
        let cfg = BenchConfig {
            sim: SimConfig {
                seed,
                latency: a.latency,
                ..SimConfig::default()
            },
            wallclock: a.wallclock,
            workers: a.workers,
        };
        let rep = run_benchmark(g, &txns, &cfg);
        let agg = &rep.aggregate;
        eprintln!(
            "seed {seed}: {} txns, success_ratio {:.4}, feasibility_ratio {:.4}, errors {}",
            agg.txn_count, agg.success_ratio, agg.feasibility_ratio, agg.errors
        );
        aggregates.push((seed, rep.aggregate.clone()));
        last = Some(rep);
    }
    if a.wallclock {
        eprintln!("wall-clock {:.3}s (hardware dependent)", started.elapsed().as_secs_f64());
    }

    let text = match (a.seeds.is_some(), a.format) {
        (true, Format::Csv) => aggregates_csv(&aggregates),
        (true, Format::Json) => aggregates_json(&aggregates),
        (false, Format::Csv) => last.expect("one seed ran").rows_csv(),
        (false, Format::Json) => last.expect("one seed ran").to_json(),
    };
    match &a.out {
        Some(path) => write_file(path, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Route(a) => cmd_route(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hushrelay: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
