//! Payment-channel-network routing with a distributed push-relabel
//! protocol.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`], [`flow`], [`format`]: the channel graph, flow functions and
//!   their text formats;
//! * [`oracle`]: sequential max-flow solvers used as ground truth;
//! * [`protocol`]: per-node state machines exchanging push requests,
//!   acknowledgements and label updates;
//! * [`sim`]: a deterministic discrete-event simulator driving them;
//! * [`decompose`], [`report`]: splitting a flow into paths and carrying it
//!   back to the payer in layered encrypted packets;
//! * [`topology`], [`workload`], [`experiment`]: synthetic networks,
//!   payment workloads and benchmark reports.

pub mod decompose;
pub mod experiment;
pub mod flow;
pub mod format;
pub mod graph;
pub mod oracle;
pub mod protocol;
pub mod report;
pub mod sim;
pub mod topology;
pub mod workload;

pub use decompose::{decompose, FlowDecomposition, FlowPath};
pub use flow::{FlowAssignment, ResidualView};
pub use format::Network;
pub use graph::{residual, Amount, Channel, ChannelGraph, ChannelId, GraphError, NodeId};
pub use oracle::{feasible_flow_sequential, is_feasible, maxflow_augmenting, OracleResult};
pub use protocol::{NodeView, ProtocolError, RoutingOutcome};
pub use report::{propagate_report, reconstruct, AesGcmCipher, LayerCipher, ReconstructedFlow, ReportError, ReportRun};
pub use sim::{run, run_traced, Dispatcher, LatencyModel, SimConfig, SimError};
pub use topology::{generate_ba, BAConfig};
pub use workload::{generate_workload, Transaction, WorkloadConfig};
