//! Deterministic simulation of ddnfs peer groups under message loss,
//! partitions and misbehaving peers.
//!
//! A run is a pure function of its [`SimConfig`]: the same configuration
//! produces the same message trace and the same [`Metrics`].

pub mod config;
pub mod metrics;
pub mod node;
pub mod scenario;
pub mod sim;

pub use config::{quorum_policy, Behavior, ConfigError, Partition, SimConfig, WorkloadEvent, WorkloadKind};
pub use metrics::{Detection, DocMetrics, FetchRecord, Metrics};
pub use scenario::{assert_scenario, evaluate, Predicate, ScenarioOutcome};
pub use sim::{run, Sim};
