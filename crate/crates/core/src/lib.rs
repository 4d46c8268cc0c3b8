//! Label prediction for multi-view bags of instances by jointly factorizing
//! a network of bag, instance and label relations.
//!
//! The pipeline is:
//!
//! 1. [`network::assemble_network`] turns a [`MultiViewMimlDataset`] into a
//!    [`HeteroNetwork`] of bag, instance and label relations.
//! 2. [`solver::fit`] factorizes the network into nonnegative bag, instance
//!    and label factors with learned per-view weights.
//! 3. [`predict`] scores labels per instance and per bag, and [`metrics`]
//!    evaluates them.
//!
//! [`harness`] wires these into the reproducible experiments driven by the
//! `m3lcmf` command-line tool.

pub mod dataio;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod network;
pub mod predict;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Ablation, EvaluationReport, FactorModel, HeteroNetwork, Level, Metric, MetricSummary,
    MultiViewMimlDataset, NetworkConfig, NetworkParts, RunMetadata, SolverConfig,
};
