//! Scenario files, generated topologies and experiment sweeps.

pub mod scenario;
pub mod sweep;
pub mod topogen;

use std::io;

use thiserror::Error;

use crate::infrastructure::InfraError;
use crate::instance::InstanceError;
use crate::topology::TopologyError;
use crate::workload::WorkloadError;

pub use scenario::{BudgetSpec, Scenario, TopologySource};
pub use sweep::{run_sweep, Axis, SweepRow, SweepSpec};
pub use topogen::generate_topology;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}: {1}")]
    Io(String, #[source] io::Error),
    #[error("bad JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Cost(#[from] InfraError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("{0}")]
    Invalid(String),
}
