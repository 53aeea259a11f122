//! Multi-stage planning of edge server deployment and rpack upgrades under
//! a budget, with task offloading to edge servers and the cloud.

pub mod check;
pub mod exact;
pub mod harness;
pub mod infrastructure;
pub mod instance;
pub mod json;
pub mod offload;
pub mod planner;
mod rng;
pub mod topology;
pub mod workload;

pub use instance::{Instance, SystemParams};
pub use planner::{plan, Algorithm, PlanTrace};
pub use topology::{NodeId, PathTable, Topology};
pub use workload::{Task, TaskId};
