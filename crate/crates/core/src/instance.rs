//! A fully resolved planning problem: network, prices, budget, initial
//! servers and the task population of every evaluated stage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infrastructure::{CostModel, Fleet, InfraError};
use crate::offload::DelayModel;
use crate::topology::{NodeId, PathTable, Topology, TopologyError};
use crate::workload::StageWorkload;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Cost(#[from] InfraError),
    #[error("invalid instance: {0}")]
    Invalid(String),
}

/// Server and traffic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    /// Result size relative to the offloaded fraction.
    pub zeta: f64,
    pub edge_rate_bps: f64,
    pub cloud_rate_bps: f64,
    /// Capacity of one rpack in bits.
    pub rpack_capacity_bits: f64,
    pub max_rpacks: u32,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self { zeta: 0.1, edge_rate_bps: 10e9, cloud_rate_bps: 10e9, rpack_capacity_bits: 10e9, max_rpacks: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub topology: Topology,
    pub paths: PathTable,
    pub params: SystemParams,
    pub cost: CostModel,
    /// Total budget over the planning stages.
    pub budget: f64,
    /// Number of planning stages.
    pub stages: usize,
    /// Actual workloads of stages `1..=workloads.len()`; at least `stages`
    /// entries. Stages past `stages` are evaluated with frozen servers.
    pub workloads: Vec<StageWorkload>,
    /// Predicted demand used to plan the final planning stage.
    pub predicted_final: Option<StageWorkload>,
    /// Servers present before stage 1 and their rpack counts.
    pub initial_servers: Vec<(NodeId, u32)>,
}

impl Instance {
    pub fn new(
        topology: Topology,
        params: SystemParams,
        cost: CostModel,
        budget: f64,
        stages: usize,
        workloads: Vec<StageWorkload>,
        predicted_final: Option<StageWorkload>,
        initial_servers: Vec<(NodeId, u32)>,
    ) -> Result<Self, InstanceError> {
        let paths = PathTable::build(&topology)?;
        cost.validate()?;
        let invalid = |m: String| Err(InstanceError::Invalid(m));
        if stages == 0 {
            return invalid("at least one planning stage is required".into());
        }
        if workloads.len() < stages {
            return invalid(format!("{} workloads for {stages} stages", workloads.len()));
        }
        if !(budget >= 0.0 && budget.is_finite()) {
            return invalid(format!("budget {budget}"));
        }
        let p = &params;
        if !(p.zeta >= 0.0 && p.edge_rate_bps > 0.0 && p.cloud_rate_bps > 0.0 && p.rpack_capacity_bits > 0.0 && p.max_rpacks >= 1) {
            return invalid(format!("system parameters {p:?}"));
        }
        let cloud = topology.cloud();
        for w in workloads.iter().chain(predicted_final.iter()) {
            for t in &w.tasks {
                if t.origin == cloud || t.origin.index() >= topology.node_count() {
                    return invalid(format!("task {} has invalid origin {}", t.id, t.origin));
                }
                if !(t.size_bits > 0.0 && t.deadline_s > 0.0 && t.sigma >= 1.0) {
                    return invalid(format!("task {} has invalid attributes", t.id));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(node, rpacks) in &initial_servers {
            if node == cloud || node.index() >= topology.node_count() || rpacks == 0 || rpacks > p.max_rpacks || !seen.insert(node) {
                return invalid(format!("initial server {node} with {rpacks} rpacks"));
            }
        }
        Ok(Self { topology, paths, params, cost, budget, stages, workloads, predicted_final, initial_servers })
    }

    pub fn delay_model(&self) -> DelayModel<'_> {
        DelayModel {
            table: &self.paths,
            cloud: self.topology.cloud(),
            zeta: self.params.zeta,
            edge_rate_bps: self.params.edge_rate_bps,
            cloud_rate_bps: self.params.cloud_rate_bps,
        }
    }

    /// Number of stages whose satisfaction counts toward the average.
    pub fn eval_stages(&self) -> usize {
        self.workloads.len()
    }

    pub fn initial_fleet(&self) -> Fleet {
        self.initial_servers
            .iter()
            .fold(Fleet::new(self.params.rpack_capacity_bits, self.params.max_rpacks), |f, &(n, m)| f.with_initial(n, m))
    }

    pub fn access_points(&self) -> Vec<NodeId> {
        self.topology.access_points()
    }
}
