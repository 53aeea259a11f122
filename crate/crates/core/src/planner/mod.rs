//! Multi-stage planner: per stage, cloud offload, cloud-share reduction,
//! greedy deploy/upgrade with cluster offload, fractional offload to the
//! remaining edge capacity, and a final cloud drain.

mod cluster;
mod metrics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infrastructure::{BudgetLedger, InfraError, Infrastructure};
use crate::instance::Instance;
use crate::offload::{OffloadError, StageAssignment, StageOffload};
use crate::topology::NodeId;
use crate::workload::Task;

pub use cluster::{deploy_upgrade_offload, generate_clusters, ActionPolicy, ActionRecord, ClusterCandidate, Priority};
pub use metrics::Metrics;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Infra(#[from] InfraError),
    #[error(transparent)]
    Offload(#[from] OffloadError),
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Algorithm {
    /// Mixed deploy/upgrade with demand prediction for the last stage.
    H,
    /// As `H` without prediction.
    Ho,
    Df,
    Uf,
    Do,
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.name().to_string()
    }
}

impl TryFrom<String> for Algorithm {
    type Error = PlanError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::H, Algorithm::Ho, Algorithm::Df, Algorithm::Uf, Algorithm::Do];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::H => "/H",
            Algorithm::Ho => "/HO",
            Algorithm::Df => "/DF",
            Algorithm::Uf => "/UF",
            Algorithm::Do => "/DO",
        }
    }

    pub fn predicts(self) -> bool {
        self == Algorithm::H
    }

    fn priority(self, max_rpacks: u32) -> Priority {
        match self {
            Algorithm::H | Algorithm::Ho => Priority::Mixed,
            Algorithm::Df => Priority::DeployFirst,
            Algorithm::Uf => Priority::UpgradeFirst,
            Algorithm::Do => Priority::DeployOnly(2.min(max_rpacks)),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().trim_start_matches('/').to_ascii_uppercase();
        Ok(match key.as_str() {
            "H" => Algorithm::H,
            "HO" => Algorithm::Ho,
            "DF" => Algorithm::Df,
            "UF" => Algorithm::Uf,
            "DO" => Algorithm::Do,
            _ => return Err(PlanError::UnknownAlgorithm(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSnapshot {
    pub node: NodeId,
    pub rpacks: u32,
    pub workload_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: usize,
    pub tasks: usize,
    /// Size of the task set the actions were planned against.
    pub planned_tasks: usize,
    pub predicted: bool,
    pub allocation: f64,
    pub available: f64,
    pub spent: f64,
    pub carryover: f64,
    pub actions: Vec<ActionRecord>,
    pub servers: Vec<ServerSnapshot>,
    pub assignment: StageAssignment,
    pub gamma: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub algorithm: String,
    pub planning_stages: usize,
    pub budget: f64,
    pub stages: Vec<StageTrace>,
    /// Mean satisfied tasks per stage.
    pub gamma_bar: f64,
    /// Satisfied tasks as a percentage of all tasks over the evaluated stages.
    pub gamma_bar_pct: f64,
    pub metrics: Metrics,
}

impl PlanTrace {
    /// Assembles a trace from finished stages and derives the summary fields.
    pub fn assemble(label: &str, instance: &Instance, stages: Vec<StageTrace>) -> Self {
        let n = stages.len().max(1) as f64;
        let satisfied: usize = stages.iter().map(|s| s.gamma).sum();
        let total: usize = stages.iter().map(|s| s.tasks).sum();
        let gamma_bar_pct = if total == 0 { 100.0 } else { 100.0 * satisfied as f64 / total as f64 };
        let metrics = Metrics::compute(instance, &stages);
        Self {
            algorithm: label.to_string(),
            planning_stages: instance.stages,
            budget: instance.budget,
            gamma_bar: satisfied as f64 / n,
            gamma_bar_pct,
            stages,
            metrics,
        }
    }

    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(self)
    }
}

/// Offloads `tasks` onto the current servers without buying anything:
/// cloud offload, cloud-share reduction, fractional offload, drain.
pub(crate) fn offload_only(
    stage: usize,
    tasks: &[Task],
    infra: &mut Infrastructure,
    instance: &Instance,
) -> Result<StageAssignment, PlanError> {
    let model = instance.delay_model();
    infra.fleet.reset_workloads();
    let mut st = StageOffload::new(stage, tasks);
    st.offload_to_cloud(&model, true);
    st.reduce_via_cloud(&model);
    if st.pending_count() > 0 {
        st.offload_fractions(&model, &mut infra.fleet)?;
    }
    st.offload_to_cloud(&model, false);
    Ok(st.finish())
}

pub(crate) fn snapshot(infra: &Infrastructure) -> Vec<ServerSnapshot> {
    infra
        .fleet
        .servers()
        .filter(|s| s.rpacks > 0)
        .map(|s| ServerSnapshot { node: s.node, rpacks: s.rpacks, workload_bits: s.workload })
        .collect()
}

/// Runs `algorithm` over every evaluated stage of `instance`.
pub fn plan(instance: &Instance, algorithm: Algorithm) -> Result<PlanTrace, PlanError> {
    let model = instance.delay_model();
    let big_t = instance.stages;
    let mut infra = Infrastructure::new(
        instance.cost,
        instance.initial_fleet(),
        BudgetLedger::new(instance.budget, big_t),
    );
    let priority = algorithm.priority(instance.params.max_rpacks);
    let mut stages = Vec::with_capacity(instance.eval_stages());

    for (i, actual) in instance.workloads.iter().enumerate() {
        let t = i + 1;
        let available = infra.ledger.open_stage(t);
        let prediction = match (&instance.predicted_final, algorithm.predicts() && t == big_t) {
            (Some(p), true) => Some(p),
            _ => None,
        };
        let planned = prediction.unwrap_or(actual);

        let mut actions = Vec::new();
        let assignment = if t <= big_t {
            infra.fleet.reset_workloads();
            let mut st = StageOffload::new(t, &planned.tasks);
            st.offload_to_cloud(&model, true);
            st.reduce_via_cloud(&model);
            if st.pending_count() > 0 {
                actions = deploy_upgrade_offload(&mut st, &mut infra, &model, priority)?;
            }
            if prediction.is_some() {
                offload_only(t, &actual.tasks, &mut infra, instance)?
            } else {
                if st.pending_count() > 0 {
                    st.offload_fractions(&model, &mut infra.fleet)?;
                }
                st.offload_to_cloud(&model, false);
                st.finish()
            }
        } else {
            offload_only(t, &actual.tasks, &mut infra, instance)?
        };

        let spent = actions.iter().map(|a| a.cost).sum();
        let servers = snapshot(&infra);
        let carryover = infra.ledger.close_stage();
        stages.push(StageTrace {
            stage: t,
            tasks: actual.tasks.len(),
            planned_tasks: planned.tasks.len(),
            predicted: prediction.is_some(),
            allocation: infra.ledger.allocation(t),
            available,
            spent,
            carryover,
            actions,
            servers,
            gamma: assignment.gamma,
            assignment,
        });
    }
    Ok(PlanTrace::assemble(algorithm.name(), instance, stages))
}
