//! Scenario files: JSON description of one experiment, resolved into an
//! [`Instance`].

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::infrastructure::{budget_for_coverage, CostModel};
use crate::instance::{Instance, SystemParams};
use crate::planner::Algorithm;
use crate::rng;
use crate::topology::{NodeId, Topology};
use crate::workload::{round_half_up, task_count, GrowthParams, StageWorkload, TaskProfile, WorkloadGenerator};

use super::topogen::generate_topology;
use super::HarnessError;

pub const SCHEMA: u32 = 1;

/// Upper bound on evaluated stages.
pub const MAX_STAGES: usize = 64;
/// Upper bound on generated tasks summed over all stages.
pub const MAX_TASKS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySource {
    /// `xNyE` generator spec.
    Generate(String),
    /// Topology text file, relative to the scenario file.
    File(PathBuf),
    /// Topology text given inline.
    Inline(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BudgetSpec {
    /// Percent of nodes that could get a full server at stage-1 prices.
    CoveragePct(f64),
    Total(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    /// Stage-1 task count as a multiple of the node count.
    pub per_node: f64,
    /// Explicit stage-1 task count; overrides `per_node`.
    pub count: Option<usize>,
    pub profile: TaskProfile,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self { per_node: 3.0, count: None, profile: TaskProfile::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentSpec {
    /// Share of access points holding a server before stage 1.
    pub fraction: f64,
    /// Rpacks per pre-deployed server; `max_rpacks / 2` when absent.
    pub rpacks: Option<u32>,
    /// Explicit list of (node, rpacks); overrides the random draw.
    pub servers: Option<Vec<(u32, u32)>>,
}

impl Default for DeploymentSpec {
    fn default() -> Self {
        Self { fraction: 0.5, rpacks: None, servers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub seed: u64,
    pub topology: TopologySource,
    /// Planning stages T.
    pub stages: usize,
    /// Evaluated stages; defaults to `stages`.
    pub eval_stages: Option<usize>,
    /// Prediction horizon; defaults to `eval_stages - stages`.
    pub horizon: Option<u32>,
    pub budget: BudgetSpec,
    pub cost: CostModel,
    pub servers: SystemParams,
    pub growth: GrowthParams,
    pub tasks: TaskSpec,
    pub initial_deployment: DeploymentSpec,
    pub algorithms: Vec<Algorithm>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema: SCHEMA,
            seed: 1,
            topology: TopologySource::Generate("5N5E".into()),
            stages: 3,
            eval_stages: None,
            horizon: None,
            budget: BudgetSpec::CoveragePct(75.0),
            cost: CostModel::default(),
            servers: SystemParams::default(),
            growth: GrowthParams::default(),
            tasks: TaskSpec::default(),
            initial_deployment: DeploymentSpec::default(),
            algorithms: Algorithm::ALL.to_vec(),
            base_dir: None,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: Self = serde_json::from_str(text)?;
        if s.schema != SCHEMA {
            return Err(HarnessError::Invalid(format!("unsupported scenario schema {}", s.schema)));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        let mut s = Self::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn eval_stages(&self) -> usize {
        self.eval_stages.unwrap_or(self.stages)
    }

    pub fn horizon(&self) -> u32 {
        self.horizon.unwrap_or(self.eval_stages().saturating_sub(self.stages) as u32)
    }

    pub fn topology(&self) -> Result<Topology, HarnessError> {
        match &self.topology {
            TopologySource::Generate(spec) => generate_topology(spec, rng::derive_seed(self.seed, &[1])),
            TopologySource::Inline(text) => Ok(text.parse()?),
            TopologySource::File(p) => {
                let path = match &self.base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
                Ok(text.parse()?)
            }
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Invalid(m));
        if self.stages == 0 {
            return bad("stages must be at least 1".into());
        }
        if self.eval_stages() > MAX_STAGES {
            return bad(format!("{} stages exceed the limit of {MAX_STAGES}", self.eval_stages()));
        }
        if self.horizon() as usize > MAX_STAGES {
            return bad(format!("horizon {} exceeds the limit of {MAX_STAGES}", self.horizon()));
        }
        if self.eval_stages() < self.stages {
            return bad(format!("eval_stages {} is below stages {}", self.eval_stages(), self.stages));
        }
        match self.budget {
            BudgetSpec::CoveragePct(x) if !(x > 0.0 && x <= 100.0) => return bad(format!("coverage {x}% outside (0, 100]")),
            BudgetSpec::Total(b) if !(b > 0.0 && b.is_finite()) => return bad(format!("budget {b} must be positive")),
            _ => {}
        }
        if !(self.tasks.per_node >= 0.0 && self.tasks.per_node.is_finite()) {
            return bad(format!("tasks.per_node {}", self.tasks.per_node));
        }
        if !(0.0..=1.0).contains(&self.initial_deployment.fraction) {
            return bad(format!("initial_deployment.fraction {}", self.initial_deployment.fraction));
        }
        self.cost.validate()?;
        Ok(())
    }

    pub fn resolve(&self) -> Result<Instance, HarnessError> {
        self.validate()?;
        let topology = self.topology()?;
        let n = topology.node_count();
        let params = self.servers;
        let budget = match self.budget {
            BudgetSpec::CoveragePct(x) => budget_for_coverage(n, x, &self.cost, params.max_rpacks),
            BudgetSpec::Total(b) => b,
        };

        let big_t = self.stages;
        let eval = self.eval_stages();
        let horizon = self.horizon();
        let growth = GrowthParams { horizon, ..self.growth.clone() };
        let gen = WorkloadGenerator::new(&topology, self.tasks.profile.clone(), growth, rng::derive_seed(self.seed, &[2]))?;
        let count = self.tasks.count.unwrap_or_else(|| round_half_up(self.tasks.per_node * n as f64));
        let mut total: f64 = (0..eval).map(|e| task_count(count, self.growth.task_growth, e as u32) as f64).sum();
        if horizon > 0 {
            total += task_count(count, self.growth.task_growth, ((big_t - 1) as u32).saturating_add(horizon)) as f64;
        }
        if total > MAX_TASKS as f64 {
            return Err(HarnessError::Invalid(format!("{total} tasks over all stages exceed the limit of {MAX_TASKS}")));
        }
        let mut workloads: Vec<StageWorkload> = vec![gen.initial(count)];
        for t in 2..=eval {
            let next = gen.evolve(&workloads[t - 2], t, false);
            workloads.push(next);
        }
        let predicted = match (horizon, big_t) {
            (0, _) => None,
            (h, 1) => Some(gen.age_to(&workloads[0], 1, h)),
            (_, t) => Some(gen.evolve(&workloads[t - 2], t, true)),
        };

        let aps = topology.access_points();
        let initial = match &self.initial_deployment.servers {
            Some(list) => list.iter().map(|&(node, m)| (NodeId(node), m)).collect(),
            None => {
                let m = self.initial_deployment.rpacks.unwrap_or((params.max_rpacks / 2).max(1));
                let k = round_half_up(self.initial_deployment.fraction * aps.len() as f64).min(aps.len());
                let mut pick = aps.clone();
                pick.shuffle(&mut rng::stream(self.seed, &[3]));
                let mut chosen: Vec<(NodeId, u32)> = pick.into_iter().take(k).map(|a| (a, m)).collect();
                chosen.sort();
                chosen
            }
        };
        Ok(Instance::new(topology, params, self.cost, budget, big_t, workloads, predicted, initial)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let s = Scenario::default();
        let i = s.resolve().unwrap();
        assert_eq!(i.workloads.len(), 3);
        assert_eq!(i.workloads[0].tasks.len(), 15);
        assert_eq!(i.workloads[1].tasks.len(), 23);
        assert_eq!(i.initial_servers.len(), 2);
        assert!(i.initial_servers.iter().all(|s| s.1 == 2));
        assert_eq!(i.budget, 0.75 * 5.0 * 1000.0);
        assert!(i.predicted_final.is_none());
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let s = Scenario::from_json(r#"{"schema": 1, "stages": 2, "eval_stages": 4}"#).unwrap();
        assert_eq!(s.horizon(), 2);
        let i = s.resolve().unwrap();
        assert_eq!(i.eval_stages(), 4);
        let p = i.predicted_final.as_ref().unwrap();
        assert_eq!(p.exponent, 3);
        assert!(Scenario::from_json(r#"{"schema": 2}"#).is_err());
        assert!(Scenario::from_json(r#"{"schema": 1, "bogus": 0}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = Scenario { budget: BudgetSpec::Total(1234.0), ..Scenario::default() };
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_values() {
        let s = Scenario { stages: 0, ..Scenario::default() };
        assert!(s.resolve().is_err());
        let s = Scenario { budget: BudgetSpec::CoveragePct(0.0), ..Scenario::default() };
        assert!(s.resolve().is_err());
    }

    #[test]
    fn oversized_inputs_are_rejected() {
        let mut s = Scenario { stages: 1, ..Scenario::default() };
        s.tasks.count = Some(MAX_TASKS + 1);
        assert!(matches!(s.resolve(), Err(HarnessError::Invalid(_))));
        let s = Scenario { stages: 2, horizon: Some(u32::MAX), ..Scenario::default() };
        assert!(s.resolve().is_err());
        let s = Scenario { topology: TopologySource::Inline("nodes 100000 cloud 0\n".into()), ..Scenario::default() };
        assert!(matches!(s.resolve(), Err(HarnessError::Topology(_))));
    }
}
