//! Server capacity state, the depreciating cost model and the per-stage
//! budget ledger with carryover.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeId;

/// Relative slack for currency comparisons.
pub const BUDGET_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum InfraError {
    #[error("{kind} of {rpacks} rpacks on node {node} is out of range (installed {installed}, max {max})")]
    RpacksOutOfRange { node: NodeId, kind: ActionKind, rpacks: u32, installed: u32, max: u32 },
    #[error("insufficient budget at stage {stage}: need {needed}, have {available}")]
    InsufficientBudget { stage: usize, needed: f64, available: f64 },
    #[error("node {0} already hosts a server")]
    DuplicateDeploy(NodeId),
    #[error("node {0} has no server to upgrade")]
    NoServer(NodeId),
    #[error("server {node} overloaded: workload {workload} exceeds capacity {capacity}")]
    CapacityOverflow { node: NodeId, workload: f64, capacity: f64 },
    #[error("no stage is open in the budget ledger")]
    NoOpenStage,
    #[error("invalid cost model: {0}")]
    InvalidCostModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Deploy,
    Upgrade,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Deploy => "deploy",
            ActionKind::Upgrade => "upgrade",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub rpacks: u32,
}

impl Action {
    pub fn deploy(rpacks: u32) -> Self {
        Self { kind: ActionKind::Deploy, rpacks }
    }

    pub fn upgrade(rpacks: u32) -> Self {
        Self { kind: ActionKind::Upgrade, rpacks }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Stage-1 infrastructure cost of a new server.
    pub infra_cost: f64,
    /// Stage-1 cost of one rpack.
    pub rpack_cost: f64,
    /// Per-stage price decline, in `[0, 1)`.
    pub depreciation: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { infra_cost: 600.0, rpack_cost: 100.0, depreciation: 0.2 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), InfraError> {
        if self.infra_cost >= 0.0 && self.rpack_cost > 0.0 && (0.0..1.0).contains(&self.depreciation) {
            Ok(())
        } else {
            Err(InfraError::InvalidCostModel(format!("{self:?}")))
        }
    }

    fn factor(&self, stage: usize) -> f64 {
        (1.0 - self.depreciation).powi(stage.saturating_sub(1) as i32)
    }

    pub fn infra_at(&self, stage: usize) -> f64 {
        self.factor(stage) * self.infra_cost
    }

    pub fn rpack_at(&self, stage: usize) -> f64 {
        self.factor(stage) * self.rpack_cost
    }

    /// Price of `action` at `stage` without range checks.
    pub fn price(&self, action: Action, stage: usize) -> f64 {
        let packs = action.rpacks as f64 * self.rpack_at(stage);
        match action.kind {
            ActionKind::Deploy => self.infra_at(stage) + packs,
            ActionKind::Upgrade => packs,
        }
    }

    /// Price of `action` at `stage` for a node that currently holds
    /// `installed` rpacks.
    pub fn cost_of(&self, action: Action, stage: usize, installed: u32, max_rpacks: u32) -> Result<f64, InfraError> {
        let limit = match action.kind {
            ActionKind::Deploy => max_rpacks,
            ActionKind::Upgrade => max_rpacks.saturating_sub(installed),
        };
        if action.rpacks == 0 || action.rpacks > limit {
            return Err(InfraError::RpacksOutOfRange {
                node: NodeId(u32::MAX),
                kind: action.kind,
                rpacks: action.rpacks,
                installed,
                max: max_rpacks,
            });
        }
        Ok(self.price(action, stage))
    }
}

/// Budget that equips `coverage_pct`% of `node_count` nodes with a full
/// server at stage-1 prices.
pub fn budget_for_coverage(node_count: usize, coverage_pct: f64, cost: &CostModel, max_rpacks: u32) -> f64 {
    coverage_pct / 100.0 * node_count as f64 * cost.price(Action::deploy(max_rpacks), 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub node: NodeId,
    /// Rpacks present before stage 1.
    pub initial_rpacks: u32,
    /// Rpacks added per stage (stage, count).
    pub installed: Vec<(usize, u32)>,
    /// Current cumulative rpack count.
    pub rpacks: u32,
    /// Bits currently assigned in the open stage.
    pub workload: f64,
}

impl ServerState {
    /// Cumulative rpacks up to and including `stage`.
    pub fn rpacks_at(&self, stage: usize) -> u32 {
        self.initial_rpacks + self.installed.iter().filter(|(s, _)| *s <= stage).map(|(_, m)| m).sum::<u32>()
    }
}

/// Edge servers keyed by node. The cloud is not part of the fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    rpack_capacity: f64,
    max_rpacks: u32,
    servers: BTreeMap<NodeId, ServerState>,
}

impl Fleet {
    pub fn new(rpack_capacity: f64, max_rpacks: u32) -> Self {
        Self { rpack_capacity, max_rpacks, servers: BTreeMap::new() }
    }

    /// Adds a server that exists before stage 1.
    pub fn with_initial(mut self, node: NodeId, rpacks: u32) -> Self {
        self.servers.insert(
            node,
            ServerState { node, initial_rpacks: rpacks, installed: Vec::new(), rpacks, workload: 0.0 },
        );
        self
    }

    pub fn rpack_capacity(&self) -> f64 {
        self.rpack_capacity
    }

    pub fn max_rpacks(&self) -> u32 {
        self.max_rpacks
    }

    pub fn get(&self, node: NodeId) -> Option<&ServerState> {
        self.servers.get(&node)
    }

    pub fn servers(&self) -> impl Iterator<Item = &ServerState> {
        self.servers.values()
    }

    pub fn has_server(&self, node: NodeId) -> bool {
        self.servers.get(&node).is_some_and(|s| s.rpacks > 0)
    }

    pub fn rpacks(&self, node: NodeId) -> u32 {
        self.servers.get(&node).map_or(0, |s| s.rpacks)
    }

    pub fn capacity(&self, node: NodeId) -> f64 {
        self.rpacks(node) as f64 * self.rpack_capacity
    }

    pub fn workload(&self, node: NodeId) -> f64 {
        self.servers.get(&node).map_or(0.0, |s| s.workload)
    }

    pub fn residual(&self, node: NodeId) -> f64 {
        (self.capacity(node) - self.workload(node)).max(0.0)
    }

    pub fn reset_workloads(&mut self) {
        for s in self.servers.values_mut() {
            s.workload = 0.0;
        }
    }

    /// Adds `bits` to a server's workload, rejecting overflow beyond a
    /// relative `1e-9` slack.
    pub fn load(&mut self, node: NodeId, bits: f64) -> Result<(), InfraError> {
        let capacity = self.capacity(node);
        let s = self.servers.get_mut(&node).ok_or(InfraError::NoServer(node))?;
        let workload = s.workload + bits;
        if workload > capacity * (1.0 + 1e-9) + 1e-9 {
            return Err(InfraError::CapacityOverflow { node, workload, capacity });
        }
        s.workload = workload;
        Ok(())
    }

    fn install(&mut self, node: NodeId, stage: usize, action: Action) -> Result<(), InfraError> {
        let installed = self.rpacks(node);
        match action.kind {
            ActionKind::Deploy if installed > 0 => return Err(InfraError::DuplicateDeploy(node)),
            ActionKind::Upgrade if installed == 0 => return Err(InfraError::NoServer(node)),
            _ => {}
        }
        let limit = match action.kind {
            ActionKind::Deploy => self.max_rpacks,
            ActionKind::Upgrade => self.max_rpacks - installed,
        };
        if action.rpacks == 0 || action.rpacks > limit {
            return Err(InfraError::RpacksOutOfRange {
                node,
                kind: action.kind,
                rpacks: action.rpacks,
                installed,
                max: self.max_rpacks,
            });
        }
        let s = self.servers.entry(node).or_insert(ServerState {
            node,
            initial_rpacks: 0,
            installed: Vec::new(),
            rpacks: 0,
            workload: 0.0,
        });
        s.installed.push((stage, action.rpacks));
        s.rpacks += action.rpacks;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpendRecord {
    pub stage: usize,
    pub node: NodeId,
    pub kind: ActionKind,
    pub rpacks: u32,
    pub cost: f64,
    pub remaining: f64,
}

/// Per-stage budget with carryover of unspent money.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    total: f64,
    stages: usize,
    open: Option<usize>,
    available: f64,
    spent: f64,
    carryover: f64,
    log: Vec<SpendRecord>,
}

impl BudgetLedger {
    pub fn new(total: f64, stages: usize) -> Self {
        Self { total, stages, open: None, available: 0.0, spent: 0.0, carryover: 0.0, log: Vec::new() }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Allocation `B / T` for planning stages, zero afterwards.
    pub fn allocation(&self, stage: usize) -> f64 {
        if stage >= 1 && stage <= self.stages {
            self.total / self.stages as f64
        } else {
            0.0
        }
    }

    /// Opens `stage`, making its allocation plus last carryover available.
    pub fn open_stage(&mut self, stage: usize) -> f64 {
        if self.open.is_some() {
            self.close_stage();
        }
        self.open = Some(stage);
        self.available = self.allocation(stage) + self.carryover;
        self.spent = 0.0;
        self.available
    }

    pub fn open(&self) -> Option<usize> {
        self.open
    }

    pub fn available(&self) -> f64 {
        self.available
    }

    pub fn remaining(&self) -> f64 {
        (self.available - self.spent).max(0.0)
    }

    pub fn can_afford(&self, cost: f64) -> bool {
        cost <= self.available - self.spent + BUDGET_EPS * self.total.max(1.0)
    }

    /// Closes the open stage and returns its carryover.
    pub fn close_stage(&mut self) -> f64 {
        if self.open.take().is_some() {
            self.carryover = self.remaining();
            self.available = 0.0;
            self.spent = 0.0;
        }
        self.carryover
    }

    pub fn carryover(&self) -> f64 {
        self.carryover
    }

    pub fn log(&self) -> &[SpendRecord] {
        &self.log
    }

    pub fn total_spent(&self) -> f64 {
        self.log.iter().map(|r| r.cost).sum()
    }

    fn charge(&mut self, node: NodeId, action: Action, cost: f64) -> Result<(), InfraError> {
        let stage = self.open.ok_or(InfraError::NoOpenStage)?;
        if !self.can_afford(cost) {
            return Err(InfraError::InsufficientBudget { stage, needed: cost, available: self.remaining() });
        }
        self.spent += cost;
        self.log.push(SpendRecord {
            stage,
            node,
            kind: action.kind,
            rpacks: action.rpacks,
            cost,
            remaining: self.remaining(),
        });
        Ok(())
    }

    /// Writes `stage,node,kind,rpacks,cost,remaining`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.log {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fleet, prices and money for one planner run.
#[derive(Debug, Clone, PartialEq)]
pub struct Infrastructure {
    pub cost: CostModel,
    pub fleet: Fleet,
    pub ledger: BudgetLedger,
}

impl Infrastructure {
    pub fn new(cost: CostModel, fleet: Fleet, ledger: BudgetLedger) -> Self {
        Self { cost, fleet, ledger }
    }

    /// Charges `action` on `node` against the open stage and installs it.
    pub fn commit(&mut self, node: NodeId, action: Action) -> Result<f64, InfraError> {
        let stage = self.ledger.open().ok_or(InfraError::NoOpenStage)?;
        let installed = self.fleet.rpacks(node);
        match action.kind {
            ActionKind::Deploy if installed > 0 => return Err(InfraError::DuplicateDeploy(node)),
            ActionKind::Upgrade if installed == 0 => return Err(InfraError::NoServer(node)),
            _ => {}
        }
        let cost = self
            .cost
            .cost_of(action, stage, installed, self.fleet.max_rpacks())
            .map_err(|e| match e {
                InfraError::RpacksOutOfRange { kind, rpacks, installed, max, .. } => {
                    InfraError::RpacksOutOfRange { node, kind, rpacks, installed, max }
                }
                other => other,
            })?;
        self.ledger.charge(node, action, cost)?;
        self.fleet.install(node, stage, action)?;
        Ok(cost)
    }
}
