//! Candidate clusters and the greedy deploy/upgrade loop.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::infrastructure::{Action, ActionKind, Infrastructure};
use crate::offload::{within, DelayModel, StageOffload, SLACK};
use crate::topology::NodeId;

use super::PlanError;

/// Which actions a generation pass may propose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionPolicy {
    pub deploy: bool,
    pub upgrade: bool,
    /// Forces every deployment to this many rpacks.
    pub fixed_deploy: Option<u32>,
}

impl ActionPolicy {
    pub const ANY: Self = Self { deploy: true, upgrade: true, fixed_deploy: None };
    pub const DEPLOY: Self = Self { deploy: true, upgrade: false, fixed_deploy: None };
    pub const UPGRADE: Self = Self { deploy: false, upgrade: true, fixed_deploy: None };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCandidate {
    pub node: NodeId,
    pub action: Action,
    /// Indices into the stage's task list, in offload order.
    pub tasks: Vec<usize>,
    pub cost: f64,
}

impl ClusterCandidate {
    pub fn gain(&self) -> usize {
        self.tasks.len()
    }

    /// Satisfied tasks per unit of money.
    pub fn ratio(&self) -> f64 {
        if self.cost > 0.0 {
            self.gain() as f64 / self.cost
        } else {
            f64::INFINITY
        }
    }
}

fn rank(a: &ClusterCandidate, b: &ClusterCandidate) -> Ordering {
    b.ratio()
        .total_cmp(&a.ratio())
        .then(b.gain().cmp(&a.gain()))
        .then(a.node.cmp(&b.node))
}

/// Builds one candidate per node in `nodes`: the affordable action with the
/// largest gain (fewest rpacks on ties). A cluster is the longest prefix of
/// the node's deadline-feasible pending tasks, smallest residual first, that
/// fits the rpacks added by the action. Returned best ratio first.
pub fn generate_clusters(
    offload: &StageOffload,
    nodes: &BTreeSet<NodeId>,
    infra: &Infrastructure,
    model: &DelayModel<'_>,
    policy: ActionPolicy,
) -> Vec<ClusterCandidate> {
    let Some(stage) = infra.ledger.open() else { return Vec::new() };
    let fleet = &infra.fleet;
    let max = fleet.max_rpacks();
    let cp = fleet.rpack_capacity();
    let mut out = Vec::new();

    for &node in nodes {
        let installed = fleet.rpacks(node);
        let (kind, range) = if installed == 0 {
            if !policy.deploy {
                continue;
            }
            match policy.fixed_deploy {
                Some(m) => (ActionKind::Deploy, m.min(max)..=m.min(max)),
                None => (ActionKind::Deploy, 1..=max),
            }
        } else {
            if !policy.upgrade || installed >= max {
                continue;
            }
            (ActionKind::Upgrade, 1..=max - installed)
        };

        let mut feasible: Vec<(f64, usize)> = offload
            .pending()
            .filter(|(_, t)| within(model.delay(&t.task, node, t.residual), t.task.delay_limit()))
            .map(|(i, t)| (t.residual, i))
            .collect();
        if feasible.is_empty() {
            continue;
        }
        feasible.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(offload.task_state(a.1).task.id.cmp(&offload.task_state(b.1).task.id))
        });
        let prefix: Vec<f64> = feasible
            .iter()
            .scan(0.0, |acc, (r, _)| {
                *acc += r;
                Some(*acc)
            })
            .collect();

        let mut best: Option<(usize, Action, f64)> = None;
        for m in range {
            let action = Action { kind, rpacks: m };
            let cost = infra.cost.price(action, stage);
            if !infra.ledger.can_afford(cost) {
                continue;
            }
            let cap = m as f64 * cp;
            let count = prefix.partition_point(|&s| s <= cap + SLACK * cap);
            if best.is_none_or(|(c, ..)| count > c) {
                best = Some((count, action, cost));
            }
        }
        if let Some((count, action, cost)) = best {
            if count > 0 {
                let tasks = feasible[..count].iter().map(|&(_, i)| i).collect();
                out.push(ClusterCandidate { node, action, tasks, cost });
            }
        }
    }
    out.sort_by(rank);
    out
}

/// Order in which action kinds are tried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Priority {
    /// Deployments and upgrades compete on ratio.
    Mixed,
    DeployFirst,
    UpgradeFirst,
    /// Deployments of a fixed size only.
    DeployOnly(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub node: NodeId,
    pub kind: ActionKind,
    pub rpacks: u32,
    pub cost: f64,
    pub gain: usize,
}

/// Repeatedly commits the best cluster and offloads it, until no task is
/// pending, money runs below the cheapest action, or no node is left.
pub fn deploy_upgrade_offload(
    offload: &mut StageOffload,
    infra: &mut Infrastructure,
    model: &DelayModel<'_>,
    priority: Priority,
) -> Result<Vec<ActionRecord>, PlanError> {
    let Some(stage) = infra.ledger.open() else { return Ok(Vec::new()) };
    let cheapest = match priority {
        Priority::DeployOnly(m) => infra.cost.price(Action::deploy(m), stage),
        _ => infra.cost.price(Action::upgrade(1), stage).min(infra.cost.price(Action::deploy(1), stage)),
    };
    let mut nodes: BTreeSet<NodeId> = model.table_nodes().filter(|&n| n != model.cloud).collect();
    let mut records = Vec::new();

    while offload.pending_count() > 0 && infra.ledger.can_afford(cheapest) && !nodes.is_empty() {
        let pick = |p| generate_clusters(offload, &nodes, infra, model, p).into_iter().next();
        let top = match priority {
            Priority::Mixed => pick(ActionPolicy::ANY),
            Priority::DeployFirst => pick(ActionPolicy::DEPLOY).or_else(|| pick(ActionPolicy::UPGRADE)),
            Priority::UpgradeFirst => pick(ActionPolicy::UPGRADE).or_else(|| pick(ActionPolicy::DEPLOY)),
            Priority::DeployOnly(m) => pick(ActionPolicy { fixed_deploy: Some(m), ..ActionPolicy::DEPLOY }),
        };
        let Some(top) = top else { break };
        let cost = infra.commit(top.node, top.action)?;
        offload.offload_cluster(model, &mut infra.fleet, top.node, &top.tasks)?;
        nodes.remove(&top.node);
        records.push(ActionRecord { node: top.node, kind: top.action.kind, rpacks: top.action.rpacks, cost, gain: top.gain() });
    }
    Ok(records)
}
