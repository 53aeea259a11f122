//! Task-to-server assignment within one stage: whole-task cloud offload,
//! cloud-share reduction, cluster offload and fractional multi-server
//! offload, plus satisfaction accounting.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infrastructure::{Fleet, InfraError};
use crate::topology::{delay_coefficients, DelayCoefficients, NodeId, PathTable};
use crate::workload::{Task, TaskId};

/// Relative slack on deadline and capacity comparisons.
pub const SLACK: f64 = 1e-9;

pub fn within(value: f64, limit: f64) -> bool {
    value <= limit + SLACK * limit.abs().max(1.0)
}

#[derive(Debug, Error, PartialEq)]
pub enum OffloadError {
    #[error("task {task} misses its deadline on server {server}: {delay} > {limit}")]
    DeadlineViolation { task: TaskId, server: NodeId, delay: f64, limit: f64 },
    #[error("task {0} is not pending")]
    NotPending(TaskId),
    #[error(transparent)]
    Capacity(#[from] InfraError),
}

/// Delay parameters shared by every server of a run.
#[derive(Debug, Clone, Copy)]
pub struct DelayModel<'a> {
    pub table: &'a PathTable,
    pub cloud: NodeId,
    /// Result size as a fraction of the input size.
    pub zeta: f64,
    pub edge_rate_bps: f64,
    pub cloud_rate_bps: f64,
}

impl<'a> DelayModel<'a> {
    pub fn rate(&self, server: NodeId) -> f64 {
        if server == self.cloud {
            self.cloud_rate_bps
        } else {
            self.edge_rate_bps
        }
    }

    pub fn coefficients(&self, origin: NodeId, server: NodeId) -> DelayCoefficients {
        delay_coefficients(self.table, origin, server, self.zeta, self.rate(server))
    }

    pub fn delay(&self, task: &Task, server: NodeId, bits: f64) -> f64 {
        self.coefficients(task.origin, server).delay(bits)
    }

    pub fn table_nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.table.node_count() as u32).map(NodeId)
    }
}

/// Largest share of `task` the cloud can take while meeting
/// `sigma * deadline`, clamped to `[0, task size]`.
pub fn max_cloud_fraction(task: &Task, model: &DelayModel<'_>) -> f64 {
    model
        .coefficients(task.origin, model.cloud)
        .max_bits_within(task.delay_limit())
        .min(task.size_bits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionAssignment {
    pub task: TaskId,
    pub server: NodeId,
    pub bits: f64,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    pub task: Task,
    /// Bits not yet placed anywhere.
    pub residual: f64,
    pub satisfied: bool,
    /// Set once the task leaves the pending pool (satisfied or drained).
    pub settled: bool,
    pub fractions: Vec<FractionAssignment>,
}

impl TaskState {
    fn pending(&self) -> bool {
        !self.settled
    }

    fn cloud_share(&self, cloud: NodeId) -> f64 {
        self.fractions.iter().filter(|f| f.server == cloud).map(|f| f.bits).sum()
    }
}

/// Final per-stage assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAssignment {
    pub stage: usize,
    pub fractions: Vec<FractionAssignment>,
    pub satisfied: Vec<TaskId>,
    pub gamma: usize,
}

impl StageAssignment {
    /// Writes `stage,task,server,fraction_bits,delay_s,satisfied`.
    pub fn write_csv<W: io::Write>(assignments: &[StageAssignment], out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stage", "task", "server", "fraction_bits", "delay_s", "satisfied"])?;
        for a in assignments {
            for f in &a.fractions {
                let sat = a.satisfied.binary_search(&f.task).is_ok();
                w.write_record([
                    a.stage.to_string(),
                    f.task.to_string(),
                    f.server.to_string(),
                    format!("{:?}", f.bits),
                    format!("{:?}", f.delay_s),
                    (sat as u8).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Mutable offloading state of one stage.
#[derive(Debug, Clone)]
pub struct StageOffload {
    stage: usize,
    tasks: Vec<TaskState>,
}

impl StageOffload {
    pub fn new(stage: usize, tasks: &[Task]) -> Self {
        let tasks = tasks
            .iter()
            .map(|t| TaskState { task: t.clone(), residual: t.size_bits, satisfied: false, settled: false, fractions: Vec::new() })
            .collect();
        Self { stage, tasks }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn tasks(&self) -> &[TaskState] {
        &self.tasks
    }

    pub fn gamma(&self) -> usize {
        self.tasks.iter().filter(|t| t.satisfied).count()
    }

    pub fn pending_count(&self) -> usize {
        self.tasks.iter().filter(|t| t.pending()).count()
    }

    /// Pending tasks as (index, residual bits).
    pub fn pending(&self) -> impl Iterator<Item = (usize, &TaskState)> {
        self.tasks.iter().enumerate().filter(|(_, t)| t.pending())
    }

    pub fn task_state(&self, idx: usize) -> &TaskState {
        &self.tasks[idx]
    }

    /// Whole-task cloud offload. With `mark_satisfied`, every pending task the
    /// cloud can serve within its limit is settled as satisfied. Without it
    /// (the final drain), every pending task is sent wholly to the cloud and
    /// left unsatisfied. Returns the number of newly satisfied tasks.
    pub fn offload_to_cloud(&mut self, model: &DelayModel<'_>, mark_satisfied: bool) -> usize {
        let mut newly = 0;
        for t in self.tasks.iter_mut().filter(|t| t.pending()) {
            let bits = t.task.size_bits;
            let delay = model.delay(&t.task, model.cloud, bits);
            if mark_satisfied && !within(delay, t.task.delay_limit()) {
                continue;
            }
            t.fractions.clear();
            t.fractions.push(FractionAssignment { task: t.task.id, server: model.cloud, bits, delay_s: delay });
            t.residual = 0.0;
            t.settled = true;
            if mark_satisfied {
                t.satisfied = true;
                newly += 1;
            }
        }
        newly
    }

    /// Moves the largest deadline-safe share of every pending task to the
    /// cloud, shrinking its residual.
    pub fn reduce_via_cloud(&mut self, model: &DelayModel<'_>) -> usize {
        let mut newly = 0;
        for t in self.tasks.iter_mut().filter(|t| t.pending()) {
            if t.cloud_share(model.cloud) > 0.0 {
                continue;
            }
            let share = max_cloud_fraction(&t.task, model).min(t.residual);
            if share <= 0.0 {
                continue;
            }
            let delay = model.delay(&t.task, model.cloud, share);
            t.fractions.push(FractionAssignment { task: t.task.id, server: model.cloud, bits: share, delay_s: delay });
            t.residual -= share;
            if t.residual <= SLACK * t.task.size_bits {
                t.residual = 0.0;
                t.settled = true;
                t.satisfied = true;
                newly += 1;
            }
        }
        newly
    }

    /// Offloads every task of `cluster` wholly (its residual) to `server` and
    /// marks it satisfied. Capacity or deadline failures mean the cluster was
    /// built wrongly and abort the run.
    pub fn offload_cluster(
        &mut self,
        model: &DelayModel<'_>,
        fleet: &mut Fleet,
        server: NodeId,
        cluster: &[usize],
    ) -> Result<usize, OffloadError> {
        for &idx in cluster {
            let t = &self.tasks[idx];
            if !t.pending() {
                return Err(OffloadError::NotPending(t.task.id));
            }
            let delay = model.delay(&t.task, server, t.residual);
            if !within(delay, t.task.delay_limit()) {
                return Err(OffloadError::DeadlineViolation {
                    task: t.task.id,
                    server,
                    delay,
                    limit: t.task.delay_limit(),
                });
            }
            fleet.load(server, t.residual)?;
            let t = &mut self.tasks[idx];
            t.fractions.push(FractionAssignment { task: t.task.id, server, bits: t.residual, delay_s: delay });
            t.residual = 0.0;
            t.settled = true;
            t.satisfied = true;
        }
        Ok(cluster.len())
    }

    /// Splits pending tasks over edge servers with spare capacity. Tasks are
    /// visited smallest residual first; servers in increasing per-bit delay.
    /// A task's fractions are committed only if they cover it completely.
    pub fn offload_fractions(&mut self, model: &DelayModel<'_>, fleet: &mut Fleet) -> Result<usize, OffloadError> {
        let mut order: Vec<usize> = self.pending().map(|(i, _)| i).collect();
        order.sort_by(|&a, &b| {
            let (ta, tb) = (&self.tasks[a], &self.tasks[b]);
            ta.residual.total_cmp(&tb.residual).then(ta.task.id.cmp(&tb.task.id))
        });
        let servers: Vec<NodeId> = fleet.servers().filter(|s| s.rpacks > 0).map(|s| s.node).collect();
        let mut newly = 0;
        for idx in order {
            let task = self.tasks[idx].task.clone();
            let mut ranked: Vec<(f64, NodeId)> = servers
                .iter()
                .filter(|&&s| fleet.residual(s) > 0.0)
                .map(|&s| (model.coefficients(task.origin, s).per_bit, s))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut remaining = self.tasks[idx].residual;
            let mut tentative = Vec::new();
            for (_, s) in ranked {
                let spare = fleet.residual(s);
                if remaining <= 0.0 || spare <= 0.0 {
                    continue;
                }
                let bits = remaining.min(spare);
                let delay = model.delay(&task, s, bits);
                if within(delay, task.delay_limit()) {
                    remaining -= bits;
                    tentative.push(FractionAssignment { task: task.id, server: s, bits, delay_s: delay });
                }
            }
            if remaining <= SLACK * task.size_bits {
                for f in &tentative {
                    fleet.load(f.server, f.bits)?;
                }
                let t = &mut self.tasks[idx];
                t.fractions.extend(tentative);
                t.residual = 0.0;
                t.settled = true;
                t.satisfied = true;
                newly += 1;
            }
        }
        Ok(newly)
    }

    pub fn finish(self) -> StageAssignment {
        let mut fractions = Vec::new();
        let mut satisfied = Vec::new();
        for t in self.tasks {
            if t.satisfied {
                satisfied.push(t.task.id);
            }
            fractions.extend(t.fractions);
        }
        satisfied.sort();
        let gamma = satisfied.len();
        StageAssignment { stage: self.stage, fractions, satisfied, gamma }
    }
}
