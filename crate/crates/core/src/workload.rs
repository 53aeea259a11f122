//! Per-stage task populations: initial generation, growth, size inflation,
//! deadline tightening and final-stage demand prediction.

use std::fmt;
use std::io;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("topology has no access points to host tasks")]
    NoAccessPoints,
    #[error("invalid workload parameter: {0}")]
    InvalidParameter(String),
    #[error("workload csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A task as seen at one stage. `base_*` hold the stage-1 draws the aged
/// values are derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub origin: NodeId,
    pub deadline_s: f64,
    pub size_bits: f64,
    pub sigma: f64,
    pub base_deadline_s: f64,
    pub base_size_bits: f64,
    pub grows_size: bool,
    pub tightens_deadline: bool,
}

impl Task {
    /// Tolerance-scaled deadline `sigma * deadline`.
    pub fn delay_limit(&self) -> f64 {
        self.sigma * self.deadline_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    /// Probability that a task is intolerant (`sigma = 1`).
    pub intolerant_probability: f64,
    pub min_sigma: f64,
    pub max_sigma: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self { intolerant_probability: 0.5, min_sigma: 1.5, max_sigma: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskProfile {
    pub size_choices_bits: Vec<f64>,
    pub deadline_choices_s: Vec<f64>,
    pub tolerance: ToleranceSpec,
}

impl Default for TaskProfile {
    fn default() -> Self {
        Self {
            size_choices_bits: vec![10e9, 20e9, 30e9],
            deadline_choices_s: vec![3.0, 5.0, 10.0],
            tolerance: ToleranceSpec::default(),
        }
    }
}

impl TaskProfile {
    fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidParameter(m.into()));
        if self.size_choices_bits.is_empty() || self.size_choices_bits.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return bad("size choices must be nonempty and positive");
        }
        if self.deadline_choices_s.is_empty() || self.deadline_choices_s.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return bad("deadline choices must be nonempty and positive");
        }
        let t = &self.tolerance;
        if !(0.0..=1.0).contains(&t.intolerant_probability) {
            return bad("intolerant probability must lie in [0, 1]");
        }
        if !(t.min_sigma >= 1.0 && t.max_sigma >= t.min_sigma && t.max_sigma.is_finite()) {
            return bad("tolerance range must satisfy 1 <= min <= max");
        }
        Ok(())
    }
}

/// Demand growth parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthParams {
    /// Per-stage growth rate of the task count.
    pub task_growth: f64,
    /// Share of tasks whose size grows.
    pub size_share: f64,
    /// Share of tasks whose deadline tightens.
    pub deadline_share: f64,
    pub size_growth: f64,
    pub deadline_tightening: f64,
    /// Prediction horizon in stages used when planning the final stage.
    pub horizon: u32,
}

impl Default for GrowthParams {
    fn default() -> Self {
        Self {
            task_growth: 0.5,
            size_share: 0.2,
            deadline_share: 0.2,
            size_growth: 0.5,
            deadline_tightening: 0.5,
            horizon: 0,
        }
    }
}

impl GrowthParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let ok = self.task_growth >= 0.0
            && self.task_growth.is_finite()
            && (0.0..=1.0).contains(&self.size_share)
            && (0.0..=1.0).contains(&self.deadline_share)
            && self.size_growth >= 0.0
            && self.size_growth.is_finite()
            && (0.0..=1.0).contains(&self.deadline_tightening);
        if ok {
            Ok(())
        } else {
            Err(WorkloadError::InvalidParameter(format!("{self:?}")))
        }
    }
}

/// Rounds half up; the tiny bias absorbs representation error in `x.5`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// `round((1 + growth)^exponent * initial)`.
pub fn task_count(initial: usize, growth: f64, exponent: u32) -> usize {
    round_half_up((1.0 + growth).powi(exponent as i32) * initial as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageWorkload {
    pub stage: usize,
    /// Aging exponent applied to the stage-1 draws (`stage - 1` normally).
    pub exponent: u32,
    pub initial_count: usize,
    pub tasks: Vec<Task>,
}

impl StageWorkload {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Seeded task generator bound to one topology.
#[derive(Debug, Clone)]
pub struct WorkloadGenerator {
    aps: Vec<NodeId>,
    profile: TaskProfile,
    growth: GrowthParams,
    seed: u64,
}

impl WorkloadGenerator {
    pub fn new(topology: &Topology, profile: TaskProfile, growth: GrowthParams, seed: u64) -> Result<Self, WorkloadError> {
        let aps = topology.access_points();
        if aps.is_empty() {
            return Err(WorkloadError::NoAccessPoints);
        }
        profile.validate()?;
        growth.validate()?;
        Ok(Self { aps, profile, growth, seed })
    }

    pub fn growth(&self) -> &GrowthParams {
        &self.growth
    }

    pub fn initial(&self, count: usize) -> StageWorkload {
        let mut rng = rng::stream(self.seed, &[0x1a, 1, 0]);
        let mut tasks: Vec<Task> = (0..count).map(|i| self.draw(&mut rng, TaskId(i as u32))).collect();
        self.flag_new(&mut tasks, 0, &mut rng);
        StageWorkload { stage: 1, exponent: 0, initial_count: count, tasks }
    }

    /// Next stage's workload. With `predict`, the aging exponent becomes
    /// `next_stage - 1 + horizon`.
    pub fn evolve(&self, prev: &StageWorkload, next_stage: usize, predict: bool) -> StageWorkload {
        let mut exponent = next_stage.saturating_sub(1) as u32;
        if predict {
            exponent = exponent.saturating_add(self.growth.horizon);
        }
        self.age_to(prev, next_stage, exponent)
    }

    /// Grows `prev` to the count implied by `exponent` and re-ages every task.
    pub fn age_to(&self, prev: &StageWorkload, stage: usize, exponent: u32) -> StageWorkload {
        let target = task_count(prev.initial_count, self.growth.task_growth, exponent).max(prev.len());
        let mut rng = rng::stream(self.seed, &[0x1a, stage as u64, exponent as u64, prev.len() as u64]);
        let mut tasks = prev.tasks.clone();
        let next_id = tasks.iter().map(|t| t.id.0 + 1).max().unwrap_or(0);
        let existing = tasks.len();
        for i in 0..(target - existing) {
            tasks.push(self.draw(&mut rng, TaskId(next_id + i as u32)));
        }
        self.flag_new(&mut tasks, existing, &mut rng);
        for t in &mut tasks {
            age(t, &self.growth, exponent);
        }
        StageWorkload { stage, exponent, initial_count: prev.initial_count, tasks }
    }

    fn draw<R: Rng>(&self, rng: &mut R, id: TaskId) -> Task {
        let origin = self.aps[rng.gen_range(0..self.aps.len())];
        let size = self.profile.size_choices_bits[rng.gen_range(0..self.profile.size_choices_bits.len())];
        let deadline = self.profile.deadline_choices_s[rng.gen_range(0..self.profile.deadline_choices_s.len())];
        let tol = &self.profile.tolerance;
        let sigma = if rng.gen_bool(tol.intolerant_probability) {
            1.0
        } else if tol.max_sigma > tol.min_sigma {
            rng.gen_range(tol.min_sigma..=tol.max_sigma)
        } else {
            tol.min_sigma
        };
        Task {
            id,
            origin,
            deadline_s: deadline,
            size_bits: size,
            sigma,
            base_deadline_s: deadline,
            base_size_bits: size,
            grows_size: false,
            tightens_deadline: false,
        }
    }

    /// Flags tasks `tasks[first_new..]` so that exactly `floor(share * n)`
    /// tasks carry each flag overall (existing flags are never revoked).
    fn flag_new<R: Rng>(&self, tasks: &mut [Task], first_new: usize, rng: &mut R) {
        let n = tasks.len();
        let fresh = n - first_new;
        let targets = [
            (share_count(self.growth.size_share, n), tasks.iter().filter(|t| t.grows_size).count()),
            (share_count(self.growth.deadline_share, n), tasks.iter().filter(|t| t.tightens_deadline).count()),
        ];
        for (which, (target, have)) in targets.into_iter().enumerate() {
            let k = target.saturating_sub(have).min(fresh);
            for idx in sample(rng, fresh, k).into_iter() {
                let t = &mut tasks[first_new + idx];
                if which == 0 {
                    t.grows_size = true;
                } else {
                    t.tightens_deadline = true;
                }
            }
        }
    }
}

fn share_count(share: f64, n: usize) -> usize {
    (share * n as f64 + 1e-9).floor() as usize
}

fn age(task: &mut Task, growth: &GrowthParams, exponent: u32) {
    task.size_bits = if task.grows_size {
        (1.0 + growth.size_growth).powi(exponent as i32) * task.base_size_bits
    } else {
        task.base_size_bits
    };
    task.deadline_s = if task.tightens_deadline {
        (1.0 - growth.deadline_tightening).powi(exponent as i32) * task.base_deadline_s
    } else {
        task.base_deadline_s
    };
}

/// Uniformly distributes `count` tasks over the access points.
pub fn generate_initial(
    topology: &Topology,
    count: usize,
    profile: &TaskProfile,
    growth: &GrowthParams,
    seed: u64,
) -> Result<StageWorkload, WorkloadError> {
    Ok(WorkloadGenerator::new(topology, profile.clone(), growth.clone(), seed)?.initial(count))
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    stage: usize,
    task_id: u32,
    origin: u32,
    deadline_s: f64,
    size_bits: f64,
    sigma: f64,
    flag_b: u8,
    flag_tau: u8,
}

/// Writes `stage,task_id,origin,deadline_s,size_bits,sigma,flag_b,flag_tau`.
pub fn write_csv<W: io::Write>(stages: &[StageWorkload], out: W) -> Result<(), WorkloadError> {
    let mut w = csv::Writer::from_writer(out);
    for s in stages {
        for t in &s.tasks {
            w.serialize(CsvRow {
                stage: s.stage,
                task_id: t.id.0,
                origin: t.origin.0,
                deadline_s: t.deadline_s,
                size_bits: t.size_bits,
                sigma: t.sigma,
                flag_b: t.grows_size as u8,
                flag_tau: t.tightens_deadline as u8,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a dump back. Stage-1 draws are not part of the format, so the
/// loaded tasks use their dumped values as base values.
pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<StageWorkload>, WorkloadError> {
    let mut stages: Vec<StageWorkload> = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize::<CsvRow>() {
        let row = row?;
        let finite = row.size_bits.is_finite() && row.deadline_s.is_finite() && row.sigma.is_finite();
        if !(finite && row.size_bits > 0.0 && row.deadline_s > 0.0 && row.sigma >= 1.0) {
            return Err(WorkloadError::InvalidParameter(format!("task {} has invalid attributes", row.task_id)));
        }
        let task = Task {
            id: TaskId(row.task_id),
            origin: NodeId(row.origin),
            deadline_s: row.deadline_s,
            size_bits: row.size_bits,
            sigma: row.sigma,
            base_deadline_s: row.deadline_s,
            base_size_bits: row.size_bits,
            grows_size: row.flag_b != 0,
            tightens_deadline: row.flag_tau != 0,
        };
        match stages.last_mut() {
            Some(s) if s.stage == row.stage => s.tasks.push(task),
            _ => stages.push(StageWorkload {
                stage: row.stage,
                exponent: row.stage.saturating_sub(1) as u32,
                initial_count: 0,
                tasks: vec![task],
            }),
        }
    }
    let first = stages.first().map(|s| s.len()).unwrap_or(0);
    for s in &mut stages {
        s.initial_count = first;
    }
    Ok(stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Link, PropagationOverrides};

    fn star(aps: u32) -> Topology {
        let links = (1..=aps)
            .map(|i| Link { a: NodeId(0), b: NodeId(i), length_m: 0.0, rate_bps: 2e9 })
            .collect();
        Topology::new(aps as usize + 1, NodeId(0), links, 2e8, PropagationOverrides::default()).unwrap()
    }

    fn gen(growth: GrowthParams) -> WorkloadGenerator {
        WorkloadGenerator::new(&star(4), TaskProfile::default(), growth, 42).unwrap()
    }

    #[test]
    fn zero_count_is_empty() {
        assert!(gen(GrowthParams::default()).initial(0).is_empty());
    }

    #[test]
    fn same_seed_same_tasks() {
        let g = gen(GrowthParams::default());
        assert_eq!(g.initial(100), g.initial(100));
        let other = WorkloadGenerator::new(&star(4), TaskProfile::default(), GrowthParams::default(), 43).unwrap();
        assert_ne!(g.initial(100), other.initial(100));
    }

    #[test]
    fn flag_count_is_floor_of_share() {
        let w = gen(GrowthParams::default()).initial(100);
        assert_eq!(w.tasks.iter().filter(|t| t.grows_size).count(), 20);
        assert_eq!(w.tasks.iter().filter(|t| t.tightens_deadline).count(), 20);
        let w = gen(GrowthParams::default()).initial(7);
        assert_eq!(w.tasks.iter().filter(|t| t.grows_size).count(), 1);
    }

    #[test]
    fn six_tasks_grow_to_nine() {
        let g = gen(GrowthParams::default());
        let w1 = g.initial(6);
        let w2 = g.evolve(&w1, 2, false);
        assert_eq!(w2.len(), 9);
        assert_eq!(&w2.tasks[..6].iter().map(|t| t.id).collect::<Vec<_>>(), &w1.tasks.iter().map(|t| t.id).collect::<Vec<_>>());
    }

    #[test]
    fn aging_formulas() {
        let growth = GrowthParams::default();
        let mut t = Task {
            id: TaskId(0),
            origin: NodeId(1),
            deadline_s: 10.0,
            size_bits: 10e9,
            sigma: 1.0,
            base_deadline_s: 10.0,
            base_size_bits: 10e9,
            grows_size: true,
            tightens_deadline: true,
        };
        age(&mut t, &growth, 1);
        assert_eq!(t.size_bits, 15e9);
        age(&mut t, &growth, 2);
        assert_eq!(t.deadline_s, 2.5);
    }

    #[test]
    fn prediction_uses_extended_exponent() {
        let growth = GrowthParams { horizon: 2, ..Default::default() };
        let g = gen(growth);
        let w1 = g.initial(10);
        let predicted = g.evolve(&w1, 2, true);
        assert_eq!(predicted.exponent, 3);
        assert_eq!(predicted.len(), task_count(10, 0.5, 3));
        let g0 = gen(GrowthParams::default());
        assert_eq!(g0.evolve(&w1, 2, true), g0.evolve(&w1, 2, false));
    }

    #[test]
    fn csv_round_trip() {
        let g = gen(GrowthParams::default());
        let w1 = g.initial(5);
        let w2 = g.evolve(&w1, 2, false);
        let mut buf = Vec::new();
        write_csv(&[w1.clone(), w2.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("stage,task_id,origin,deadline_s,size_bits,sigma,flag_b,flag_tau\n"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].len(), w2.len());
        assert_eq!(back[1].tasks[3].size_bits, w2.tasks[3].size_bits);
    }

    #[test]
    fn rejects_empty_choice_sets() {
        let profile = TaskProfile { size_choices_bits: vec![], ..Default::default() };
        assert!(WorkloadGenerator::new(&star(2), profile, GrowthParams::default(), 1).is_err());
        let lone = Topology::new(1, NodeId(0), vec![], 2e8, PropagationOverrides::default()).unwrap();
        assert!(matches!(
            WorkloadGenerator::new(&lone, TaskProfile::default(), GrowthParams::default(), 1),
            Err(WorkloadError::NoAccessPoints)
        ));
    }
}
