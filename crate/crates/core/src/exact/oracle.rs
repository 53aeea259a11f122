//! Exhaustive planner for tiny instances: every affordable per-stage action
//! vector is enumerated and each stage's best satisfiable task set is found
//! by max-flow.

use std::collections::HashMap;

use crate::infrastructure::{Action, BudgetLedger, Infrastructure, BUDGET_EPS};
use crate::instance::Instance;
use crate::offload::{FractionAssignment, StageAssignment};
use crate::planner::{snapshot, ActionRecord, PlanTrace, StageTrace};
use crate::topology::NodeId;

use super::flow::Transport;
use super::ExactError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLimits {
    pub max_nodes: usize,
    pub max_stages: usize,
    pub max_stage_tasks: usize,
    pub max_rpacks: u32,
    /// Upper bound on (M_max + 1)^(APs * T).
    pub max_sequences: f64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self { max_nodes: 6, max_stages: 3, max_stage_tasks: 16, max_rpacks: 3, max_sequences: 2e6 }
    }
}

impl OracleLimits {
    pub fn check(&self, instance: &Instance) -> Result<(), ExactError> {
        let n = instance.topology.node_count();
        let big_t = instance.stages;
        let m = instance.params.max_rpacks;
        let most = instance.workloads.iter().map(|w| w.tasks.len()).max().unwrap_or(0);
        let seq = ((m + 1) as f64).powi(((n - 1) * big_t) as i32);
        let fail = |what: String| Err(ExactError::TooLarge(what));
        if n > self.max_nodes {
            return fail(format!("{n} nodes exceed the oracle limit of {}", self.max_nodes));
        }
        if instance.eval_stages() > self.max_stages {
            return fail(format!("{} stages exceed the oracle limit of {}", instance.eval_stages(), self.max_stages));
        }
        if most > self.max_stage_tasks {
            return fail(format!("{most} tasks in one stage exceed the oracle limit of {}", self.max_stage_tasks));
        }
        if m > self.max_rpacks {
            return fail(format!("M_max = {m} exceeds the oracle limit of {}", self.max_rpacks));
        }
        if seq > self.max_sequences {
            return fail(format!("{seq:e} action sequences exceed the oracle limit of {:e}", self.max_sequences));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    /// Mean satisfied tasks per stage.
    pub gamma_bar: f64,
    pub gamma_bar_pct: f64,
    pub per_stage: Vec<usize>,
    /// A trace realising the optimum.
    pub witness: PlanTrace,
    /// Search-tree nodes visited.
    pub nodes_explored: u64,
}

#[derive(Clone)]
struct StageBest {
    satisfied: Vec<usize>,
    fractions: Vec<FractionAssignment>,
}

type Decision = Vec<(NodeId, Action)>;

struct Search<'a> {
    inst: &'a Instance,
    aps: Vec<NodeId>,
    memo: HashMap<(usize, Vec<u32>), StageBest>,
    explored: u64,
}

impl<'a> Search<'a> {
    fn stage_best(&mut self, t: usize, config: &[u32]) -> &StageBest {
        let key = (t, config.to_vec());
        if !self.memo.contains_key(&key) {
            let cp = self.inst.params.rpack_capacity_bits;
            let servers = self
                .aps
                .iter()
                .zip(config)
                .filter(|(_, &m)| m > 0)
                .map(|(&s, &m)| (s, m as f64 * cp))
                .collect();
            let tasks = &self.inst.workloads[t - 1].tasks;
            let tr = Transport::new(tasks, servers, self.inst.delay_model());
            let (satisfied, fractions) = tr.max_satisfiable();
            self.memo.insert(key.clone(), StageBest { satisfied, fractions });
        }
        &self.memo[&key]
    }

    fn value(&mut self, t: usize, config: &[u32]) -> usize {
        self.stage_best(t, config).satisfied.len()
    }

    /// Best total satisfied count from stage `t` on, with the decisions.
    fn search(&mut self, t: usize, config: &[u32], carry: f64) -> (usize, Vec<Decision>) {
        self.explored += 1;
        let eval = self.inst.eval_stages();
        if t > eval {
            return (0, Vec::new());
        }
        if t > self.inst.stages {
            let v = (t..=eval).map(|k| self.value(k, config)).sum();
            return (v, Vec::new());
        }
        let available = self.inst.budget / self.inst.stages as f64 + carry;
        let mut best: Option<(usize, Vec<Decision>)> = None;
        let mut cur = config.to_vec();
        let mut decision = Vec::new();
        self.enumerate(t, 0, available, 0.0, &mut cur, &mut decision, &mut best);
        best.expect("the empty action vector is always affordable")
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate(
        &mut self,
        t: usize,
        i: usize,
        available: f64,
        spent: f64,
        cur: &mut Vec<u32>,
        decision: &mut Decision,
        best: &mut Option<(usize, Vec<Decision>)>,
    ) {
        if i == self.aps.len() {
            let carry = (available - spent).max(0.0);
            let here = self.value(t, cur);
            let (rest, mut tail) = self.search(t + 1, &cur.clone(), carry);
            if best.as_ref().is_none_or(|b| here + rest > b.0) {
                tail.insert(0, decision.clone());
                *best = Some((here + rest, tail));
            }
            return;
        }
        self.enumerate(t, i + 1, available, spent, cur, decision, best);
        let max = self.inst.params.max_rpacks;
        let node = self.aps[i];
        let installed = cur[i];
        let slack = BUDGET_EPS * self.inst.budget.max(1.0);
        for m in 1..=max - installed {
            let action = if installed == 0 { Action::deploy(m) } else { Action::upgrade(m) };
            let cost = self.inst.cost.price(action, t);
            if cost > available - spent + slack {
                break;
            }
            cur[i] = installed + m;
            decision.push((node, action));
            self.enumerate(t, i + 1, available, spent + cost, cur, decision, best);
            decision.pop();
            cur[i] = installed;
        }
    }
}

/// Optimal plan over every affordable action sequence.
pub fn exact_plan(instance: &Instance, limits: &OracleLimits) -> Result<ExactResult, ExactError> {
    limits.check(instance)?;
    let aps = instance.access_points();
    let initial: HashMap<NodeId, u32> = instance.initial_servers.iter().copied().collect();
    let config: Vec<u32> = aps.iter().map(|a| *initial.get(a).unwrap_or(&0)).collect();
    let mut search = Search { inst: instance, aps: aps.clone(), memo: HashMap::new(), explored: 0 };
    let (_, decisions) = search.search(1, &config, 0.0);

    // Replay the optimum through the ledger to produce a checkable trace.
    let mut infra = Infrastructure::new(instance.cost, instance.initial_fleet(), BudgetLedger::new(instance.budget, instance.stages));
    let model = instance.delay_model();
    let cloud = instance.topology.cloud();
    let mut cfg = config;
    let mut stages = Vec::new();
    for (i, w) in instance.workloads.iter().enumerate() {
        let t = i + 1;
        let available = infra.ledger.open_stage(t);
        let mut actions = Vec::new();
        for &(node, action) in decisions.get(i).map(|d| d.as_slice()).unwrap_or(&[]) {
            let cost = infra.commit(node, action).map_err(|e| ExactError::Invalid(e.to_string()))?;
            let j = aps.iter().position(|&a| a == node).expect("decision on an access point");
            cfg[j] += action.rpacks;
            actions.push(ActionRecord { node, kind: action.kind, rpacks: action.rpacks, cost, gain: 0 });
        }
        let best = search.stage_best(t, &cfg).clone();
        infra.fleet.reset_workloads();
        for f in best.fractions.iter().filter(|f| f.server != cloud) {
            infra.fleet.load(f.server, f.bits).map_err(|e| ExactError::Invalid(e.to_string()))?;
        }
        let mut fractions = best.fractions;
        for (k, task) in w.tasks.iter().enumerate() {
            if best.satisfied.binary_search(&k).is_err() {
                let delay_s = model.delay(task, cloud, task.size_bits);
                fractions.push(FractionAssignment { task: task.id, server: cloud, bits: task.size_bits, delay_s });
            }
        }
        let mut satisfied: Vec<_> = best.satisfied.iter().map(|&k| w.tasks[k].id).collect();
        satisfied.sort();
        let gamma = satisfied.len();
        let spent = actions.iter().map(|a| a.cost).sum();
        let servers = snapshot(&infra);
        let carryover = infra.ledger.close_stage();
        stages.push(StageTrace {
            stage: t,
            tasks: w.tasks.len(),
            planned_tasks: w.tasks.len(),
            predicted: false,
            allocation: infra.ledger.allocation(t),
            available,
            spent,
            carryover,
            actions,
            servers,
            assignment: StageAssignment { stage: t, fractions, satisfied, gamma },
            gamma,
        });
    }
    let witness = PlanTrace::assemble("oracle", instance, stages);
    Ok(ExactResult {
        gamma_bar: witness.gamma_bar,
        gamma_bar_pct: witness.gamma_bar_pct,
        per_stage: witness.stages.iter().map(|s| s.gamma).collect(),
        witness,
        nodes_explored: search.explored,
    })
}
