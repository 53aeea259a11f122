//! Independent audit of a [`PlanTrace`]: replays actions and money, and
//! recomputes every fraction delay from the raw link list.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::infrastructure::ActionKind;
use crate::instance::Instance;
use crate::planner::PlanTrace;
use crate::topology::NodeId;
use crate::workload::Task;

const REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub stage: usize,
    pub rule: &'static str,
    pub detail: String,
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= REL * scale.abs().max(1.0)
}

struct Delays<'a> {
    inst: &'a Instance,
    rates: HashMap<(NodeId, NodeId), f64>,
    lengths: HashMap<(NodeId, NodeId), f64>,
}

impl<'a> Delays<'a> {
    fn new(inst: &'a Instance) -> Self {
        let mut rates = HashMap::new();
        let mut lengths = HashMap::new();
        for l in inst.topology.links() {
            for key in [(l.a, l.b), (l.b, l.a)] {
                rates.insert(key, l.rate_bps);
                lengths.insert(key, l.length_m);
            }
        }
        Self { inst, rates, lengths }
    }

    /// (propagation, transfer seconds per bit) along the routed path.
    fn route(&self, from: NodeId, to: NodeId) -> Option<(f64, f64)> {
        if from == to {
            return Some((0.0, 0.0));
        }
        let nodes = &self.inst.paths.get(from, to).nodes;
        if nodes.first() != Some(&from) || nodes.last() != Some(&to) {
            return None;
        }
        let (mut per_bit, mut dist) = (0.0, 0.0);
        for w in nodes.windows(2) {
            per_bit += 1.0 / self.rates.get(&(w[0], w[1]))?;
            dist += self.lengths[&(w[0], w[1])];
        }
        let cloud = self.inst.topology.cloud();
        let ov = self.inst.topology.overrides();
        let fixed = if from == cloud || to == cloud { ov.ap_cloud_s } else { ov.ap_ap_s };
        Some((fixed.unwrap_or(dist / self.inst.topology.propagation_speed()), per_bit))
    }

    fn delay(&self, task: &Task, server: NodeId, bits: f64) -> Option<f64> {
        let (p1, r1) = self.route(task.origin, server)?;
        let (p2, r2) = self.route(server, task.origin)?;
        let p = &self.inst.params;
        let rate = if server == self.inst.topology.cloud() { p.cloud_rate_bps } else { p.edge_rate_bps };
        Some(p1 + bits * r1 + bits / rate + p2 + p.zeta * bits * r2)
    }
}

/// Every rule the trace breaks; empty means the trace is consistent.
pub fn check_trace(instance: &Instance, trace: &PlanTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |stage: usize, rule: &'static str, detail: String| out.push(Violation { stage, rule, detail });
    if trace.stages.len() != instance.eval_stages() {
        flag(0, "stages", format!("{} stages recorded, {} expected", trace.stages.len(), instance.eval_stages()));
    }

    let delays = Delays::new(instance);
    let cloud = instance.topology.cloud();
    let p = instance.params;
    let big_t = instance.stages;
    let budget = instance.budget;
    let mut rpacks: BTreeMap<NodeId, u32> = instance.initial_servers.iter().copied().collect();
    let mut carry = 0.0;
    let mut cum_spend = 0.0;
    let mut cum_alloc = 0.0;
    let mut satisfied_total = 0usize;
    let mut task_total = 0usize;

    for (i, st) in trace.stages.iter().enumerate() {
        let t = i + 1;
        if st.stage != t {
            flag(t, "stages", format!("stage recorded as {}", st.stage));
        }

        // Actions and prices.
        let alloc = if t <= big_t { budget / big_t as f64 } else { 0.0 };
        let mut spend = 0.0;
        let mut touched = BTreeSet::new();
        for a in &st.actions {
            if t > big_t {
                flag(t, "horizon", format!("action on {} after the last planning stage", a.node));
            }
            if a.node == cloud || a.node.index() >= instance.topology.node_count() {
                flag(t, "action", format!("action on non-access-point {}", a.node));
                continue;
            }
            if !touched.insert(a.node) {
                flag(t, "action", format!("two actions on {} in one stage", a.node));
            }
            let factor = (1.0 - instance.cost.depreciation).powi(t as i32 - 1);
            let mut price = a.rpacks as f64 * instance.cost.rpack_cost * factor;
            let have = rpacks.get(&a.node).copied().unwrap_or(0);
            match a.kind {
                ActionKind::Deploy => {
                    price += instance.cost.infra_cost * factor;
                    if have > 0 {
                        flag(t, "action", format!("second deployment on {}", a.node));
                    }
                }
                ActionKind::Upgrade if have == 0 => flag(t, "action", format!("upgrade of missing server {}", a.node)),
                ActionKind::Upgrade => {}
            }
            if a.rpacks == 0 || have + a.rpacks > p.max_rpacks {
                flag(t, "rpack_limit", format!("{} would hold {} rpacks", a.node, have + a.rpacks));
            }
            if !close(price, a.cost, price) {
                flag(t, "cost", format!("{} {:?} recorded at {}, priced {}", a.node, a.kind, a.cost, price));
            }
            rpacks.insert(a.node, have + a.rpacks);
            spend += price;
        }

        // Money.
        cum_spend += spend;
        cum_alloc += alloc;
        if cum_spend > cum_alloc + REL * budget.max(1.0) * (t as f64) {
            flag(t, "budget", format!("cumulative spend {cum_spend} exceeds cumulative allocation {cum_alloc}"));
        }
        let expect_carry = (carry + alloc - spend).max(0.0);
        if !close(st.spent, spend, budget) || !close(st.carryover, expect_carry, budget) || !close(st.allocation, alloc, budget) {
            flag(
                t,
                "carryover",
                format!("spent {} carry {} allocation {}; expected {spend}, {expect_carry}, {alloc}", st.spent, st.carryover, st.allocation),
            );
        }
        carry = expect_carry;

        // Server state.
        let recorded: BTreeMap<NodeId, u32> = st.servers.iter().map(|s| (s.node, s.rpacks)).collect();
        let replayed: BTreeMap<NodeId, u32> = rpacks.iter().filter(|(_, &m)| m > 0).map(|(&n, &m)| (n, m)).collect();
        if recorded != replayed {
            flag(t, "fleet", format!("servers {recorded:?} differ from replay {replayed:?}"));
        }

        // Assignment.
        let Some(work) = instance.workloads.get(i) else { continue };
        task_total += work.tasks.len();
        if st.tasks != work.tasks.len() {
            flag(t, "tasks", format!("{} tasks recorded, {} generated", st.tasks, work.tasks.len()));
        }
        let by_id: HashMap<_, &Task> = work.tasks.iter().map(|k| (k.id, k)).collect();
        let sat: BTreeSet<_> = st.assignment.satisfied.iter().copied().collect();
        if sat.len() != st.assignment.satisfied.len() || st.gamma != sat.len() || st.assignment.gamma != sat.len() {
            flag(t, "gamma", format!("gamma {} with {} satisfied ids", st.gamma, sat.len()));
        }
        for id in &sat {
            if !by_id.contains_key(id) {
                flag(t, "tasks", format!("satisfied task {id} does not exist"));
            }
        }
        satisfied_total += sat.len();

        let mut placed: HashMap<_, f64> = HashMap::new();
        let mut pairs = BTreeSet::new();
        let mut load: BTreeMap<NodeId, f64> = BTreeMap::new();
        for f in &st.assignment.fractions {
            let Some(task) = by_id.get(&f.task) else {
                flag(t, "tasks", format!("fraction of unknown task {}", f.task));
                continue;
            };
            if !(f.bits > 0.0) {
                flag(t, "split", format!("task {} has a non-positive fraction on {}", f.task, f.server));
            }
            if !pairs.insert((f.task, f.server)) {
                flag(t, "split", format!("task {} has two fractions on {}", f.task, f.server));
            }
            *placed.entry(f.task).or_default() += f.bits;
            if f.server != cloud {
                if replayed.get(&f.server).copied().unwrap_or(0) == 0 {
                    flag(t, "placement", format!("task {} placed on {} which has no server", f.task, f.server));
                }
                *load.entry(f.server).or_default() += f.bits;
            }
            match delays.delay(task, f.server, f.bits) {
                None => flag(t, "path", format!("no valid route between {} and {}", task.origin, f.server)),
                Some(d) => {
                    if !close(d, f.delay_s, d) {
                        flag(t, "delay", format!("task {} on {}: recorded {} recomputed {d}", f.task, f.server, f.delay_s));
                    }
                    let limit = task.delay_limit();
                    if sat.contains(&f.task) && d > limit + REL * limit.max(1.0) {
                        flag(t, "deadline", format!("satisfied task {} takes {d} s on {}, limit {limit}", f.task, f.server));
                    }
                }
            }
        }
        for task in &work.tasks {
            let got = placed.get(&task.id).copied().unwrap_or(0.0);
            if !close(got, task.size_bits, task.size_bits) {
                flag(t, "split", format!("task {} placed {got} of {} bits", task.id, task.size_bits));
            }
        }
        for (&s, &l) in &load {
            let cap = replayed.get(&s).copied().unwrap_or(0) as f64 * p.rpack_capacity_bits;
            if l > cap + REL * cap.max(1.0) {
                flag(t, "capacity", format!("server {s} carries {l} of {cap} bits"));
            }
        }
        for s in &st.servers {
            let l = load.get(&s.node).copied().unwrap_or(0.0);
            if !close(l, s.workload_bits, p.rpack_capacity_bits) {
                flag(t, "workload", format!("server {} records {} bits, fractions sum to {l}", s.node, s.workload_bits));
            }
        }
    }

    if trace.stages.len() >= big_t {
        let spent: f64 = trace.stages.iter().map(|s| s.spent).sum();
        let left = trace.stages[big_t - 1].carryover;
        if !close(budget, spent + left, budget) {
            flag(big_t, "conservation", format!("budget {budget} != spent {spent} + left {left}"));
        }
    }
    let n = trace.stages.len().max(1) as f64;
    let pct = if task_total == 0 { 100.0 } else { 100.0 * satisfied_total as f64 / task_total as f64 };
    if !close(trace.gamma_bar, satisfied_total as f64 / n, 1.0) || !close(trace.gamma_bar_pct, pct, 100.0) {
        flag(0, "average", format!("gamma_bar {} / {}% inconsistent with stages", trace.gamma_bar, trace.gamma_bar_pct));
    }
    out
}
