//! MILP model of the multi-stage problem, built row by row.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::instance::Instance;
use crate::offload::max_cloud_fraction;
use crate::topology::NodeId;

use super::ExactError;

/// Bits per unit of the size variables (sizes are modeled in Gb).
pub const BITS_PER_UNIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

/// Constraint families; row names start with [`RowKind::prefix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// Cumulative spend within cumulative allocation.
    Budget,
    /// Fractions of a task add up to its size.
    Split,
    /// Cloud share of a satisfied task within its deadline bound.
    CloudShare,
    /// Server load within installed capacity.
    Capacity,
    /// Fractions only on deployed servers.
    Gate,
    /// Deployed servers stay deployed.
    Keep,
    /// At most `M_max` rpacks per server.
    RpackLimit,
    /// No rpack removal.
    RpackNonneg,
    /// Fraction delay of a satisfied task within its limit.
    Deadline,
    /// A satisfied task is satisfied on every server.
    Satisfied,
}

impl RowKind {
    pub fn prefix(self) -> &'static str {
        match self {
            RowKind::Budget => "budget",
            RowKind::Split => "split",
            RowKind::CloudShare => "cloud",
            RowKind::Capacity => "cap",
            RowKind::Gate => "gate",
            RowKind::Keep => "keep",
            RowKind::RpackLimit => "rmax",
            RowKind::RpackNonneg => "rpos",
            RowKind::Deadline => "delay",
            RowKind::Satisfied => "sat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub family: RowKind,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    /// Relaxation constant of a delay row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MilpModel {
    pub stages: usize,
    pub unit_bits: f64,
    pub variables: Vec<Variable>,
    pub objective: Vec<(usize, f64)>,
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
}

impl MilpModel {
    pub fn index(&self) -> HashMap<&str, usize> {
        self.variables.iter().enumerate().map(|(i, v)| (v.name.as_str(), i)).collect()
    }

    pub fn from_json(text: &str) -> Result<Self, ExactError> {
        let m: Self = serde_json::from_str(text).map_err(|e| ExactError::Meta(e.to_string()))?;
        let n = m.variables.len();
        let bad = m.objective.iter().chain(m.rows.iter().flat_map(|r| r.terms.iter())).any(|&(i, _)| i >= n);
        if bad {
            return Err(ExactError::Meta("term references an undeclared variable".into()));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpOptions {
    /// Access points that may host a server; `None` means all of them.
    pub servers: Option<Vec<NodeId>>,
    /// Refuse models whose |V| times total task count exceeds this.
    pub max_cells: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self { servers: None, max_cells: 2_000_000 }
    }
}

/// Closed-form (variables, constraints) for `nodes` = |V| and per-stage
/// (|S^t|, |R^t|) shapes.
pub fn model_size(nodes: usize, shapes: &[(usize, usize)]) -> (usize, usize) {
    let t = shapes.len();
    let vars = nodes * t + shapes.iter().map(|&(s, r)| s + 2 * (s * r + r)).sum::<usize>();
    let cons = t + nodes * t + shapes.iter().map(|&(s, r)| 2 * r + 3 * s + 3 * s * r - 1).sum::<usize>();
    (vars, cons)
}

pub fn d_name(t: usize, s: NodeId) -> String {
    format!("d_{t}_{s}")
}
pub fn m_name(t: usize, s: NodeId) -> String {
    format!("m_{t}_{s}")
}
pub fn b_name(t: usize, k: u32, s: NodeId) -> String {
    format!("b_{t}_{k}_{s}")
}
pub fn bu_name(t: usize, k: u32) -> String {
    format!("bu_{t}_{k}")
}
pub fn g_name(t: usize, k: u32) -> String {
    format!("g_{t}_{k}")
}
pub fn gs_name(t: usize, k: u32, s: NodeId) -> String {
    format!("g_{t}_{k}_{s}")
}

struct Builder {
    model: MilpModel,
    index: HashMap<String, usize>,
}

impl Builder {
    fn var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        let i = self.model.variables.len();
        self.index.insert(name.clone(), i);
        self.model.variables.push(Variable { name, kind, lower, upper });
        i
    }

    fn id(&self, name: &str) -> usize {
        self.index[name]
    }

    fn row(&mut self, suffix: String, family: RowKind, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64, big_m: Option<f64>) {
        let name = format!("{}_{suffix}", family.prefix());
        self.model.rows.push(Row { name, family, terms, sense, rhs, big_m });
    }
}

/// Server candidates of the model: the cloud first, then access points.
pub fn server_set(instance: &Instance, options: &MilpOptions) -> Vec<NodeId> {
    let mut s = vec![instance.topology.cloud()];
    match &options.servers {
        Some(list) => {
            let mut l: Vec<NodeId> = list.iter().copied().filter(|&n| n != instance.topology.cloud()).collect();
            l.sort();
            l.dedup();
            s.extend(l);
        }
        None => s.extend(instance.access_points()),
    }
    s
}

pub fn build_milp(instance: &Instance, options: &MilpOptions) -> Result<MilpModel, ExactError> {
    let big_t = instance.stages;
    let nodes: Vec<NodeId> = instance.topology.nodes().collect();
    let cloud = instance.topology.cloud();
    let servers = server_set(instance, options);
    if let Some(&bad) = servers.iter().find(|s| s.index() >= nodes.len()) {
        return Err(ExactError::Invalid(format!("server candidate {bad} is not a node")));
    }
    let stage_tasks = &instance.workloads[..big_t];
    let cells = nodes.len() * stage_tasks.iter().map(|w| w.tasks.len()).sum::<usize>();
    if cells > options.max_cells {
        return Err(ExactError::TooLarge(format!("{cells} node-task cells exceed the cap of {}", options.max_cells)));
    }

    let model_delay = instance.delay_model();
    let p = instance.params;
    let unit = BITS_PER_UNIT;
    let cp = p.rpack_capacity_bits / unit;
    let max = p.max_rpacks as f64;
    let initial: BTreeMap<NodeId, u32> = instance.initial_servers.iter().copied().collect();
    let m0 = |s: NodeId| *initial.get(&s).unwrap_or(&0) as f64;
    let d0 = |s: NodeId| if s == cloud || m0(s) > 0.0 { 1.0 } else { 0.0 };

    let mut b = Builder { model: MilpModel { stages: big_t, unit_bits: unit, ..Default::default() }, index: HashMap::new() };
    b.model.notes = vec![
        "sizes in units of 1e9 bits".into(),
        "budget rows charge deployment once, on the increment d_t_s - d_(t-1)_s".into(),
        "server gating is linearised as b <= M_max * C_p * d alongside the capacity rows".into(),
        "delay rows: A*b + M*g_t_k_s <= sigma*tau - B + M with M = full-size delay + 1 s".into(),
        "bu_t_k is fixed to min(b_k, largest deadline-safe cloud share)".into(),
    ];

    for (ti, w) in stage_tasks.iter().enumerate() {
        let t = ti + 1;
        for &s in &nodes {
            let lo = if s == cloud { 1.0 } else { 0.0 };
            b.var(d_name(t, s), VarKind::Binary, lo, 1.0);
        }
        for &s in &servers {
            let hi = if s == cloud { 0.0 } else { max - m0(s) };
            b.var(m_name(t, s), VarKind::Integer, 0.0, hi);
        }
        for task in &w.tasks {
            for &s in &servers {
                b.var(b_name(t, task.id.0, s), VarKind::Continuous, 0.0, task.size_bits / unit);
            }
        }
        for task in &w.tasks {
            let bound = max_cloud_fraction(task, &model_delay) / unit;
            b.var(bu_name(t, task.id.0), VarKind::Continuous, bound, bound);
        }
        for task in &w.tasks {
            b.var(g_name(t, task.id.0), VarKind::Binary, 0.0, 1.0);
        }
        for task in &w.tasks {
            for &s in &servers {
                b.var(gs_name(t, task.id.0, s), VarKind::Binary, 0.0, 1.0);
            }
        }
    }

    let inv_t = 1.0 / big_t as f64;
    b.model.objective = stage_tasks
        .iter()
        .enumerate()
        .flat_map(|(ti, w)| w.tasks.iter().map(move |k| (ti + 1, k.id.0)))
        .map(|(t, k)| (b.id(&g_name(t, k)), inv_t))
        .collect();

    let edge_nodes: Vec<NodeId> = nodes.iter().copied().filter(|&s| s != cloud).collect();
    let edge_servers: Vec<NodeId> = servers.iter().copied().filter(|&s| s != cloud).collect();

    // Budget: cumulative spend up to t within t * B / T.
    for t in 1..=big_t {
        let mut terms: BTreeMap<usize, f64> = BTreeMap::new();
        let mut rhs = t as f64 * instance.budget / big_t as f64;
        for k in 1..=t {
            let infra = instance.cost.infra_at(k);
            for &s in &edge_nodes {
                *terms.entry(b.id(&d_name(k, s))).or_default() += infra;
                if k == 1 {
                    rhs += infra * d0(s);
                } else {
                    *terms.entry(b.id(&d_name(k - 1, s))).or_default() -= infra;
                }
            }
            let pack = instance.cost.rpack_at(k);
            for &s in &edge_servers {
                *terms.entry(b.id(&m_name(k, s))).or_default() += pack;
            }
        }
        let terms = terms.into_iter().filter(|&(_, c)| c != 0.0).collect();
        b.row(format!("{t}"), RowKind::Budget, terms, Sense::Le, rhs, None);
    }

    for (ti, w) in stage_tasks.iter().enumerate() {
        let t = ti + 1;
        for task in &w.tasks {
            let k = task.id.0;
            let size = task.size_bits / unit;
            let terms = servers.iter().map(|&s| (b.id(&b_name(t, k, s)), 1.0)).collect();
            b.row(format!("{t}_{k}"), RowKind::Split, terms, Sense::Eq, size, None);
        }
        for task in &w.tasks {
            let k = task.id.0;
            let size = task.size_bits / unit;
            let terms = vec![(b.id(&b_name(t, k, cloud)), 1.0), (b.id(&bu_name(t, k)), -1.0), (b.id(&g_name(t, k)), size)];
            b.row(format!("{t}_{k}"), RowKind::CloudShare, terms, Sense::Le, size, None);
        }
        for &s in &edge_servers {
            let mut terms: Vec<(usize, f64)> = w.tasks.iter().map(|task| (b.id(&b_name(t, task.id.0, s)), 1.0)).collect();
            terms.extend((1..=t).map(|tau| (b.id(&m_name(tau, s)), -cp)));
            b.row(format!("{t}_{s}"), RowKind::Capacity, terms, Sense::Le, cp * m0(s), None);
        }
        for task in &w.tasks {
            let k = task.id.0;
            for &s in &servers {
                let cap = if s == cloud { task.size_bits / unit } else { max * cp };
                let terms = vec![(b.id(&b_name(t, k, s)), 1.0), (b.id(&d_name(t, s)), -cap)];
                b.row(format!("{t}_{k}_{s}"), RowKind::Gate, terms, Sense::Le, 0.0, None);
            }
        }
        for &s in &nodes {
            let mut terms = vec![(b.id(&d_name(t, s)), 1.0)];
            let rhs = if t == 1 {
                d0(s)
            } else {
                terms.push((b.id(&d_name(t - 1, s)), -1.0));
                0.0
            };
            b.row(format!("{t}_{s}"), RowKind::Keep, terms, Sense::Ge, rhs, None);
        }
        for &s in &servers {
            let terms = (1..=t).map(|tau| (b.id(&m_name(tau, s)), 1.0)).collect();
            b.row(format!("{t}_{s}"), RowKind::RpackLimit, terms, Sense::Le, max - m0(s), None);
        }
        for &s in &servers {
            b.row(format!("{t}_{s}"), RowKind::RpackNonneg, vec![(b.id(&m_name(t, s)), 1.0)], Sense::Ge, 0.0, None);
        }
        for task in &w.tasks {
            let k = task.id.0;
            let size = task.size_bits / unit;
            let limit = task.delay_limit();
            for &s in &servers {
                let c = model_delay.coefficients(task.origin, s);
                let (bv, gv) = (b.id(&b_name(t, k, s)), b.id(&gs_name(t, k, s)));
                if c.fixed > limit {
                    // Not even an empty fraction meets the limit: satisfaction forces b = 0.
                    b.row(format!("{t}_{k}_{s}"), RowKind::Deadline, vec![(bv, 1.0), (gv, size)], Sense::Le, size, None);
                } else {
                    let a = c.per_bit * unit;
                    let big_m = c.delay(task.size_bits) + 1.0;
                    b.row(format!("{t}_{k}_{s}"), RowKind::Deadline, vec![(bv, a), (gv, big_m)], Sense::Le, limit - c.fixed + big_m, Some(big_m));
                }
            }
        }
        for task in &w.tasks {
            let k = task.id.0;
            for &s in &servers {
                let terms = vec![(b.id(&g_name(t, k)), 1.0), (b.id(&gs_name(t, k, s)), -1.0)];
                b.row(format!("{t}_{k}_{s}"), RowKind::Satisfied, terms, Sense::Le, 0.0, None);
            }
        }
    }
    Ok(b.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_example() {
        assert_eq!(model_size(5, &[(3, 10)]), (88, 124));
        assert_eq!(model_size(1, &[]), (0, 0));
    }
}
