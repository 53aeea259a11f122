//! Integer max-flow (Dinic) and the task-to-server transportation check.

use std::collections::VecDeque;

use crate::offload::{max_cloud_fraction, DelayModel, FractionAssignment, SLACK};
use crate::topology::NodeId;
use crate::workload::Task;

/// Flow units per bit.
pub const UNITS_PER_BIT: f64 = 1e3;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self { edges: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    /// Adds a directed arc and returns its id.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap });
        self.edges.push(Edge { to: from, cap: 0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Flow currently pushed through arc `id`.
    pub fn flow(&self, id: usize) -> i64 {
        self.edges[id + 1].cap
    }

    fn levels(&self, s: usize, t: usize) -> Option<Vec<i32>> {
        let mut level = vec![-1; self.adj.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.adj[u] {
                let Edge { to, cap } = self.edges[e];
                if cap > 0 && level[to] < 0 {
                    level[to] = level[u] + 1;
                    q.push_back(to);
                }
            }
        }
        (level[t] >= 0).then_some(level)
    }

    fn push(&mut self, u: usize, t: usize, limit: i64, level: &[i32], next: &mut [usize]) -> i64 {
        if u == t {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let e = self.adj[u][next[u]];
            let Edge { to, cap } = self.edges[e];
            if cap > 0 && level[to] == level[u] + 1 {
                let pushed = self.push(to, t, limit.min(cap), level, next);
                if pushed > 0 {
                    self.edges[e].cap -= pushed;
                    self.edges[e ^ 1].cap += pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0
    }

    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut total = 0;
        while let Some(level) = self.levels(s, t) {
            let mut next = vec![0; self.adj.len()];
            loop {
                let f = self.push(s, t, i64::MAX, &level, &mut next);
                if f == 0 {
                    break;
                }
                total += f;
            }
        }
        total
    }
}

/// Per-task data of the transportation problem.
#[derive(Debug, Clone)]
pub struct TransportTask {
    /// Largest deadline-safe cloud share.
    pub cloud_bits: f64,
    /// Bits that must go to edge servers.
    pub demand_bits: f64,
    /// Per server (same order as the server list): largest deadline-safe fraction.
    pub arc_bits: Vec<f64>,
}

impl TransportTask {
    pub fn cloud_only(&self) -> bool {
        self.demand_bits <= 0.0
    }

    /// Whether the edge arcs together could carry the demand.
    pub fn reachable(&self) -> bool {
        self.arc_bits.iter().sum::<f64>() * (1.0 + SLACK) >= self.demand_bits
    }
}

/// Transportation instance for one stage: tasks against edge servers.
#[derive(Debug, Clone)]
pub struct Transport<'a> {
    pub tasks: &'a [Task],
    pub servers: Vec<(NodeId, f64)>,
    pub rows: Vec<TransportTask>,
    model: DelayModel<'a>,
}

fn units_floor(bits: f64) -> i64 {
    (bits * UNITS_PER_BIT).floor().max(0.0) as i64
}

fn units_ceil(bits: f64) -> i64 {
    (bits * UNITS_PER_BIT).ceil().max(0.0) as i64
}

impl<'a> Transport<'a> {
    /// `servers` lists edge nodes with their capacity in bits.
    pub fn new(tasks: &'a [Task], servers: Vec<(NodeId, f64)>, model: DelayModel<'a>) -> Self {
        let rows = tasks
            .iter()
            .map(|t| {
                let cloud_bits = max_cloud_fraction(t, &model);
                let mut demand_bits = t.size_bits - cloud_bits;
                if demand_bits <= SLACK * t.size_bits {
                    demand_bits = 0.0;
                }
                let arc_bits = servers
                    .iter()
                    .map(|&(s, _)| model.coefficients(t.origin, s).max_bits_within(t.delay_limit()).min(t.size_bits))
                    .collect();
                TransportTask { cloud_bits, demand_bits, arc_bits }
            })
            .collect();
        Self { tasks, servers, rows, model }
    }

    fn network(&self, subset: &[usize]) -> (FlowNetwork, Vec<Vec<(usize, usize)>>, i64) {
        let (src, sink) = (0, 1);
        let task_node = |i: usize| 2 + i;
        let server_node = |j: usize| 2 + subset.len() + j;
        let mut net = FlowNetwork::new(2 + subset.len() + self.servers.len());
        let mut arcs = vec![Vec::new(); subset.len()];
        let mut demand = 0;
        for (i, &k) in subset.iter().enumerate() {
            let d = units_floor(self.rows[k].demand_bits);
            demand += d;
            net.add_edge(src, task_node(i), d);
            for (j, &cap) in self.rows[k].arc_bits.iter().enumerate() {
                if cap > 0.0 {
                    arcs[i].push((j, net.add_edge(task_node(i), server_node(j), units_ceil(cap))));
                }
            }
        }
        for (j, &(_, cap)) in self.servers.iter().enumerate() {
            net.add_edge(server_node(j), sink, units_ceil(cap));
        }
        (net, arcs, demand)
    }

    /// Maximum flow and total demand, in flow units, for the tasks in `subset`.
    pub fn flow_value(&self, subset: &[usize]) -> (i64, i64) {
        let (mut net, _, demand) = self.network(subset);
        (net.max_flow(0, 1), demand)
    }

    /// A concrete assignment satisfying every task in `subset`, if one
    /// exists. Tasks outside the subset get no fractions.
    pub fn certify(&self, subset: &[usize]) -> Option<Vec<FractionAssignment>> {
        let (mut net, arcs, demand) = self.network(subset);
        if net.max_flow(0, 1) < demand {
            return None;
        }
        let cloud = self.model.cloud;
        let mut out = Vec::new();
        for (i, &k) in subset.iter().enumerate() {
            let task = &self.tasks[k];
            let mut edge = Vec::new();
            for &(j, id) in &arcs[i] {
                let f = net.flow(id);
                if f > 0 {
                    edge.push((self.servers[j].0, f as f64 / UNITS_PER_BIT));
                }
            }
            let cloud_bits = task.size_bits - edge.iter().map(|e| e.1).sum::<f64>();
            if cloud_bits > 0.0 {
                out.push(FractionAssignment {
                    task: task.id,
                    server: cloud,
                    bits: cloud_bits,
                    delay_s: self.model.delay(task, cloud, cloud_bits),
                });
            }
            for (s, bits) in edge {
                out.push(FractionAssignment { task: task.id, server: s, bits, delay_s: self.model.delay(task, s, bits) });
            }
        }
        Some(out)
    }

    pub fn feasible(&self, subset: &[usize]) -> bool {
        let (flow, demand) = self.flow_value(subset);
        flow >= demand
    }

    /// Largest satisfiable task set (indices, ascending) with a witness.
    /// Cloud-only tasks are always included; the rest are searched by
    /// decreasing cardinality, first feasible combination wins.
    pub fn max_satisfiable(&self) -> (Vec<usize>, Vec<FractionAssignment>) {
        let always: Vec<usize> = (0..self.rows.len()).filter(|&k| self.rows[k].cloud_only()).collect();
        let cand: Vec<usize> = (0..self.rows.len())
            .filter(|&k| !self.rows[k].cloud_only() && self.rows[k].reachable())
            .collect();
        let total_cap: f64 = self.servers.iter().map(|s| s.1).sum();
        let mut demands: Vec<f64> = cand.iter().map(|&k| self.rows[k].demand_bits).collect();
        demands.sort_by(f64::total_cmp);

        for c in (0..=cand.len()).rev() {
            if demands[..c].iter().sum::<f64>() > total_cap * (1.0 + SLACK) + 1.0 {
                continue;
            }
            let mut idx: Vec<usize> = (0..c).collect();
            loop {
                let mut subset: Vec<usize> = always.clone();
                subset.extend(idx.iter().map(|&i| cand[i]));
                subset.sort_unstable();
                if let Some(w) = self.certify(&subset) {
                    return (subset, w);
                }
                if !next_combination(&mut idx, cand.len()) {
                    break;
                }
            }
        }
        unreachable!("the empty candidate set is always feasible")
    }
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
