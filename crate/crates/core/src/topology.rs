//! Network graph, shortest-path table and the delay primitives built on it.
//!
//! All quantities use SI-like base units: sizes in bits, rates in bits per
//! second, lengths in meters and delays in seconds.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default propagation speed in a fibre-like medium (m/s).
pub const DEFAULT_PROPAGATION_SPEED: f64 = 2.0e8;

/// Path tables are dense (n² entries), so node counts are capped.
pub const MAX_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("topology has no nodes")]
    Empty,
    #[error("{0} nodes exceed the limit of {MAX_NODES}")]
    TooLarge(usize),
    #[error("cloud node {0} is out of range")]
    CloudOutOfRange(NodeId),
    #[error("link {a}-{b} references a node out of range")]
    NodeOutOfRange { a: NodeId, b: NodeId },
    #[error("link {0}-{0} is a self loop")]
    SelfLoop(NodeId),
    #[error("duplicate link between {a} and {b}")]
    DuplicateLink { a: NodeId, b: NodeId },
    #[error("link {a}-{b} has invalid {what} {value}")]
    InvalidLink { a: NodeId, b: NodeId, what: &'static str, value: f64 },
    #[error("invalid propagation parameter: {0}")]
    InvalidPropagation(String),
    #[error("no path from {from} to {to}")]
    Disconnected { from: NodeId, to: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub length_m: f64,
    pub rate_bps: f64,
}

/// Fixed per-class propagation delays that replace `distance / speed`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationOverrides {
    pub ap_ap_s: Option<f64>,
    pub ap_cloud_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    node_count: usize,
    cloud: NodeId,
    links: Vec<Link>,
    propagation_speed: f64,
    overrides: PropagationOverrides,
}

impl Topology {
    /// Validates everything except connectivity, which is reported by
    /// [`PathTable::build`] together with the offending pair.
    pub fn new(
        node_count: usize,
        cloud: NodeId,
        links: Vec<Link>,
        propagation_speed: f64,
        overrides: PropagationOverrides,
    ) -> Result<Self, TopologyError> {
        if node_count == 0 {
            return Err(TopologyError::Empty);
        }
        if node_count > MAX_NODES {
            return Err(TopologyError::TooLarge(node_count));
        }
        if cloud.index() >= node_count {
            return Err(TopologyError::CloudOutOfRange(cloud));
        }
        if !(propagation_speed.is_finite() && propagation_speed > 0.0) {
            return Err(TopologyError::InvalidPropagation(format!(
                "speed {propagation_speed}"
            )));
        }
        for (name, v) in [("ap_ap", overrides.ap_ap_s), ("ap_cloud", overrides.ap_cloud_s)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(TopologyError::InvalidPropagation(format!("{name} override {v}")));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for l in &links {
            if l.a.index() >= node_count || l.b.index() >= node_count {
                return Err(TopologyError::NodeOutOfRange { a: l.a, b: l.b });
            }
            if l.a == l.b {
                return Err(TopologyError::SelfLoop(l.a));
            }
            if !(l.rate_bps.is_finite() && l.rate_bps > 0.0) {
                return Err(TopologyError::InvalidLink { a: l.a, b: l.b, what: "rate", value: l.rate_bps });
            }
            if !(l.length_m.is_finite() && l.length_m >= 0.0) {
                return Err(TopologyError::InvalidLink { a: l.a, b: l.b, what: "length", value: l.length_m });
            }
            if !seen.insert((l.a.min(l.b), l.a.max(l.b))) {
                return Err(TopologyError::DuplicateLink { a: l.a, b: l.b });
            }
        }
        Ok(Self { node_count, cloud, links, propagation_speed, overrides })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn cloud(&self) -> NodeId {
        self.cloud
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn propagation_speed(&self) -> f64 {
        self.propagation_speed
    }

    pub fn overrides(&self) -> PropagationOverrides {
        self.overrides
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count as u32).map(NodeId)
    }

    /// Access points: every node except the cloud.
    pub fn access_points(&self) -> Vec<NodeId> {
        self.nodes().filter(|&n| n != self.cloud).collect()
    }

    /// Parses the line-oriented topology format:
    ///
    /// ```text
    /// # comment
    /// nodes 3 cloud 0
    /// link 1 0 1000 2e9
    /// link 1 2 50 2e10
    /// prop_ap_ap 0
    /// prop_ap_cloud 0.05
    /// propagation_speed 2e8
    /// ```
    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut header: Option<(usize, NodeId)> = None;
        let mut links = Vec::new();
        let mut overrides = PropagationOverrides::default();
        let mut speed = DEFAULT_PROPAGATION_SPEED;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TopologyError::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "nodes" => {
                    if header.is_some() {
                        return Err(err("duplicate header".into()));
                    }
                    if fields.len() != 4 || fields[2] != "cloud" {
                        return Err(err("expected `nodes <N> cloud <id>`".into()));
                    }
                    let n = parse_num::<usize>(fields[1]).map_err(&err)?;
                    let c = parse_num::<u32>(fields[3]).map_err(&err)?;
                    header = Some((n, NodeId(c)));
                }
                "link" => {
                    if header.is_none() {
                        return Err(err("link before header".into()));
                    }
                    if fields.len() != 5 {
                        return Err(err("expected `link <i> <j> <length_m> <rate_bps>`".into()));
                    }
                    links.push(Link {
                        a: NodeId(parse_num::<u32>(fields[1]).map_err(&err)?),
                        b: NodeId(parse_num::<u32>(fields[2]).map_err(&err)?),
                        length_m: parse_num::<f64>(fields[3]).map_err(&err)?,
                        rate_bps: parse_num::<f64>(fields[4]).map_err(&err)?,
                    });
                }
                "prop_ap_ap" | "prop_ap_cloud" | "propagation_speed" => {
                    if fields.len() != 2 {
                        return Err(err(format!("expected `{} <value>`", fields[0])));
                    }
                    let v = parse_num::<f64>(fields[1]).map_err(&err)?;
                    match fields[0] {
                        "prop_ap_ap" => overrides.ap_ap_s = Some(v),
                        "prop_ap_cloud" => overrides.ap_cloud_s = Some(v),
                        _ => speed = v,
                    }
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let (n, cloud) = header.ok_or(TopologyError::Parse { line: 0, msg: "missing header".into() })?;
        Topology::new(n, cloud, links, speed, overrides)
    }

    /// Serializes to the text format accepted by [`Topology::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("nodes {} cloud {}\n", self.node_count, self.cloud);
        if self.propagation_speed != DEFAULT_PROPAGATION_SPEED {
            out.push_str(&format!("propagation_speed {:?}\n", self.propagation_speed));
        }
        if let Some(v) = self.overrides.ap_ap_s {
            out.push_str(&format!("prop_ap_ap {v:?}\n"));
        }
        if let Some(v) = self.overrides.ap_cloud_s {
            out.push_str(&format!("prop_ap_cloud {v:?}\n"));
        }
        for l in &self.links {
            out.push_str(&format!("link {} {} {:?} {:?}\n", l.a, l.b, l.length_m, l.rate_bps));
        }
        out
    }

    fn propagation_override(&self, from: NodeId, to: NodeId) -> Option<f64> {
        if from == self.cloud || to == self.cloud {
            self.overrides.ap_cloud_s
        } else {
            self.overrides.ap_ap_s
        }
    }
}

impl FromStr for Topology {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topology::parse(s)
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse::<T>().map_err(|_| format!("invalid number `{s}`"))
}

/// One routed path between an ordered pair of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEntry {
    /// Node sequence, starting at the source and ending at the destination.
    pub nodes: Vec<NodeId>,
    /// Rates of the traversed links, in path order.
    pub link_rates: Vec<f64>,
    pub distance_m: f64,
    /// Sum of `1 / rate` over the traversed links (seconds per bit).
    pub inverse_rate_sum: f64,
    /// Propagation delay: the configured override for the pair class if
    /// present, else `distance / speed`. Zero for the trivial path.
    pub propagation_s: f64,
}

impl PathEntry {
    pub fn hops(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn is_trivial(&self) -> bool {
        self.nodes.len() <= 1
    }

    /// Propagation plus per-link transmission delay of `payload_bits`.
    pub fn routing_delay(&self, payload_bits: f64) -> f64 {
        self.propagation_s + payload_bits * self.inverse_rate_sum
    }
}

/// All-pairs shortest paths. Edge weight is the transmission time of one bit
/// plus `length / speed`; ties resolve to the lexicographically smallest
/// node sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTable {
    n: usize,
    entries: Vec<PathEntry>,
}

#[derive(PartialEq)]
struct HeapItem {
    cost: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PathTable {
    pub fn build(topology: &Topology) -> Result<Self, TopologyError> {
        let n = topology.node_count();
        let speed = topology.propagation_speed();
        let mut adj: Vec<Vec<(usize, &Link)>> = vec![Vec::new(); n];
        for l in topology.links() {
            adj[l.a.index()].push((l.b.index(), l));
            adj[l.b.index()].push((l.a.index(), l));
        }
        for list in &mut adj {
            list.sort_by_key(|(v, _)| *v);
        }

        let mut entries = Vec::with_capacity(n * n);
        for src in 0..n {
            let mut cost = vec![f64::INFINITY; n];
            let mut path: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut done = vec![false; n];
            cost[src] = 0.0;
            path[src] = vec![src];
            let mut heap = BinaryHeap::new();
            heap.push(HeapItem { cost: 0.0, node: src });
            while let Some(HeapItem { cost: c, node: u }) = heap.pop() {
                if done[u] || c > cost[u] {
                    continue;
                }
                done[u] = true;
                for &(v, link) in &adj[u] {
                    if done[v] {
                        continue;
                    }
                    let next = c + 1.0 / link.rate_bps + link.length_m / speed;
                    let better = next < cost[v]
                        || (next == cost[v] && {
                            let mut candidate = path[u].clone();
                            candidate.push(v);
                            candidate < path[v]
                        });
                    if better {
                        cost[v] = next;
                        let mut p = path[u].clone();
                        p.push(v);
                        path[v] = p;
                        heap.push(HeapItem { cost: next, node: v });
                    }
                }
            }
            for dst in 0..n {
                if !cost[dst].is_finite() {
                    return Err(TopologyError::Disconnected {
                        from: NodeId(src as u32),
                        to: NodeId(dst as u32),
                    });
                }
                entries.push(Self::entry(topology, &adj, &path[dst], speed));
            }
        }
        Ok(Self { n, entries })
    }

    fn entry(topology: &Topology, adj: &[Vec<(usize, &Link)>], nodes: &[usize], speed: f64) -> PathEntry {
        let mut link_rates = Vec::with_capacity(nodes.len().saturating_sub(1));
        let mut distance_m = 0.0;
        let mut inverse_rate_sum = 0.0;
        for w in nodes.windows(2) {
            let link = adj[w[0]]
                .iter()
                .find(|(v, _)| *v == w[1])
                .map(|(_, l)| *l)
                .expect("path follows existing links");
            link_rates.push(link.rate_bps);
            distance_m += link.length_m;
            inverse_rate_sum += 1.0 / link.rate_bps;
        }
        let from = NodeId(nodes[0] as u32);
        let to = NodeId(*nodes.last().unwrap() as u32);
        let propagation_s = if from == to {
            0.0
        } else {
            topology.propagation_override(from, to).unwrap_or(distance_m / speed)
        };
        PathEntry {
            nodes: nodes.iter().map(|&v| NodeId(v as u32)).collect(),
            link_rates,
            distance_m,
            inverse_rate_sum,
            propagation_s,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> &PathEntry {
        &self.entries[from.index() * self.n + to.index()]
    }
}

/// `delay(b) = per_bit * b + fixed` for one (origin, server) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayCoefficients {
    pub per_bit: f64,
    pub fixed: f64,
}

impl DelayCoefficients {
    pub fn delay(&self, bits: f64) -> f64 {
        self.per_bit * bits + self.fixed
    }

    /// Largest size whose delay stays within `limit`; zero when the fixed
    /// part alone exceeds it.
    pub fn max_bits_within(&self, limit: f64) -> f64 {
        let room = limit - self.fixed;
        if room <= 0.0 {
            0.0
        } else {
            room / self.per_bit
        }
    }
}

/// Affine decomposition of [`fraction_delay`] for fractions of a task born at
/// `origin` and executed on `server`.
pub fn delay_coefficients(
    table: &PathTable,
    origin: NodeId,
    server: NodeId,
    zeta: f64,
    server_rate_bps: f64,
) -> DelayCoefficients {
    let fwd = table.get(origin, server);
    let back = table.get(server, origin);
    DelayCoefficients {
        per_bit: fwd.inverse_rate_sum + zeta * back.inverse_rate_sum + 1.0 / server_rate_bps,
        fixed: fwd.propagation_s + back.propagation_s,
    }
}

/// Completion delay of a fraction: forward routing, processing at
/// `server_rate_bps`, and routing the `zeta`-scaled result back.
pub fn fraction_delay(
    table: &PathTable,
    origin: NodeId,
    server: NodeId,
    fraction_bits: f64,
    zeta: f64,
    server_rate_bps: f64,
) -> f64 {
    table.get(origin, server).routing_delay(fraction_bits)
        + fraction_bits / server_rate_bps
        + table.get(server, origin).routing_delay(zeta * fraction_bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(a: u32, b: u32, length_m: f64, rate_bps: f64) -> Link {
        Link { a: NodeId(a), b: NodeId(b), length_m, rate_bps }
    }

    fn topo(n: usize, cloud: u32, links: Vec<Link>, ov: PropagationOverrides) -> Topology {
        Topology::new(n, NodeId(cloud), links, DEFAULT_PROPAGATION_SPEED, ov).unwrap()
    }

    #[test]
    fn two_node_zero_length() {
        let t = topo(2, 1, vec![link(0, 1, 0.0, 1e9)], Default::default());
        let table = PathTable::build(&t).unwrap();
        let e = table.get(NodeId(0), NodeId(1));
        assert_eq!(e.distance_m, 0.0);
        assert_eq!(e.hops().collect::<Vec<_>>(), vec![(NodeId(0), NodeId(1))]);
    }

    #[test]
    fn identity_path_is_empty() {
        let t = topo(2, 1, vec![link(0, 1, 10.0, 1e9)], Default::default());
        let table = PathTable::build(&t).unwrap();
        let e = table.get(NodeId(0), NodeId(0));
        assert!(e.is_trivial());
        assert_eq!(e.distance_m, 0.0);
        assert_eq!(e.routing_delay(1e9), 0.0);
    }

    #[test]
    fn two_hop_route_beats_slow_direct_link() {
        // direct 0-2: 1/1e3 s per bit; via 1: 2/1e6 s per bit.
        let t = topo(
            3,
            2,
            vec![link(0, 2, 0.0, 1e3), link(0, 1, 0.0, 1e6), link(1, 2, 0.0, 1e6)],
            Default::default(),
        );
        let table = PathTable::build(&t).unwrap();
        let e = table.get(NodeId(0), NodeId(2));
        assert_eq!(e.nodes, vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert!((e.inverse_rate_sum - 2e-6).abs() < 1e-18);
    }

    #[test]
    fn equal_cost_tie_takes_smallest_sequence() {
        // 0 -> 3 via 1 or via 2, identical weights.
        let t = topo(
            4,
            3,
            vec![link(0, 2, 5.0, 1e9), link(2, 3, 5.0, 1e9), link(0, 1, 5.0, 1e9), link(1, 3, 5.0, 1e9)],
            Default::default(),
        );
        let table = PathTable::build(&t).unwrap();
        assert_eq!(table.get(NodeId(0), NodeId(3)).nodes, vec![NodeId(0), NodeId(1), NodeId(3)]);
        assert_eq!(table.get(NodeId(3), NodeId(0)).nodes, vec![NodeId(3), NodeId(1), NodeId(0)]);
    }

    #[test]
    fn disconnected_graph_names_pair() {
        let t = topo(3, 2, vec![link(0, 2, 1.0, 1e9)], Default::default());
        assert_eq!(
            PathTable::build(&t).unwrap_err(),
            TopologyError::Disconnected { from: NodeId(0), to: NodeId(1) }
        );
    }

    #[test]
    fn routing_delay_sums_per_link_transmission() {
        let t = topo(3, 2, vec![link(0, 1, 0.0, 20e9), link(1, 2, 0.0, 40e9)], Default::default());
        let table = PathTable::build(&t).unwrap();
        let e = table.get(NodeId(0), NodeId(2));
        assert!((e.routing_delay(10e9) - 0.75).abs() < 1e-12);
        assert_eq!(table.get(NodeId(0), NodeId(0)).routing_delay(0.0), 0.0);
    }

    #[test]
    fn cloud_override_replaces_distance_term() {
        let ov = PropagationOverrides { ap_ap_s: Some(0.0), ap_cloud_s: Some(0.05) };
        let t = topo(2, 1, vec![link(0, 1, 1.0e6, 2e9)], ov);
        let table = PathTable::build(&t).unwrap();
        assert!((table.get(NodeId(0), NodeId(1)).routing_delay(1e9) - 0.55).abs() < 1e-12);

        // Without the override the same link uses distance / speed.
        let t = topo(2, 1, vec![link(0, 1, 1.0e6, 2e9)], Default::default());
        let table = PathTable::build(&t).unwrap();
        assert!((table.get(NodeId(0), NodeId(1)).routing_delay(1e9) - (0.005 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn colocated_fraction_is_processing_only() {
        let t = topo(2, 1, vec![link(0, 1, 0.0, 2e9)], Default::default());
        let table = PathTable::build(&t).unwrap();
        let d = fraction_delay(&table, NodeId(0), NodeId(0), 10e9, 0.1, 10e9);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cloud_fraction_expands_termwise() {
        let ov = PropagationOverrides { ap_ap_s: Some(0.0), ap_cloud_s: Some(0.05) };
        let t = topo(2, 1, vec![link(0, 1, 0.0, 2e9)], ov);
        let table = PathTable::build(&t).unwrap();
        // 0.05 + 0.5 (out) + 0.1 (processing) + 0.05 + 0.05 (result back)
        let d = fraction_delay(&table, NodeId(0), NodeId(1), 1e9, 0.1, 10e9);
        assert!((d - 0.75).abs() < 1e-12);
        // zero size leaves propagation only
        assert!((fraction_delay(&table, NodeId(0), NodeId(1), 0.0, 0.1, 10e9) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let text = "# demo\nnodes 3 cloud 0\nlink 1 0 1000 2e9\nlink 1 2 50 2e10 # fast\nprop_ap_cloud 0.05\n";
        let t = Topology::parse(text).unwrap();
        assert_eq!(t.links().len(), 2);
        assert_eq!(t.overrides().ap_cloud_s, Some(0.05));
        assert_eq!(Topology::parse(&t.to_text()).unwrap(), t);

        assert!(matches!(Topology::parse("link 0 1 1 1\n"), Err(TopologyError::Parse { line: 1, .. })));
        assert!(matches!(Topology::parse("nodes 2 cloud 0\nlink 0 1 1 0\n"), Err(TopologyError::InvalidLink { .. })));
        assert!(matches!(
            Topology::parse("nodes 2 cloud 0\nlink 0 1 1 1\nlink 1 0 1 1\n"),
            Err(TopologyError::DuplicateLink { .. })
        ));
        assert!(matches!(Topology::parse("nodes 2 cloud 5\n"), Err(TopologyError::CloudOutOfRange(_))));
        assert!(matches!(Topology::parse("nodes x cloud 0\n"), Err(TopologyError::Parse { line: 1, .. })));
    }
}
