//! Random `xNyE` networks: `x` nodes (node 0 is the cloud), `y` links
//! between access points, and one uplink from every access point.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng;
use crate::topology::{Link, NodeId, PropagationOverrides, Topology, DEFAULT_PROPAGATION_SPEED, MAX_NODES};

use super::HarnessError;

pub const AP_RATES_BPS: [f64; 2] = [20e9, 40e9];
pub const UPLINK_RATES_BPS: [f64; 2] = [2e9, 5e9];
pub const AP_CLOUD_PROPAGATION_S: f64 = 0.05;

/// Parses `xNyE` into (nodes, links).
pub fn parse_spec(spec: &str) -> Result<(usize, usize), HarnessError> {
    let bad = || HarnessError::Invalid(format!("topology spec {spec:?} is not of the form <nodes>N<links>E"));
    let s = spec.trim().to_ascii_uppercase();
    let body = s.strip_suffix('E').ok_or_else(bad)?;
    let (x, y) = body.split_once('N').ok_or_else(bad)?;
    let x: usize = x.parse().map_err(|_| bad())?;
    let y: usize = y.parse().map_err(|_| bad())?;
    if x > MAX_NODES {
        return Err(HarnessError::Invalid(format!("{spec}: more than {MAX_NODES} nodes")));
    }
    let aps = x.saturating_sub(1);
    let most = aps * aps.saturating_sub(1) / 2;
    if x < 3 || y < x - 1 || y > most {
        return Err(HarnessError::Invalid(format!(
            "{spec}: need at least 3 nodes and {} to {most} links between access points",
            x.saturating_sub(1)
        )));
    }
    Ok((x, y))
}

pub fn generate_topology(spec: &str, seed: u64) -> Result<Topology, HarnessError> {
    let (x, y) = parse_spec(spec)?;
    let mut rng = rng::stream(seed, &[0x70, x as u64, y as u64]);
    let aps: Vec<u32> = (1..x as u32).collect();

    let mut order = aps.clone();
    order.shuffle(&mut rng);
    let mut pairs = BTreeSet::new();
    for i in 1..order.len() {
        let j = rng.gen_range(0..i);
        let (a, b) = (order[i].min(order[j]), order[i].max(order[j]));
        pairs.insert((a, b));
    }
    let mut rest: Vec<(u32, u32)> = aps
        .iter()
        .flat_map(|&a| aps.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
        .filter(|p| !pairs.contains(p))
        .collect();
    rest.shuffle(&mut rng);
    pairs.extend(rest.into_iter().take(y - pairs.len()));

    let mut links: Vec<Link> = pairs
        .into_iter()
        .map(|(a, b)| Link { a: NodeId(a), b: NodeId(b), length_m: 0.0, rate_bps: *AP_RATES_BPS.choose(&mut rng).unwrap() })
        .collect();
    for &a in &aps {
        links.push(Link { a: NodeId(a), b: NodeId(0), length_m: 0.0, rate_bps: *UPLINK_RATES_BPS.choose(&mut rng).unwrap() });
    }
    let overrides = PropagationOverrides { ap_ap_s: Some(0.0), ap_cloud_s: Some(AP_CLOUD_PROPAGATION_S) };
    Ok(Topology::new(x, NodeId(0), links, DEFAULT_PROPAGATION_SPEED, overrides)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::PathTable;

    #[test]
    fn five_nodes_five_links() {
        let t = generate_topology("5N5E", 1).unwrap();
        assert_eq!(t.node_count(), 5);
        let ap_links = t.links().iter().filter(|l| l.a != t.cloud() && l.b != t.cloud()).count();
        assert_eq!(ap_links, 5);
        assert_eq!(t.links().len(), 9);
        assert!(PathTable::build(&t).is_ok());
    }

    #[test]
    fn spec_bounds() {
        assert!(parse_spec("5N3E").is_err());
        assert!(parse_spec("5N4E").is_ok());
        assert!(parse_spec("5N7E").is_err());
        assert!(parse_spec("five").is_err());
        assert_eq!(parse_spec("100n150e").unwrap(), (100, 150));
    }

    #[test]
    fn seeded() {
        assert_eq!(generate_topology("10N20E", 3).unwrap().to_text(), generate_topology("10N20E", 3).unwrap().to_text());
        assert_ne!(generate_topology("10N20E", 3).unwrap().to_text(), generate_topology("10N20E", 4).unwrap().to_text());
    }
}
