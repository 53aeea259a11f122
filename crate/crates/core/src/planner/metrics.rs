use serde::{Deserialize, Serialize};

use crate::instance::Instance;

use super::StageTrace;

/// Infrastructure figures at the last planning stage, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    /// Access points hosting a server.
    pub deployed_pct: f64,
    /// Installed rpacks relative to every access point at full size.
    pub rpack_pct: f64,
    /// Edge workload relative to every access point at full size.
    pub utilization_pct: f64,
    /// Budget left unspent after the last planning stage.
    pub leftover_budget_pct: f64,
}

impl Metrics {
    pub fn compute(instance: &Instance, stages: &[StageTrace]) -> Self {
        let Some(last) = stages.get(instance.stages.min(stages.len()).saturating_sub(1)) else {
            return Self::default();
        };
        let aps = (instance.topology.node_count() - 1).max(1) as f64;
        let max = instance.params.max_rpacks as f64;
        let deployed = last.servers.len() as f64;
        let rpacks: f64 = last.servers.iter().map(|s| s.rpacks as f64).sum();
        let load: f64 = last.servers.iter().map(|s| s.workload_bits).sum();
        let pct = |x: f64, d: f64| if d > 0.0 { 100.0 * x / d } else { 0.0 };
        Self {
            deployed_pct: pct(deployed, aps),
            rpack_pct: pct(rpacks, aps * max),
            utilization_pct: pct(load, aps * max * instance.params.rpack_capacity_bits),
            leftover_budget_pct: pct(last.carryover, instance.budget),
        }
    }
}
