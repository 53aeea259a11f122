#![allow(dead_code)]

use mesu::harness::{BudgetSpec, Scenario, TopologySource};
use mesu::harness::scenario::{DeploymentSpec, TaskSpec};
use mesu::{Instance, SystemParams};

/// Small splitmix stream so instance shapes do not depend on the library RNG.
pub struct Mix(pub u64);

impl Mix {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    pub fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }
}

/// Oracle-sized scenario: at most 5 nodes, 2 stages, 8 stage-1 tasks,
/// 2 rpacks per server.
pub fn tiny_scenario(seed: u64) -> Scenario {
    let mut m = Mix(seed ^ 0xC0FFEE);
    let nodes = m.range(4, 5);
    let aps = nodes - 1;
    let links = m.range(aps, aps * (aps - 1) / 2);
    let max_rpacks = m.range(1, 2) as u32;
    Scenario {
        seed,
        topology: TopologySource::Generate(format!("{nodes}N{links}E")),
        stages: m.range(1, 2) as usize,
        budget: BudgetSpec::CoveragePct(m.range(10, 100) as f64),
        servers: SystemParams { max_rpacks, ..SystemParams::default() },
        tasks: TaskSpec { count: Some(m.range(3, 8) as usize), ..TaskSpec::default() },
        initial_deployment: DeploymentSpec { fraction: m.range(0, 2) as f64 * 0.25, rpacks: Some(1), servers: None },
        ..Scenario::default()
    }
}

pub fn tiny_instance(seed: u64) -> Instance {
    tiny_scenario(seed).resolve().expect("tiny scenario resolves")
}
