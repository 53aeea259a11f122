//! Acceptance gate: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{tiny_instance, Mix};
use mesu::check::check_trace;
use mesu::exact::flow::Transport;
use mesu::exact::{build_milp, exact_plan, solution_from_trace, verify_solution, MilpOptions, OracleLimits};
use mesu::harness::scenario::TaskSpec;
use mesu::harness::{run_sweep, Axis, BudgetSpec, Scenario, SweepRow, SweepSpec, TopologySource};
use mesu::infrastructure::CostModel;
use mesu::offload::max_cloud_fraction;
use mesu::topology::{Link, PropagationOverrides};
use mesu::workload::StageWorkload;
use mesu::{plan, Algorithm, Instance, NodeId, SystemParams, Task, TaskId, Topology};

struct Outcome {
    pass: bool,
    detail: String,
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.detail.push_str(&format!("; {:.2} s", took.as_secs_f64()));
    if let Some(limit) = limit {
        if took > limit {
            out.pass = false;
            out.detail.push_str(&format!(" exceeds {} s", limit.as_secs()));
        }
    }
    out
}

fn task(id: u32, origin: u32, size: f64, deadline: f64, sigma: f64) -> Task {
    Task {
        id: TaskId(id),
        origin: NodeId(origin),
        deadline_s: deadline,
        size_bits: size,
        sigma,
        base_deadline_s: deadline,
        base_size_bits: size,
        grows_size: false,
        tightens_deadline: false,
    }
}

fn unit(m: &mut Mix) -> f64 {
    (m.next() >> 11) as f64 / (1u64 << 53) as f64
}

/// Chain 1 - 2 - ... - h - cloud(0); no propagation overrides.
fn chain(hops: usize, m: &mut Mix) -> (Topology, Vec<(f64, f64)>) {
    let mut links = Vec::new();
    let mut attrs = Vec::new();
    for i in 1..=hops {
        let next = if i == hops { 0 } else { i + 1 };
        let rate = 1e9 + unit(m) * 49e9;
        let length = unit(m) * 2e6;
        links.push(Link { a: NodeId(i as u32), b: NodeId(next as u32), length_m: length, rate_bps: rate });
        attrs.push((rate, length));
    }
    let topo = Topology::new(hops + 1, NodeId(0), links, 2e8, PropagationOverrides::default()).unwrap();
    (topo, attrs)
}

fn criterion_1() -> Outcome {
    let mut m = Mix(1);
    let mut worst = 0.0_f64;
    let mut bad = 0;
    for _ in 0..1000 {
        let hops = m.range(1, 4) as usize;
        let (topo, attrs) = chain(hops, &mut m);
        let zeta = unit(&mut m);
        let beta = 1e9 + unit(&mut m) * 99e9;
        let t = task(0, 1, 1e6 + unit(&mut m) * 50e9, 0.01 + unit(&mut m) * 10.0, 1.0 + 2.0 * unit(&mut m));
        let params = SystemParams { zeta, cloud_rate_bps: beta, ..SystemParams::default() };
        let work = vec![StageWorkload { stage: 1, exponent: 0, initial_count: 1, tasks: vec![t.clone()] }];
        let inst = Instance::new(topo, params, CostModel::default(), 0.0, 1, work, None, vec![]).unwrap();
        let bound = max_cloud_fraction(&t, &inst.delay_model());

        // Independent delay along the chain, both directions.
        let inv: f64 = attrs.iter().map(|a| 1.0 / a.0).sum();
        let prop: f64 = attrs.iter().map(|a| a.1).sum::<f64>() / 2e8;
        let f = |b: f64| 2.0 * prop + b * inv + b / beta + zeta * b * inv;
        let limit = t.deadline_s * t.sigma;
        let oracle = if f(0.0) > limit {
            0.0
        } else if f(t.size_bits) <= limit {
            t.size_bits
        } else {
            let (mut lo, mut hi) = (0.0, t.size_bits);
            while hi - lo > 0.5 {
                let mid = 0.5 * (lo + hi);
                if f(mid) <= limit {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let diff = (bound - oracle).abs();
        worst = worst.max(diff);
        if diff > 1.0 && diff > 1e-9 * oracle {
            bad += 1;
        }
    }
    Outcome { pass: bad == 0, detail: format!("1000 draws, {bad} mismatches, worst difference {worst:.3} bits") }
}

fn criterion_2() -> Outcome {
    let mut m = Mix(2);
    let mut bad = 0;
    for _ in 0..50 {
        let stages = m.range(1, 3) as usize;
        let nodes = m.range(2, 8) as usize;
        let (topo, _) = chain(nodes - 1, &mut m);
        let aps: Vec<NodeId> = topo.access_points();
        let servers: Vec<NodeId> = aps.iter().copied().filter(|_| m.below(2) == 0).collect();
        let mut work = Vec::new();
        let mut shapes = Vec::new();
        for t in 1..=stages {
            let r = m.below(21) as usize;
            let tasks = (0..r).map(|k| task(k as u32, aps[m.below(aps.len() as u64) as usize].0, 5e9, 5.0, 1.0)).collect();
            work.push(StageWorkload { stage: t, exponent: 0, initial_count: r, tasks });
            shapes.push((servers.len() + 1, r));
        }
        let inst = Instance::new(topo, SystemParams::default(), CostModel::default(), 1000.0, stages, work, None, vec![]).unwrap();
        let model = build_milp(&inst, &MilpOptions { servers: Some(servers), ..MilpOptions::default() }).unwrap();
        // |V|T + sum(|S| + 2(|S||R| + |R|)) and T + |V|T + sum(2|R| + 3|S| + 3|S||R| - 1)
        let vars: usize = nodes * stages + shapes.iter().map(|&(s, r)| s + 2 * (s * r + r)).sum::<usize>();
        let cons: usize = stages + nodes * stages + shapes.iter().map(|&(s, r)| 2 * r + 3 * s + 3 * s * r - 1).sum::<usize>();
        if model.variables.len() != vars || model.rows.len() != cons {
            bad += 1;
        }
    }
    Outcome { pass: bad == 0, detail: format!("50 shapes, {bad} count mismatches") }
}

fn criterion_3() -> Outcome {
    let mut gaps = Vec::new();
    let mut beaten = 0;
    for seed in 0..100 {
        let inst = tiny_instance(seed);
        let h = plan(&inst, Algorithm::H).unwrap().gamma_bar_pct;
        let opt = exact_plan(&inst, &OracleLimits::default()).unwrap().gamma_bar_pct;
        if h > opt + 1e-9 {
            beaten += 1;
        }
        gaps.push(if opt > 0.0 { (opt - h) / opt } else { 0.0 });
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: beaten == 0 && mean <= 0.10,
        detail: format!("100 instances, heuristic above optimum {beaten} times, mean gap {:.2}% (max {:.2}%)", mean * 100.0, worst * 100.0),
    }
}

fn ci_scenarios() -> Vec<Instance> {
    let mut out: Vec<Instance> = (0..100).map(tiny_instance).collect();
    for (spec, stages, eval) in [("5N5E", 3, 3), ("10N23E", 3, 3), ("15N27E", 3, 3), ("20N48E", 3, 3), ("10N23E", 2, 4), ("15N27E", 1, 3)] {
        let s = Scenario {
            topology: TopologySource::Generate(spec.into()),
            stages,
            eval_stages: Some(eval),
            seed: 11,
            ..Scenario::default()
        };
        out.push(s.resolve().unwrap());
    }
    out
}

fn criterion_4() -> Outcome {
    let mut traces = 0;
    let mut violations = 0;
    let mut first = None;
    for inst in ci_scenarios() {
        let model = build_milp(&inst, &MilpOptions::default()).unwrap();
        let mut all: Vec<_> = Algorithm::ALL.iter().map(|&a| plan(&inst, a).unwrap()).collect();
        if OracleLimits::default().check(&inst).is_ok() {
            all.push(exact_plan(&inst, &OracleLimits::default()).unwrap().witness);
        }
        for trace in all {
            traces += 1;
            let v = check_trace(&inst, &trace);
            let sol = solution_from_trace(&model, &inst, &trace, &MilpOptions::default()).unwrap();
            let report = verify_solution(&model, &sol).unwrap();
            let failed: Vec<String> = report.failures().map(|l| l.id.clone()).collect();
            violations += v.len() + failed.len();
            if first.is_none() {
                if let Some(x) = v.first() {
                    first = Some(format!("{} {}: {}", trace.algorithm, x.rule, x.detail));
                } else if let Some(x) = failed.first() {
                    first = Some(format!("{} row {x}", trace.algorithm));
                }
            }
        }
    }
    let mut detail = format!("{traces} traces audited, {violations} violations");
    if let Some(f) = first {
        detail.push_str(&format!(", first: {f}"));
    }
    Outcome { pass: violations == 0, detail }
}

fn reference_network(spec: &str) -> Scenario {
    Scenario {
        topology: TopologySource::Generate(spec.into()),
        stages: 3,
        budget: BudgetSpec::CoveragePct(75.0),
        tasks: TaskSpec { per_node: 3.0, ..TaskSpec::default() },
        seed: 1,
        ..Scenario::default()
    }
}

fn summary(rows: &[SweepRow], value: f64, algo: Algorithm) -> f64 {
    rows.iter()
        .find(|r| r.kind == "summary" && r.axis_value == value && r.algorithm == algo.name())
        .and_then(|r| r.gamma_bar_pct)
        .unwrap_or(f64::NAN)
}

fn criterion_5() -> Outcome {
    let spec = SweepSpec {
        schema: 1,
        axis: Axis::Budget,
        values: vec![75.0],
        repetitions: 10,
        algorithms: Some(vec![Algorithm::H, Algorithm::Df, Algorithm::Uf, Algorithm::Do]),
        base: reference_network("25N50E"),
    };
    let rows = run_sweep(&spec, None, false).unwrap();
    let [h, df, uf, dop] = [Algorithm::H, Algorithm::Df, Algorithm::Uf, Algorithm::Do].map(|a| summary(&rows, 75.0, a));
    let pass = h > df && h > uf && h > dop && dop < df && dop < uf;
    Outcome { pass, detail: format!("mean satisfied: /H {h:.2}%, /DF {df:.2}%, /UF {uf:.2}%, /DO {dop:.2}%") }
}

fn criterion_6() -> Outcome {
    let values = vec![40.0, 60.0, 80.0, 100.0];
    let spec = SweepSpec {
        schema: 1,
        axis: Axis::Budget,
        values: values.clone(),
        repetitions: 10,
        algorithms: Some(Algorithm::ALL.to_vec()),
        base: reference_network("25N50E"),
    };
    let rows = run_sweep(&spec, None, false).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for a in Algorithm::ALL {
        let means: Vec<f64> = values.iter().map(|&v| summary(&rows, v, a)).collect();
        let ok = means.windows(2).all(|w| w[1] >= w[0] - 1.0);
        pass &= ok;
        let shown: Vec<String> = means.iter().map(|m| format!("{m:.1}")).collect();
        parts.push(format!("{a} [{}]", shown.join(" ")));
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn criterion_7() -> Outcome {
    let values = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    let spec = SweepSpec {
        schema: 1,
        axis: Axis::Stages,
        values,
        repetitions: 10,
        algorithms: Some(vec![Algorithm::H, Algorithm::Ho]),
        base: reference_network("25N50E"),
    };
    let rows = run_sweep(&spec, None, false).unwrap();
    let h: Vec<f64> = (1..=5).map(|t| summary(&rows, t as f64, Algorithm::H)).collect();
    let ho: Vec<f64> = (1..=5).map(|t| summary(&rows, t as f64, Algorithm::Ho)).collect();
    let pass = ho[4] - ho[0] > 0.0 && (h[0] - h[4]).abs() <= 5.0;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" ");
    Outcome { pass, detail: format!("T=1..5 /H [{}], /HO [{}]", fmt(&h), fmt(&ho)) }
}

fn criterion_8() -> Outcome {
    let s = Scenario { topology: TopologySource::Generate("100N150E".into()), ..reference_network("100N150E") };
    let start = Instant::now();
    let a = plan(&s.resolve().unwrap(), Algorithm::H).unwrap().to_json();
    let first = start.elapsed();
    let b = plan(&s.resolve().unwrap(), Algorithm::H).unwrap().to_json();
    let same = a == b;
    Outcome {
        pass: same && first < Duration::from_secs(10),
        detail: format!("100N150E, 300 stage-1 tasks, T=3: {:.3} s per run, identical traces: {same}", first.as_secs_f64()),
    }
}

fn criterion_9() -> Outcome {
    let mut checked = 0;
    let mut bad = 0;
    for seed in 0..50 {
        let inst = tiny_instance(1000 + seed);
        let cp = inst.params.rpack_capacity_bits;
        for a in Algorithm::ALL {
            let trace = plan(&inst, a).unwrap();
            for st in &trace.stages {
                let tasks = &inst.workloads[st.stage - 1].tasks;
                let servers = st.servers.iter().map(|s| (s.node, s.rpacks as f64 * cp)).collect();
                let tr = Transport::new(tasks, servers, inst.delay_model());
                let subset: Vec<usize> = (0..tasks.len()).filter(|&k| st.assignment.satisfied.contains(&tasks[k].id)).collect();
                checked += 1;
                let (flow, demand) = tr.flow_value(&subset);
                if flow < demand || tr.certify(&subset).is_none() {
                    bad += 1;
                }
            }
        }
    }
    Outcome { pass: bad == 0, detail: format!("{checked} stage assignments, {bad} not certified by the flow oracle") }
}

fn main() {
    type Criterion = (u32, &'static str, Option<u64>, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        (1, "cloud-share bound matches bisection", Some(1), criterion_1),
        (2, "MILP sizes match the closed form", Some(5), criterion_2),
        (3, "oracle dominance and near-optimality", Some(300), criterion_3),
        (4, "feasibility audit", None, criterion_4),
        (5, "baseline ordering", Some(120), criterion_5),
        (6, "budget monotonicity", Some(180), criterion_6),
        (7, "stage-count trends", None, criterion_7),
        (8, "determinism and performance", None, criterion_8),
        (9, "flow-oracle equivalence", None, criterion_9),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let out = timed(limit.map(Duration::from_secs), f);
        if !out.pass {
            failed += 1;
        }
        println!("criterion {n} {}: {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
