use mesu::harness::scenario::TaskSpec;
use mesu::harness::{BudgetSpec, Scenario, TopologySource};
use mesu::{plan, Algorithm};

fn scenario(spec: &str, stages: usize, eval: usize, seed: u64) -> Scenario {
    Scenario {
        topology: TopologySource::Generate(spec.into()),
        stages,
        eval_stages: Some(eval),
        budget: BudgetSpec::CoveragePct(75.0),
        seed,
        ..Scenario::default()
    }
}

#[test]
fn only_h_plans_the_last_stage_on_a_prediction() {
    let inst = scenario("10N23E", 2, 4, 5).resolve().unwrap();
    assert!(inst.predicted_final.is_some());
    let h = plan(&inst, Algorithm::H).unwrap();
    let ho = plan(&inst, Algorithm::Ho).unwrap();
    assert_eq!(h.stages.iter().map(|s| s.predicted).collect::<Vec<_>>(), [false, true, false, false]);
    assert!(ho.stages.iter().all(|s| !s.predicted));
    // Identical up to the predicted stage.
    assert_eq!(h.stages[0], ho.stages[0]);
    // No purchases after the planning horizon.
    for t in [&h, &ho] {
        assert!(t.stages[2..].iter().all(|s| s.actions.is_empty() && s.allocation == 0.0));
        assert_eq!(t.stages.len(), 4);
    }
}

#[test]
fn no_prediction_without_a_horizon() {
    let inst = scenario("10N23E", 3, 3, 5).resolve().unwrap();
    assert!(inst.predicted_final.is_none());
    let h = plan(&inst, Algorithm::H).unwrap();
    let ho = plan(&inst, Algorithm::Ho).unwrap();
    assert_eq!(h.stages, ho.stages);
}

#[test]
fn small_network_ordering() {
    let (mut h_sum, mut d_sum) = (0.0, 0.0);
    for seed in 1..=10 {
        let mut s = scenario("5N5E", 3, 3, seed);
        s.tasks = TaskSpec { count: Some(5), ..TaskSpec::default() };
        let inst = s.resolve().unwrap();
        h_sum += plan(&inst, Algorithm::H).unwrap().gamma_bar_pct;
        d_sum += plan(&inst, Algorithm::Do).unwrap().gamma_bar_pct;
    }
    assert!(h_sum > d_sum, "{h_sum} vs {d_sum}");
}

#[test]
fn more_budget_never_hurts_on_average() {
    let mean = |pct: f64| -> f64 {
        (1..=6)
            .map(|seed| {
                let mut s = scenario("15N27E", 3, 3, seed);
                s.budget = BudgetSpec::CoveragePct(pct);
                plan(&s.resolve().unwrap(), Algorithm::H).unwrap().gamma_bar_pct
            })
            .sum::<f64>()
            / 6.0
    };
    assert!(mean(20.0) <= mean(80.0) + 1.0);
}
