//! Parameter sweeps: one axis varied over a base scenario, repeated over
//! seeds, every algorithm run per cell.

use std::io;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::planner::{plan, Algorithm};

use super::scenario::{BudgetSpec, Scenario};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Coverage percentage of the budget.
    Budget,
    /// Stage-1 tasks per node.
    Tasks,
    /// Full deployment price over rpack price: infra cost = (r - 1) * rpack cost.
    CostRatio,
    /// Planning stages; every cell is evaluated over the largest value.
    Stages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schema: u32,
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    /// Falls back to the base scenario's list.
    #[serde(default)]
    pub algorithms: Option<Vec<Algorithm>>,
    #[serde(default)]
    pub base: Scenario,
}

fn default_reps() -> usize {
    10
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let s: Self = serde_json::from_str(text)?;
        if s.schema != super::scenario::SCHEMA {
            return Err(HarnessError::Invalid(format!("unsupported sweep schema {}", s.schema)));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.values.is_empty() || self.repetitions == 0 {
            return Err(HarnessError::Invalid("a sweep needs at least one value and one repetition".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(HarnessError::Invalid("sweep values must be finite".into()));
        }
        if self.axis == Axis::Stages && self.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
            return Err(HarnessError::Invalid("stage values must be positive integers".into()));
        }
        Ok(())
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        self.algorithms.clone().unwrap_or_else(|| self.base.algorithms.clone())
    }

    /// Scenario of one (value, repetition) cell.
    pub fn cell(&self, value: f64, rep: usize) -> Scenario {
        let mut s = self.base.clone();
        s.seed = self.base.seed.wrapping_add(rep as u64);
        match self.axis {
            Axis::Budget => s.budget = BudgetSpec::CoveragePct(value),
            Axis::Tasks => {
                s.tasks.per_node = value;
                s.tasks.count = None;
            }
            Axis::CostRatio => s.cost.infra_cost = (value - 1.0) * s.cost.rpack_cost,
            Axis::Stages => {
                let most = self.values.iter().fold(1.0_f64, |a, &b| a.max(b)) as usize;
                s.stages = value as usize;
                s.eval_stages = Some(most);
                s.horizon = Some((most - s.stages) as u32);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: &'static str,
    pub axis_value: f64,
    pub seed: Option<u64>,
    pub algorithm: String,
    pub status: String,
    pub gamma_bar_pct: Option<f64>,
    #[serde(rename = "S_hat")]
    pub s_hat: Option<f64>,
    #[serde(rename = "M_hat")]
    pub m_hat: Option<f64>,
    #[serde(rename = "C_util")]
    pub c_util: Option<f64>,
    #[serde(rename = "dB_hat")]
    pub db_hat: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub gamma_std: Option<f64>,
}

impl SweepRow {
    fn failed(value: f64, seed: u64, algorithm: String, status: String) -> Self {
        Self {
            kind: "run",
            axis_value: value,
            seed: Some(seed),
            algorithm,
            status,
            gamma_bar_pct: None,
            s_hat: None,
            m_hat: None,
            c_util: None,
            db_hat: None,
            runtime_ms: None,
            gamma_min: None,
            gamma_max: None,
            gamma_std: None,
        }
    }
}

fn run_cell(spec: &SweepSpec, algos: &[Algorithm], value: f64, rep: usize, timing: bool) -> Vec<SweepRow> {
    let scenario = spec.cell(value, rep);
    let seed = scenario.seed;
    let instance = match scenario.resolve() {
        Ok(i) => i,
        Err(e) => return algos.iter().map(|a| SweepRow::failed(value, seed, a.to_string(), format!("error: {e}"))).collect(),
    };
    algos
        .iter()
        .map(|&a| {
            let start = Instant::now();
            match plan(&instance, a) {
                Ok(trace) => {
                    let m = trace.metrics;
                    SweepRow {
                        gamma_bar_pct: Some(trace.gamma_bar_pct),
                        s_hat: Some(m.deployed_pct),
                        m_hat: Some(m.rpack_pct),
                        c_util: Some(m.utilization_pct),
                        db_hat: Some(m.leftover_budget_pct),
                        runtime_ms: timing.then(|| start.elapsed().as_secs_f64() * 1e3),
                        status: "ok".into(),
                        ..SweepRow::failed(value, seed, a.to_string(), String::new())
                    }
                }
                Err(e) => SweepRow::failed(value, seed, a.to_string(), format!("error: {e}")),
            }
        })
        .collect()
}

fn summarize(value: f64, algorithm: &str, runs: &[&SweepRow]) -> SweepRow {
    let ok: Vec<&SweepRow> = runs.iter().copied().filter(|r| r.status == "ok").collect();
    let mean = |f: fn(&SweepRow) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let gammas: Vec<f64> = ok.iter().filter_map(|r| r.gamma_bar_pct).collect();
    let g_mean = mean(|r| r.gamma_bar_pct);
    let std = g_mean.map(|m| (gammas.iter().map(|g| (g - m).powi(2)).sum::<f64>() / gammas.len() as f64).sqrt());
    SweepRow {
        kind: "summary",
        axis_value: value,
        seed: None,
        algorithm: algorithm.to_string(),
        status: format!("{}/{} ok", ok.len(), runs.len()),
        gamma_bar_pct: g_mean,
        s_hat: mean(|r| r.s_hat),
        m_hat: mean(|r| r.m_hat),
        c_util: mean(|r| r.c_util),
        db_hat: mean(|r| r.db_hat),
        runtime_ms: mean(|r| r.runtime_ms),
        gamma_min: gammas.iter().copied().reduce(f64::min),
        gamma_max: gammas.iter().copied().reduce(f64::max),
        gamma_std: std,
    }
}

/// Runs every cell, `jobs` at a time (all cores when `None`). Rows come out
/// per axis value: runs ordered by seed then algorithm, followed by one
/// summary row per algorithm.
pub fn run_sweep(spec: &SweepSpec, jobs: Option<usize>, timing: bool) -> Result<Vec<SweepRow>, HarnessError> {
    spec.validate()?;
    let algos = spec.algorithms();
    let cells: Vec<(f64, usize)> =
        spec.values.iter().flat_map(|&v| (0..spec.repetitions).map(move |r| (v, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let results: Vec<Vec<SweepRow>> =
        pool.install(|| cells.par_iter().map(|&(v, r)| run_cell(spec, &algos, v, r, timing)).collect());

    let mut rows = Vec::new();
    for (vi, &value) in spec.values.iter().enumerate() {
        let block: Vec<&SweepRow> = results[vi * spec.repetitions..(vi + 1) * spec.repetitions].iter().flatten().collect();
        rows.extend(block.iter().map(|r| (*r).clone()));
        for a in &algos {
            let name = a.to_string();
            let runs: Vec<&SweepRow> = block.iter().copied().filter(|r| r.algorithm == name).collect();
            rows.push(summarize(value, &name, &runs));
        }
    }
    Ok(rows)
}

pub fn write_csv<W: io::Write>(rows: &[SweepRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io("csv output".into(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(axis: Axis, values: Vec<f64>, reps: usize) -> SweepSpec {
        SweepSpec {
            schema: 1,
            axis,
            values,
            repetitions: reps,
            algorithms: Some(vec![Algorithm::H]),
            base: Scenario { stages: 1, ..Scenario::default() },
        }
    }

    #[test]
    fn one_cell_gives_one_run_and_one_summary() {
        let rows = run_sweep(&spec(Axis::Budget, vec![50.0], 1), Some(1), false).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].kind, rows[1].kind), ("run", "summary"));
        assert_eq!(rows[0].gamma_bar_pct, rows[1].gamma_bar_pct);
        assert_eq!(rows[1].gamma_std, Some(0.0));
    }

    #[test]
    fn header_and_determinism() {
        let s = spec(Axis::Tasks, vec![2.0, 4.0], 2);
        let mut a = Vec::new();
        write_csv(&run_sweep(&s, Some(2), false).unwrap(), &mut a).unwrap();
        let mut b = Vec::new();
        write_csv(&run_sweep(&s, Some(1), false).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(
            "kind,axis_value,seed,algorithm,status,gamma_bar_pct,S_hat,M_hat,C_util,dB_hat,runtime_ms,gamma_min,gamma_max,gamma_std\n"
        ));
        assert_eq!(text.lines().count(), 1 + 2 * 2 + 2);
    }

    #[test]
    fn stage_cells_share_the_horizon() {
        let s = spec(Axis::Stages, vec![1.0, 3.0], 1);
        let c = s.cell(1.0, 0);
        assert_eq!((c.stages, c.eval_stages, c.horizon), (1, Some(3), Some(2)));
        assert_eq!(s.cell(2.0, 4).seed, s.base.seed + 4);
    }

    #[test]
    fn failures_become_rows() {
        let mut s = spec(Axis::Budget, vec![150.0], 1);
        s.base.stages = 1;
        let rows = run_sweep(&s, Some(1), false).unwrap();
        assert!(rows[0].status.starts_with("error"));
        assert_eq!(rows[1].status, "0/1 ok");
    }
}
