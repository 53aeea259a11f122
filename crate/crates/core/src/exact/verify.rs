//! Residual check of a variable assignment against a [`MilpModel`], and
//! conversion of planner traces into such assignments.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use crate::instance::Instance;
use crate::planner::PlanTrace;

use super::milp::{b_name, d_name, g_name, gs_name, m_name, server_set, MilpModel, MilpOptions, Sense, VarKind};
use super::ExactError;

pub const VERIFY_TOL: f64 = 1e-6;

pub type Solution = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportLine {
    pub id: String,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub lines: Vec<ReportLine>,
    pub objective: f64,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportLine> {
        self.lines.iter().filter(|l| !l.pass)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{} {:e} {}", l.id, l.residual, if l.pass { "PASS" } else { "FAIL" })?;
        }
        writeln!(f, "objective {}", self.objective)?;
        writeln!(f, "result {}", if self.pass() { "PASS" } else { "FAIL" })
    }
}

/// Checks every row, bound and integrality requirement of `model`.
pub fn verify_solution(model: &MilpModel, solution: &Solution) -> Result<VerifyReport, ExactError> {
    let values: Vec<f64> = model
        .variables
        .iter()
        .map(|v| solution.get(&v.name).copied().ok_or_else(|| ExactError::MissingVariable(v.name.clone())))
        .collect::<Result<_, _>>()?;
    let mut lines = Vec::with_capacity(model.rows.len() + model.variables.len());
    let line = |id: String, residual: f64| ReportLine { id, residual, pass: residual <= VERIFY_TOL };

    for r in &model.rows {
        let lhs: f64 = r.terms.iter().map(|&(i, c)| c * values[i]).sum();
        let residual = match r.sense {
            Sense::Le => (lhs - r.rhs).max(0.0),
            Sense::Ge => (r.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - r.rhs).abs(),
        };
        lines.push(line(r.name.clone(), residual));
    }
    for (v, &x) in model.variables.iter().zip(&values) {
        let mut residual = (v.lower - x).max(0.0).max(x - v.upper);
        if v.kind != VarKind::Continuous {
            residual = residual.max((x - x.round()).abs());
        }
        if !x.is_finite() {
            residual = f64::INFINITY;
        }
        lines.push(line(format!("bound_{}", v.name), residual));
    }
    let objective = model.objective.iter().map(|&(i, c)| c * values[i]).sum();
    Ok(VerifyReport { lines, objective })
}

/// Reads `variable,value` rows (header optional).
pub fn read_solution_csv<R: io::Read>(input: R) -> Result<Solution, ExactError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut out = Solution::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ExactError::Solution(e.to_string()))?;
        if rec.len() != 2 {
            return Err(ExactError::Solution(format!("row {}: expected 2 fields, found {}", i + 1, rec.len())));
        }
        if i == 0 && &rec[0] == "variable" {
            continue;
        }
        let v: f64 = rec[1].parse().map_err(|_| ExactError::Solution(format!("row {}: bad value {:?}", i + 1, &rec[1])))?;
        if out.insert(rec[0].to_string(), v).is_some() {
            return Err(ExactError::Solution(format!("row {}: duplicate variable {}", i + 1, &rec[0])));
        }
    }
    Ok(out)
}

pub fn write_solution_csv<W: io::Write>(solution: &Solution, out: W) -> Result<(), ExactError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| ExactError::Solution(e.to_string());
    w.write_record(["variable", "value"]).map_err(err)?;
    for (k, v) in solution {
        w.write_record([k.as_str(), &format!("{v:?}")]).map_err(err)?;
    }
    w.flush().map_err(|e| ExactError::Solution(e.to_string()))
}

/// Variable values describing what `trace` did in the planning stages.
pub fn solution_from_trace(
    model: &MilpModel,
    instance: &Instance,
    trace: &PlanTrace,
    options: &MilpOptions,
) -> Result<Solution, ExactError> {
    let unit = model.unit_bits;
    let cloud = instance.topology.cloud();
    let servers = server_set(instance, options);
    let mut sol = Solution::new();
    for v in &model.variables {
        sol.insert(v.name.clone(), if v.lower == v.upper { v.lower } else { 0.0 });
    }
    fn slot(sol: &mut Solution, name: String) -> Result<&mut f64, ExactError> {
        sol.get_mut(&name)
            .ok_or_else(|| ExactError::Invalid(format!("trace uses {name}, which the model does not declare")))
    }

    for st in trace.stages.iter().take(model.stages) {
        let t = st.stage;
        for s in instance.topology.nodes() {
            let deployed = s == cloud || st.servers.iter().any(|x| x.node == s);
            *slot(&mut sol, d_name(t, s))? = deployed as u8 as f64;
        }
        let mut added: BTreeMap<_, u32> = BTreeMap::new();
        for a in &st.actions {
            *added.entry(a.node).or_default() += a.rpacks;
        }
        for (s, m) in added {
            *slot(&mut sol, m_name(t, s))? = m as f64;
        }
        let tasks = &instance.workloads[t - 1].tasks;
        for f in &st.assignment.fractions {
            *slot(&mut sol, b_name(t, f.task.0, f.server))? += f.bits / unit;
        }
        for task in tasks {
            let ok = st.assignment.satisfied.binary_search(&task.id).is_ok();
            *slot(&mut sol, g_name(t, task.id.0))? = ok as u8 as f64;
            for &s in &servers {
                *slot(&mut sol, gs_name(t, task.id.0, s))? = ok as u8 as f64;
            }
        }
    }
    Ok(sol)
}
