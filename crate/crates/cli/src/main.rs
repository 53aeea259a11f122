use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use mesu::check::check_trace;
use mesu::exact::{
    build_milp, emit_lp, exact_plan, read_solution_csv, solution_from_trace, verify_solution, write_solution_csv,
    ExactError, MilpModel, MilpOptions, OracleLimits,
};
use mesu::harness::sweep::write_csv;
use mesu::harness::{generate_topology, run_sweep, Scenario, SweepSpec};
use mesu::{plan, Algorithm, Instance};

#[derive(Parser)]
#[command(name = "mesu", version, about = "Multi-stage edge server deployment and upgrade planning")]
struct Cli {
    /// Override the seed of the scenario (or of the generator).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an "xNyE" topology file.
    GenTopology {
        spec: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one algorithm on a scenario.
    Plan {
        scenario: PathBuf,
        #[arg(long, default_value = "H")]
        algo: Algorithm,
        #[arg(long)]
        out_trace: Option<PathBuf>,
        /// Write the trace as MILP variable values.
        #[arg(long)]
        out_solution: Option<PathBuf>,
        /// Audit the trace and fail on any violation.
        #[arg(long)]
        check: bool,
    },
    /// Run several algorithms on a scenario and print a table.
    Compare {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',')]
        algos: Option<Vec<Algorithm>>,
    },
    /// Run a parameter sweep and write CSV rows.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Leave runtime_ms empty so output is reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Write the MILP in LP format plus a JSON sidecar (.lp-meta).
    ExportMilp {
        scenario: PathBuf,
        #[arg(long)]
        out_lp: PathBuf,
    },
    /// Solve a small scenario exactly.
    Oracle {
        scenario: PathBuf,
        #[arg(long)]
        out_trace: Option<PathBuf>,
    },
    /// Check a solution CSV against an exported model.
    Verify { meta: PathBuf, solution: PathBuf },
}

/// Exit 1 for bad input, 2 for failures while running.
enum Fail {
    Input(String),
    Runtime(String),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Input(_) => 1,
            Fail::Runtime(_) => 2,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> Fail {
    Fail::Input(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> Fail {
    Fail::Runtime(e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<(), Fail> {
    fs::write(path, text).map_err(|e| Fail::Runtime(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Fail> {
    File::create(path).map(BufWriter::new).map_err(|e| Fail::Runtime(format!("{}: {e}", path.display())))
}

fn load(path: &Path, seed: Option<u64>) -> Result<(Scenario, Instance), Fail> {
    let mut s = Scenario::load(path).map_err(input)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let inst = s.resolve().map_err(input)?;
    Ok((s, inst))
}

fn lp_meta_path(lp: &Path) -> PathBuf {
    lp.with_extension("lp-meta")
}

fn run(cli: Cli) -> Result<(), Fail> {
    let say = |line: String| {
        if !cli.quiet {
            println!("{line}");
        }
    };
    match &cli.cmd {
        Cmd::GenTopology { spec, out } => {
            let topo = generate_topology(spec, cli.seed.unwrap_or(1)).map_err(input)?;
            match out {
                Some(p) => write_file(p, &topo.to_text())?,
                None => print!("{}", topo.to_text()),
            }
        }
        Cmd::Plan { scenario, algo, out_trace, out_solution, check } => {
            let (_, inst) = load(scenario, cli.seed)?;
            let trace = plan(&inst, *algo).map_err(runtime)?;
            if let Some(p) = out_trace {
                write_file(p, &trace.to_json())?;
            }
            if let Some(p) = out_solution {
                let model = build_milp(&inst, &MilpOptions::default()).map_err(input)?;
                let sol = solution_from_trace(&model, &inst, &trace, &MilpOptions::default()).map_err(runtime)?;
                let mut w = create(p)?;
                write_solution_csv(&sol, &mut w).map_err(runtime)?;
                w.flush().map_err(runtime)?;
            }
            say(format!("{} gamma_bar_pct {:.4} gamma_bar {:.4}", trace.algorithm, trace.gamma_bar_pct, trace.gamma_bar));
            if *check {
                let v = check_trace(&inst, &trace);
                for x in &v {
                    eprintln!("stage {} {}: {}", x.stage, x.rule, x.detail);
                }
                if !v.is_empty() {
                    return Err(Fail::Runtime(format!("{} violations", v.len())));
                }
            }
        }
        Cmd::Compare { scenario, algos } => {
            let (s, inst) = load(scenario, cli.seed)?;
            let algos = algos.clone().unwrap_or(s.algorithms);
            say(format!("{:<5} {:>9} {:>8} {:>8} {:>8} {:>8}", "algo", "gamma%", "S_hat", "M_hat", "C_util", "dB_hat"));
            for a in algos {
                let t = plan(&inst, a).map_err(runtime)?;
                let m = t.metrics;
                say(format!(
                    "{:<5} {:>9.3} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                    t.algorithm, t.gamma_bar_pct, m.deployed_pct, m.rpack_pct, m.utilization_pct, m.leftover_budget_pct
                ));
            }
        }
        Cmd::Sweep { spec, out_csv, jobs, no_timing } => {
            let text = fs::read_to_string(spec).map_err(|e| Fail::Input(format!("{}: {e}", spec.display())))?;
            let mut sw = SweepSpec::from_json(&text).map_err(input)?;
            sw.base.base_dir = spec.parent().map(Path::to_path_buf);
            if let Some(seed) = cli.seed {
                sw.base.seed = seed;
            }
            if *jobs == Some(0) {
                return Err(Fail::Input("--jobs must be at least 1".into()));
            }
            let rows = run_sweep(&sw, *jobs, !no_timing).map_err(runtime)?;
            match out_csv {
                Some(p) => {
                    let mut w = create(p)?;
                    write_csv(&rows, &mut w).map_err(runtime)?;
                    w.flush().map_err(runtime)?;
                    let failed = rows.iter().filter(|r| r.kind == "run" && r.status != "ok").count();
                    say(format!("{} rows written to {} ({failed} failed runs)", rows.len(), p.display()));
                }
                None => write_csv(&rows, io::stdout().lock()).map_err(runtime)?,
            }
        }
        Cmd::ExportMilp { scenario, out_lp } => {
            let (_, inst) = load(scenario, cli.seed)?;
            let model = build_milp(&inst, &MilpOptions::default()).map_err(input)?;
            let mut w = create(out_lp)?;
            emit_lp(&model, &mut w).map_err(runtime)?;
            w.flush().map_err(runtime)?;
            let meta = lp_meta_path(out_lp);
            write_file(&meta, &model.to_json())?;
            say(format!(
                "{} variables, {} constraints -> {} (+ {})",
                model.variables.len(),
                model.rows.len(),
                out_lp.display(),
                meta.display()
            ));
        }
        Cmd::Oracle { scenario, out_trace } => {
            let (_, inst) = load(scenario, cli.seed)?;
            let res = exact_plan(&inst, &OracleLimits::default()).map_err(|e| match e {
                ExactError::TooLarge(_) | ExactError::Invalid(_) => input(e),
                e => runtime(e),
            })?;
            if let Some(p) = out_trace {
                write_file(p, &res.witness.to_json())?;
            }
            let per: Vec<String> = res.per_stage.iter().map(|g| g.to_string()).collect();
            say(format!(
                "optimum gamma_bar_pct {:.4} gamma_bar {:.4} per stage [{}] ({} nodes explored)",
                res.gamma_bar_pct,
                res.gamma_bar,
                per.join(" "),
                res.nodes_explored
            ));
        }
        Cmd::Verify { meta, solution } => {
            let text = fs::read_to_string(meta).map_err(|e| Fail::Input(format!("{}: {e}", meta.display())))?;
            let model = MilpModel::from_json(&text).map_err(input)?;
            let file = File::open(solution).map_err(|e| Fail::Input(format!("{}: {e}", solution.display())))?;
            let sol = read_solution_csv(file).map_err(input)?;
            let report = verify_solution(&model, &sol).map_err(input)?;
            if cli.quiet {
                for l in report.failures() {
                    eprintln!("{} {:e} FAIL", l.id, l.residual);
                }
            } else {
                print!("{report}");
            }
            if !report.pass() {
                return Err(Fail::Input(format!("{} checks failed", report.failures().count())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Fail::Input(msg) | Fail::Runtime(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
