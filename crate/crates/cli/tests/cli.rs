use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mesu(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mesu")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn scenario(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

const TINY: &str = r#"{"schema":1,"topology":{"generate":"5N5E"},"stages":2,"seed":3}"#;

#[test]
fn plan_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    scenario(d.path(), "s.json", TINY);
    for out in ["a.json", "b.json"] {
        let o = mesu(d.path(), &["--quiet", "plan", "s.json", "--algo", "H", "--out-trace", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
    assert_eq!(fs::read(d.path().join("a.json")).unwrap(), fs::read(d.path().join("b.json")).unwrap());
}

#[test]
fn exported_model_accepts_planned_solution() {
    let d = tempfile::tempdir().unwrap();
    scenario(d.path(), "s.json", TINY);
    assert_eq!(code(&mesu(d.path(), &["plan", "s.json", "--algo", "UF", "--out-solution", "sol.csv", "--check"])), 0);
    assert_eq!(code(&mesu(d.path(), &["export-milp", "s.json", "--out-lp", "m.lp"])), 0);
    assert!(d.path().join("m.lp-meta").exists());
    let o = mesu(d.path(), &["verify", "m.lp-meta", "sol.csv"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).ends_with("result PASS\n"));

    // Push one deployment variable out of its bounds.
    let text = fs::read_to_string(d.path().join("sol.csv")).unwrap();
    let bad: String = text
        .lines()
        .map(|l| if l.starts_with("m_1_") { format!("{},99\n", l.split(',').next().unwrap()) } else { format!("{l}\n") })
        .collect();
    fs::write(d.path().join("bad.csv"), bad).unwrap();
    let o = mesu(d.path(), &["verify", "m.lp-meta", "bad.csv"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn compare_ranks_h_over_do() {
    let d = tempfile::tempdir().unwrap();
    scenario(d.path(), "s.json", TINY);
    let o = mesu(d.path(), &["compare", "s.json", "--algos", "H,DO"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let pct = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert!(pct("/H ") >= pct("/DO"));
}

#[test]
fn oracle_guard_and_small_solve() {
    let d = tempfile::tempdir().unwrap();
    scenario(d.path(), "big.json", r#"{"schema":1,"topology":{"generate":"25N50E"},"stages":3}"#);
    let o = mesu(d.path(), &["oracle", "big.json"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle limit"));

    scenario(
        d.path(),
        "small.json",
        r#"{"schema":1,"topology":{"generate":"4N3E"},"stages":1,"tasks":{"count":6},"servers":{"max_rpacks":2}}"#,
    );
    let o = mesu(d.path(), &["oracle", "small.json", "--out-trace", "w.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("optimum"));
    assert!(d.path().join("w.json").exists());
}

#[test]
fn usage_and_input_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&mesu(d.path(), &["plan", "--bogus"])), 1);
    assert_eq!(code(&mesu(d.path(), &["frobnicate"])), 1);
    assert_eq!(code(&mesu(d.path(), &["plan", "missing.json"])), 1);
    assert_eq!(code(&mesu(d.path(), &["plan", "x.json", "--algo", "ZZ"])), 1);
    scenario(d.path(), "v1.json", r#"{"schema":7}"#);
    assert_eq!(code(&mesu(d.path(), &["plan", "v1.json"])), 1);
    assert_eq!(code(&mesu(d.path(), &["gen-topology", "5N2E"])), 1);
    assert_eq!(code(&mesu(d.path(), &["--help"])), 0);
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let d = tempfile::tempdir().unwrap();
    scenario(d.path(), "s.json", TINY);
    let o = mesu(d.path(), &["plan", "s.json", "--out-trace", "no/such/dir/t.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_topology_is_seeded() {
    let d = tempfile::tempdir().unwrap();
    let a = mesu(d.path(), &["gen-topology", "10N23E", "--seed", "4"]);
    let b = mesu(d.path(), &["gen-topology", "10N23E", "--seed", "4"]);
    let c = mesu(d.path(), &["gen-topology", "10N23E", "--seed", "5"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(code(&mesu(d.path(), &["gen-topology", "10N23E", "--out", "t.txt"])), 0);
    assert!(fs::read_to_string(d.path().join("t.txt")).unwrap().starts_with("nodes 10"));
}

#[test]
fn sweep_without_timing_is_byte_stable() {
    let d = tempfile::tempdir().unwrap();
    scenario(
        d.path(),
        "sw.json",
        r#"{"schema":1,"axis":"budget","values":[40,80],"repetitions":2,"algorithms":["/H","/DO"],
           "base":{"schema":1,"topology":{"generate":"10N23E"},"stages":2}}"#,
    );
    for (out, jobs) in [("a.csv", "1"), ("b.csv", "3")] {
        let o = mesu(d.path(), &["--quiet", "sweep", "sw.json", "--out-csv", out, "--jobs", jobs, "--no-timing"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read_to_string(d.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(d.path().join("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 1 + 2 * (2 * 2 + 2));
}
