use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stratsynth"))
}

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("demo").join(name)
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/qf_bv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn z3_available() -> bool {
    Command::new("z3").arg("-version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn synth_writes_artifacts_and_replays_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = demo("simulated.json");
    for d in [a.path(), b.path()] {
        let o = run(&["synth", "--config", s(&cfg), "--out", s(d)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["portfolio.txt", "final_strategy.txt", "report.json", "cache.jsonl", "manifest.json"] {
            assert!(d.join(f).is_file(), "missing {f}");
        }
    }
    let ra = fs::read(a.path().join("report.json")).unwrap();
    assert_eq!(ra, fs::read(b.path().join("report.json")).unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    let portfolio = fs::read_to_string(a.path().join("portfolio.txt")).unwrap();
    assert_eq!(portfolio.lines().count(), 4);
}

#[test]
fn step_commands_compose() {
    let d = tempfile::tempdir().unwrap();
    let cfg = demo("simulated.json");
    let out = s(d.path());
    let o = run(&["stage1", "--config", s(&cfg), "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pool = d.path().join("pool.txt");
    assert!(fs::read_to_string(&pool).unwrap().lines().count() >= 4);

    let o = run(&["select", "--config", s(&cfg), "--out", out, "--pool", s(&pool)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace: Vec<f64> = String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(trace.len(), 4);
    assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{trace:?}");

    let portfolio = d.path().join("portfolio.txt");
    let o = run(&["stage2", "--config", s(&cfg), "--out", out, "--portfolio", s(&portfolio), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("final_strategy.txt").is_file());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 5);

    let o = run(&["report", "--cache", s(&d.path().join("cache.jsonl")), "--config", s(&cfg), "--format", "json"]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let row = &report["rows"][0];
    assert!(row["percent_solved"].as_f64().unwrap() <= 100.0);
}

#[test]
fn invalid_config_exits_2_naming_key() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    let catalog = demo("../../core/catalogs/qf_bv.json");
    fs::write(
        &cfg,
        format!(r#"{{"catalog_path": "{}", "benchmark_dirs": ["{}"], "timeout_ms": 0}}"#, s(&catalog), s(&data_dir())),
    )
    .unwrap();
    let o = run(&["synth", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("timeout_ms"));

    fs::write(&cfg, r#"{"catalog_path": "x.json", "benchmark_dirs": [], "bogus": true}"#).unwrap();
    let o = run(&["synth", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn missing_solver_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.json");
    let catalog = demo("../../core/catalogs/qf_bv.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"catalog_path": "{}", "benchmark_dirs": ["{}"], "solver_path": "no-such-solver-xyz"}}"#,
            s(&catalog),
            s(&data_dir())
        ),
    )
    .unwrap();
    let o = run(&["synth", "--config", s(&cfg), "--out", s(d.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn features_prints_json() {
    let o = run(&["features", "--instance", s(&data_dir().join("gen00.smt2"))]);
    assert!(o.status.success());
    let f: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(f["num-consts"], 4);
    assert_eq!(f["num-bv-consts"], 4);
    assert_eq!(f["is-propositional"], false);
}

#[test]
fn report_on_empty_cache_has_error_row() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("cache.jsonl");
    fs::write(&p, "").unwrap();
    let o = run(&["report", "--cache", s(&p), "--format", "json"]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["rows"][0]["error"], "empty record set");
}

#[test]
fn eval_with_real_solver() {
    if !z3_available() {
        eprintln!("z3 not on PATH; skipping");
        return;
    }
    let d = tempfile::tempdir().unwrap();
    let strategy = d.path().join("s.txt");
    fs::write(&strategy, "(then simplify (then bit-blast sat))\n").unwrap();
    let o = run(&["eval", "--config", s(&demo("z3.json")), "--out", s(d.path()), "--strategy", s(&strategy), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["rows"][0]["wrong_count"], 0);
    assert_eq!(r["rows"][0]["total"], 24);
    assert!(d.path().join("eval_report.json").is_file());
}
