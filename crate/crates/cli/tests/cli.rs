use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use floquet_chain::io::CsvTable;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_floquet-chain"));
    c.env_remove("FLOQUET_CHAIN_OUTPUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().unwrap();
    serde_json::from_str(line).unwrap()
}

#[test]
fn decoupled_impurity_stays_excited() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g0");
    ok(&["dynamics", "--g", "0", "--L", "40", "--horizon", "5", "--out", out.to_str().unwrap()]);
    let t = CsvTable::read(&out.join("dynamics.csv")).unwrap();
    assert_eq!(t.schema, "trajectory");
    for p in t.column_f64("P").unwrap() {
        assert!((p.unwrap() - 1.0).abs() < 1e-12);
    }
    let meta = json(&out.join("dynamics.json"));
    assert!(meta["results"]["cross_check_max_abs_dp"].as_f64().unwrap() < 1e-10);
}

#[test]
fn invalid_switch_time_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let o = run(&["dynamics", "--tau", "1", "--T", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"], "InvalidDrive");
    assert_eq!(e["exit_code"], 2);
    assert!(!out.exists());
}

#[test]
fn pi_suffix_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pi");
    ok(&[
        "dynamics", "--L", "30", "--tau", "0.1pi", "--T", "0.25pi", "--a2", "2", "--horizon", "2", "--out",
        out.to_str().unwrap(),
    ]);
    let meta = json(&out.join("dynamics.json"));
    let tau = meta["config"]["drive"]["tau"].as_f64().unwrap();
    assert_eq!(tau, 0.1 * std::f64::consts::PI);
}

#[test]
fn resolved_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&[
        "dynamics", "--preset", "fig1", "--a2", "3.2", "--L", "60", "--horizon", "6", "--volterra-horizon", "2",
        "--out", first.to_str().unwrap(),
    ]);
    let meta = json(&first.join("dynamics.json"));
    let cfg_path = dir.path().join("resolved.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&meta["config"]).unwrap()).unwrap();
    let second = dir.path().join("second");
    ok(&["dynamics", "--config", cfg_path.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    for f in ["dynamics.csv", "dynamics_volterra.csv", "dynamics.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn toml_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "preset = \"fig1\"\n[chain]\nL = 50\n[drive]\na2 = 1.0\n[solver]\nhorizon = 3\nvolterra_horizon = 1\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&["dynamics", "--config", cfg.to_str().unwrap(), "--a2", "2.5", "--out", out.to_str().unwrap()]);
    let meta = json(&out.join("dynamics.json"));
    assert_eq!(meta["config"]["drive"]["a2"].as_f64().unwrap(), 2.5);
    assert_eq!(meta["config"]["chain"]["L"].as_u64().unwrap(), 50);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env-out");
    let o = bin()
        .args(["dynamics", "--L", "20", "--horizon", "1", "--volterra-horizon", "0.5"])
        .env("FLOQUET_CHAIN_OUTPUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("dynamics.csv").exists());
}

#[test]
fn spectrum_scan_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    ok(&["spectrum", "--preset", "fig1", "--L", "60", "--a2-scan", "0:2:1", "--out", out.to_str().unwrap()]);
    let t = CsvTable::read(&out.join("spectrum.csv")).unwrap();
    assert_eq!(t.columns, ["param", "quasienergy", "class", "gap_distance", "impurity_weight"]);
    assert_eq!(t.rows.len(), 3 * 61);
    let params = t.column_f64("param").unwrap();
    assert_eq!(params[0], Some(0.0));
    assert_eq!(params[t.rows.len() - 1], Some(2.0));
}

#[test]
fn spectrum_solvers_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("both");
    ok(&["spectrum", "--preset", "fig1", "--a2", "3.5", "--L", "30", "--solver", "both", "--out", out.to_str().unwrap()]);
    let meta = json(&out.join("spectrum.json"));
    let dev = meta["results"]["points"][0]["deviation"].as_f64().unwrap();
    assert!(dev < 1e-8, "{dev}");
    assert!(out.join("spectrum_sambe.csv").exists());
}

#[test]
fn truncation_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("k.toml");
    fs::write(&cfg, "preset = \"fig1\"\n[chain]\nL = 20\n[drive]\na2 = 3.5\n[solver]\nk_initial = 1\nk_step = 1\nk_max = 2\nk_tol = 1e-15\n").unwrap();
    let o = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--solver", "sambe", "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "TruncationNotConverged");
}

#[test]
fn fbs_profile_at_quarter_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fbs");
    ok(&["fbs", "--preset", "fig6", "--L", "200", "--out", out.to_str().unwrap()]);
    let meta = json(&out.join("fbs.json"));
    assert_eq!(meta["results"]["found"], true);
    let t = meta["results"]["profile_time"].as_f64().unwrap();
    assert!((t - 0.25 * std::f64::consts::PI / 4.0).abs() < 1e-15);
    let profile = CsvTable::read(&out.join("profile.csv")).unwrap();
    let pops: Vec<f64> = profile.column_f64("population").unwrap().into_iter().flatten().collect();
    assert_eq!(pops.len(), 201);
    assert!(pops.iter().take(21).sum::<f64>() > 0.9);
    let mode = CsvTable::read(&out.join("mode.csv")).unwrap();
    assert_eq!(mode.columns, ["j", "k", "re", "im"]);
    assert_eq!(mode.rows.len(), 201 * 17);
}

#[test]
fn filter_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    ok(&[
        "filter", "--preset", "fig5", "--L", "80", "--horizon", "10", "--samples", "11", "--out",
        out.to_str().unwrap(),
    ]);
    let cmp = CsvTable::read(&out.join("filter_comparison.csv")).unwrap();
    assert_eq!(cmp.columns, ["t", "P_filtered", "P_exact"]);
    assert_eq!(cmp.rows.len(), 11);
    let spectra = CsvTable::read(&out.join("filter_spectra.csv")).unwrap();
    assert_eq!(spectra.columns[..2], ["omega", "noise"]);
    assert_eq!(spectra.columns.len(), 5);
}

fn write_plan(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("plan.toml");
    fs::write(&p, body).unwrap();
    p
}

const SMALL_PLAN: &str = r#"
preset = "fig1"
axis = "amplitude"
horizon = 12
outputs = ["dynamics", "spectrum", "fbs", "filter"]
[range]
start = 0
stop = 3
step = 1
[chain]
L = 40
[plateau]
start = 8
end = 12
threshold = 0.05
"#;

#[test]
fn sweep_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), SMALL_PLAN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["sweep", "--plan", plan.to_str().unwrap(), "--workers", "1", "--out", a.to_str().unwrap()]);
    ok(&["sweep", "--plan", plan.to_str().unwrap(), "--workers", "3", "--out", b.to_str().unwrap()]);
    let (a, b) = (a.join("plan"), b.join("plan"));
    let summary = CsvTable::read(&a.join("summary.csv")).unwrap();
    assert_eq!(summary.schema, "sweep-summary");
    for col in ["param", "fbs", "gap_distance", "plateau", "filter_prediction"] {
        assert!(summary.column_index(col).is_some(), "{col}");
    }
    assert_eq!(summary.rows.len(), 4);
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["points"].as_array().unwrap().len(), 4);
    assert!(manifest["convergence_defaults"].is_object());
    for f in ["summary.csv", "spectrum.csv", "manifest.json", "points/dynamics_0002.csv", "points/fbs_0003.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn malformed_plan_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), &SMALL_PLAN.replace("step = 1", "step = 0"));
    let out = dir.path().join("o");
    let o = run(&["sweep", "--plan", plan.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "PlanInvalid");
    assert!(!out.exists());
}

#[test]
fn converge_report_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    ok(&["converge", "--preset", "fig5", "--L", "60", "--out", out.to_str().unwrap()]);
    let meta = json(&out.join("converge.json"));
    let r = &meta["results"];
    assert!(r["step"]["extrapolation_drift"].as_f64().unwrap() < 1e-6);
    assert!(r["truncation"]["max_drift"].as_f64().is_some());
    assert_eq!(r["size"]["sites"][1].as_u64().unwrap(), 60);
}

#[test]
fn missing_config_file_is_io_error() {
    let o = run(&["dynamics", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(4));
}
