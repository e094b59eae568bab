use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn srbkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srbkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Write `config` into `dir` and run it with `--out dir/out`.
fn run_config(dir: &Path, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (srbkit(&args), out)
}

fn result(out: &Path) -> Value {
    serde_json::from_slice(&fs::read(out.join("result.json")).unwrap()).unwrap()
}

#[test]
fn unknown_top_level_key_is_rejected_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), r#"{"system": {"name": "fat-cat"}, "pipeline": {"kind": "lyapunov"}, "colour": 1}"#, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_pipeline_and_system_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [
        r#"{"system": {"name": "fat-cat"}, "pipeline": {"kind": "lyapunov", "steps": 5}}"#,
        r#"{"system": {"name": "fat-cat", "warp": 0.5}, "pipeline": {"kind": "lyapunov"}}"#,
        r#"{"system": {"name": "henon"}, "pipeline": {"kind": "lyapunov"}}"#,
        r#"{"system": {"name": "fat-cat"}, "pipeline": {"kind": "bogus"}}"#,
    ] {
        let (o, out) = run_config(dir.path(), cfg, &[]);
        assert_eq!(o.status.code(), Some(2), "{cfg}");
        assert!(!out.exists());
    }
}

#[test]
fn semantic_errors_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [
        r#"{"pipeline": {"kind": "lyapunov"}}"#,
        r#"{"system": {"name": "solenoid", "contraction": 0.7}, "pipeline": {"kind": "lyapunov"}}"#,
        r#"{"system": {"name": "galerkin-rd"}, "pipeline": {"kind": "markov"}}"#,
        r#"{"pipeline": {"kind": "gibbs", "matrix": [[1, 1], [1]]}}"#,
    ] {
        let (o, out) = run_config(dir.path(), cfg, &[]);
        assert_eq!(o.status.code(), Some(2), "{cfg}");
        assert!(!out.exists());
    }
}

#[test]
fn fat_cat_lyapunov_matches_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), r#"{"system": {"name": "fat-cat"}, "pipeline": {"kind": "lyapunov", "n": 10000}}"#, &[]);
    assert_eq!(o.status.code(), Some(0));
    let r = result(&out);
    let l1 = r["data"]["spectrum"]["raw"][0].as_f64().unwrap();
    assert!((l1 - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-4);
    assert_eq!(r["pass"], Value::Bool(true));
    assert!(out.join("lyapunov.csv").exists());
}

#[test]
fn effective_config_materializes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), r#"{"system": {"name": "solenoid"}, "pipeline": {"kind": "lyapunov", "tol": 1e-3}}"#, &["--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    let e: Value = serde_json::from_slice(&fs::read(out.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(e["seed"], 7);
    assert_eq!(e["system"]["contraction"], 0.25);
    assert_eq!(e["pipeline"]["n"], 10000);
    assert_eq!(e["pipeline"]["reorth_every"], 1);
    assert_eq!(e["pipeline"]["tol"], 1e-3);
    // The echo is itself a valid config.
    let again = dir.path().join("again");
    fs::create_dir(&again).unwrap();
    let (o, _) = run_config(&again, &fs::read_to_string(out.join("effective_config.json")).unwrap(), &[]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn result_json_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = r#"{"system": {"name": "warped-solenoid"}, "seed": 3, "pipeline": {"kind": "srb-density"}}"#;
    let (oa, out_a) = run_config(a.path(), cfg, &[]);
    let (ob, out_b) = run_config(b.path(), cfg, &[]);
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(ob.status.code(), Some(0));
    for f in ["result.json", "density.csv", "distortion.csv"] {
        assert_eq!(fs::read(out_a.join(f)).unwrap(), fs::read(out_b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failed_assertion_exits_one_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), r#"{"system": {"name": "solenoid"}, "pipeline": {"kind": "lyapunov", "n": 1000, "tol": 1e-12}}"#, &[]);
    assert_eq!(o.status.code(), Some(1));
    let r = result(&out);
    assert_eq!(r["pass"], Value::Bool(false));
    let a = r["assertions"].as_array().unwrap();
    assert!(a.iter().any(|x| x["pass"] == Value::Bool(false)));
    assert!(a.iter().all(|x| x["anchor"].is_string()));
}

#[test]
fn entropy_check_reports_h_and_gap() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), r#"{"system": {"name": "solenoid"}, "pipeline": {"kind": "entropy-check", "depth": 6}}"#, &[]);
    assert_eq!(o.status.code(), Some(0));
    let r = result(&out);
    for k in ["h", "lyapunov_sum", "gap"] {
        assert!(r["data"][k].is_number(), "{k}");
    }
    assert_eq!(r["pass"], Value::Bool(true));
}

#[test]
fn gibbs_runs_without_a_system() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run_config(dir.path(), r#"{"pipeline": {"kind": "gibbs"}}"#, &[]);
    assert_eq!(o.status.code(), Some(0));
    let p = result(&out)["data"]["pressure"].as_f64().unwrap();
    assert!((p - ((1.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-10);
    assert!(out.join("cylinders.csv").exists());
}

#[test]
fn list_systems_is_stable_and_complete() {
    let a = srbkit(&["list-systems"]);
    let b = srbkit(&["list-systems"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    let find = |n: &str| v.as_array().unwrap().iter().find(|s| s["name"] == n).cloned().unwrap();
    let sol = find("solenoid");
    assert_eq!(sol["contraction"], 0.25);
    let ex = sol["lyapunov_exponents"].as_array().unwrap();
    assert!((ex[0]["value"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-15);
    assert!((ex[1]["value"].as_f64().unwrap() - 0.25f64.ln()).abs() < 1e-15);
    assert_eq!(ex[1]["multiplicity"], 2);
    assert_eq!(find("fat-cat")["c"], 0.2);
}

#[test]
fn version_flag() {
    let o = srbkit(&["--version"]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
}

/// The documented acceptance invocations all pass.
#[test]
fn acceptance_configs_pass() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut names: Vec<PathBuf> = fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(names.len() >= 13);
    let dir = tempfile::tempdir().unwrap();
    for cfg in names {
        let out = dir.path().join(cfg.file_stem().unwrap());
        let o = srbkit(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}: {}", cfg.display(), String::from_utf8_lossy(&o.stdout));
    }
}
