use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qtraj(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtraj"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("QTRAJ_THREADS")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str], out: &Path) -> Value {
    let o = qtraj(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn harmonic_levels_are_half_integers() {
    let dir = tempfile::tempdir().unwrap();
    let doc = ok_json(&["quantize", "--potential", "harmonic", "--count", "5"], dir.path());
    assert_eq!(doc["schema_version"], 1);
    let levels = doc["results"]["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 5);
    for (n, l) in levels.iter().enumerate() {
        let e = l["energy"].as_f64().unwrap();
        assert!((e / (n as f64 + 0.5) - 1.0).abs() < 1e-6, "{e}");
        assert_eq!(l["winding"].as_i64().unwrap().unsigned_abs() as usize, n + 1);
    }
    let csv = std::fs::read_to_string(dir.path().join("quantize_levels.csv")).unwrap();
    assert!(csv.starts_with("n,energy,exact,action,winding,deviation_h\n"));
    assert_eq!(csv.lines().count(), 6);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("quantize.json")).unwrap()).unwrap();
    assert_eq!(file, doc);
}

#[test]
fn visibility_table_entry() {
    let dir = tempfile::tempdir().unwrap();
    let doc = ok_json(&["visibility", "--fv", "0.14"], dir.path());
    let r = doc["results"]["mean_velocity_ratio"].as_f64().unwrap();
    assert!((r - 0.990).abs() < 5e-4, "{r}");
    assert!(dir.path().join("visibility_curve.csv").exists());
}

#[test]
fn outputs_are_bit_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok_json(&["homech", "--eps1", "0.02", "--periods", "3"], d.path());
        ok_json(&["biprism-field", "--x-min", "-1e-3", "--x-max", "1e-3", "--points", "101"], d.path());
    }
    for f in ["homech.json", "homech_path.csv", "biprism_field.json", "biprism_field_map.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn biprism_run_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_file("configs/biprism.toml");
    let doc = ok_json(&["biprism-run", "--config", cfg.to_str().unwrap(), "--no-paths", "--threads", "2"], dir.path());
    let r = &doc["results"];
    let fv = r["visibility"].as_f64().unwrap();
    assert!((fv - 0.25).abs() <= 0.05, "{fv}");
    assert!((r["fringe_period_ratio"].as_f64().unwrap() - 1.0).abs() < 5e-3);
    assert!(r["peak_shift"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(dir.path().join("biprism_run_density.csv")).unwrap();
    assert!(csv.starts_with("x,lower,flux,total\n"));
    assert!(!dir.path().join("biprism_run_paths.csv").exists());
}

#[test]
fn run_uses_the_configured_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.toml");
    std::fs::write(&cfg, "experiment = \"angular\"\n[angular]\nm = 2.0\n").unwrap();
    let doc = ok_json(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(doc["experiment"], "angular");
    assert_eq!(doc["results"]["quantized"], true);
}

#[test]
fn module_errors_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let o = qtraj(&["biprism-field", "--z", "0.1"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Fresnel"));
    let o = qtraj(&["homech", "--eps1", "0.5"], dir.path());
    assert!(!o.status.success());
    let o = qtraj(&["quantize", "--tolerance", "-1"], dir.path());
    assert!(!o.status.success());
    let o = qtraj(&["run"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qtraj"))
        .args(["visibility", "--fv", "0.3", "--out-dir"])
        .arg(dir.path())
        .env("QTRAJ_THREADS", "0")
        .output()
        .unwrap();
    assert!(!o.status.success(), "zero threads from the environment must be rejected");
}

fn diagnostics(cfg_text: &str) -> Vec<Value> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, cfg_text).unwrap();
    let doc = ok_json(&["validate", "--config", cfg.to_str().unwrap()], dir.path());
    doc["diagnostics"].as_array().unwrap().clone()
}

fn has(d: &[Value], code: &str) -> bool {
    d.iter().any(|d| d["code"] == code)
}

#[test]
fn validate_reports_problems() {
    let d = diagnostics("experiment = \"homech\"\n[homech]\neps1 = 0.5\n");
    assert!(has(&d, "RegimeViolation"));
    let d = diagnostics("experiment = \"biprism-field\"\n[biprism-field]\nz = 0.1\n");
    assert!(has(&d, "FresnelValidity"));
    let empty = diagnostics("");
    let missing: Vec<&str> = empty.iter().filter(|d| d["code"] == "MissingField").map(|d| d["message"].as_str().unwrap()).collect();
    assert!(missing.iter().any(|m| m.starts_with("experiment ")));
    assert!(missing.iter().any(|m| m.starts_with("biprism-run.z-init ")));
    assert!(missing.iter().any(|m| m.starts_with("homech.eps1 ")));
    let reference = diagnostics(&std::fs::read_to_string(repo_file("configs/biprism.toml")).unwrap());
    assert!(reference.iter().all(|d| d["level"] == "info"), "{reference:?}");
}
