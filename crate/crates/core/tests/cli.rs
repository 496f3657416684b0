use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spme(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spme"))
        .args(args)
        .env("SPME_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "[grid]\nn = 31\n[time]\nt_end = 0.005\nrecord_stride = 10\n";

fn csv_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn check_accepts_valid_and_reports_all_violations_with_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = write_config(tmp.path(), SMALL);
    let out = spme(&["check", "--config", &ok]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));

    let bad = write_config(tmp.path(), "[model]\nlambda = 1.5\n[time]\ndt = -1.0\nbogus = 3\n");
    let out = spme(&["check", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2: lambda out of (0,1)"), "{err}");
    assert!(err.contains("line 4:"), "{err}");
    assert!(err.contains("line 5:"), "{err}");
}

#[test]
fn missing_config_is_an_io_error() {
    let out = spme(&["check", "--config", "/nonexistent/spme.toml"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn single_path_ensemble_writes_one_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out_dir = tmp.path().join("one");
    let out = spme(&["ensemble", "--config", &cfg, "--paths", "1", "--seed", "5", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_files(&out_dir), vec!["path_0000_direct.csv".to_string()]);
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}[noise]\nmu = [1.0, 0.5]\nmodes = [[1], [2]]\n"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let out = spme(&["ensemble", "--config", &cfg, "--paths", "3", "--seed", "9", "--out", d.to_str().unwrap(), "--scheme", "both"]);
        assert_eq!(out.status.code(), Some(0));
    }
    let files = csv_files(&a);
    assert_eq!(files.len(), 6);
    assert_eq!(files, csv_files(&b));
    for f in files {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn simulate_uses_the_seed_directly_and_report_summarizes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let d = tmp.path().join("sim");
    let out = spme(&["simulate", "--config", &cfg, "--seed", "42", "--out", d.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["entries"][0]["seed"], 42);
    assert_eq!(manifest["paths"], 1);

    let out = spme(&["report", "--manifest", d.join("manifest.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("[direct]"), "{table}");
    let jsonl = fs::read_to_string(d.join("summary.jsonl")).unwrap();
    let line: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(line["scheme"], "direct");
}

#[test]
fn report_on_missing_manifest_is_an_io_error() {
    let out = spme(&["report", "--manifest", "/nonexistent/manifest.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn csv_header_has_the_fixed_column_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}[observables]\ncompacts = [[0.25, 0.15], [0.3, 0.2]]\n"));
    let d = tmp.path().join("h");
    assert_eq!(spme(&["simulate", "--config", &cfg, "--out", d.to_str().unwrap()]).status.code(), Some(0));
    let text = fs::read_to_string(d.join("path_0000_direct.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,Z,l2,l2Y,m_noncrit,mass_K0,mass_K1,bound_rhs0,bound_rhs1,beta_sumsq,min_x,clamped_mass"
    );
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    // 17 significant digits
    assert!(row[1].contains('e') && row[1].split('e').next().unwrap().len() >= 18, "{}", row[1]);
}
