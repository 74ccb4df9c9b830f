// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn mqcspec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mqcspec")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    let d = dir.to_str().unwrap();
    all.extend(["--out-dir", d]);
    mqcspec(&all)
}

fn sidecar_without_timestamp(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("created_unix");
    v
}

#[test]
fn test_fig4_preset_emits_sixteen_series() {
    let t = tempdir().unwrap();
    let out = run_in(t.path(), &["spectrum", "--preset", "fig4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let n = fs::read_dir(t.path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "dat").count();
    assert_eq!(n, 16);
    let text = fs::read_to_string(t.path().join("k2_y_par_gamma0.dat")).unwrap();
    assert!(text.contains("# units: f^2/gamma^2"));
    assert!(text.contains("# columns: omega_detuning_over_gamma Re_S Im_S"));
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 801);
}

#[test]
fn test_spectrum_output_is_deterministic() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let args = ["spectrum", "--kappa", "2", "--channels", "x_par,y_perp", "--grid-points", "41"];
    assert!(run_in(a.path(), &args).status.success());
    assert!(run_in(b.path(), &args).status.success());
    for f in ["k2_x_par_avg.dat", "k2_y_perp_avg.dat"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(sidecar_without_timestamp(a.path()), sidecar_without_timestamp(b.path()));
}

#[test]
fn test_mc_average_seeded_reruns_identical() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let args = ["mc-average", "--samples", "300", "--seed", "9", "--kappa", "1", "--channels", "y_par", "--grid-points", "5"];
    assert!(run_in(a.path(), &args).status.success());
    assert!(run_in(b.path(), &args).status.success());
    let f = "k1_y_par_avg.dat";
    assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    assert!(fs::read_to_string(a.path().join(f)).unwrap().contains("SE_Re_S"));
}

#[test]
fn test_empty_kappa_list_exits_2() {
    let t = tempdir().unwrap();
    assert_eq!(run_in(t.path(), &["spectrum", "--kappa"]).status.code(), Some(2));
    let cfg = t.path().join("run.toml");
    fs::write(&cfg, "kappa = []\n").unwrap();
    let out = run_in(t.path(), &["--config", cfg.to_str().unwrap(), "spectrum"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa"));
}

#[test]
fn test_invalid_inputs_exit_2() {
    let t = tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["spectrum", "--area", "0.1", "--pulse-energy", "1e-9"],
        &["spectrum", "--density", "1e14", "--mean-distance", "1e-3"],
        &["spectrum", "--channels", "z_par"],
        &["spectrum", "--xibar", "-3"],
    ];
    for c in cases {
        assert_eq!(run_in(t.path(), c).status.code(), Some(2), "{c:?}");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_mqcspec"))
        .args(["cross-section", "--out-dir", t.path().to_str().unwrap()])
        .env("MQCSPEC_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn test_flags_override_config_file() {
    let t = tempdir().unwrap();
    let cfg = t.path().join("run.toml");
    fs::write(&cfg, "area = 0.2\nxibar = 120.0\nkappa = [1]\nchannels = [\"y_par\"]\n[grid]\npoints = 3\n").unwrap();
    let out = run_in(t.path(), &["--config", cfg.to_str().unwrap(), "spectrum", "--area", "0.3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(t.path().join("k1_y_par_avg.dat")).unwrap();
    assert!(text.contains("# area: 0.3\n"));
    assert!(text.contains("# xibar: 120.0\n"));
}

#[test]
fn test_table1_preset_rows() {
    let t = tempdir().unwrap();
    let out = run_in(t.path(), &["spectrum", "--preset", "table1"]);
    assert!(out.status.success());
    let text = fs::read_to_string(t.path().join("table1.dat")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 8);
    let y = rows.iter().find(|r| r.starts_with("1 y_par")).unwrap();
    let cols: Vec<&str> = y.split_whitespace().collect();
    let (closed, computed): (f64, f64) = (cols[2].parse().unwrap(), cols[3].parse().unwrap());
    assert!(((computed - closed) / closed).abs() < 1e-12);
}

#[test]
fn test_cross_section_reports_values() {
    let t = tempdir().unwrap();
    let out = run_in(t.path(), &["cross-section"]);
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("cross_section.json")).unwrap()).unwrap();
    let s0 = v["resonant_cross_section_m2"].as_f64().unwrap();
    assert!((s0 - 2.9799e-13).abs() < 1e-16);
}

#[test]
fn test_validate_corrupted_tolerance_names_criterion() {
    let t = tempdir().unwrap();
    let cfg = t.path().join("run.toml");
    fs::write(&cfg, "[validate]\nseed = 777\ncriteria = [2]\n[validate.tolerances]\nratio_rel = 1e-15\n").unwrap();
    let out = run_in(t.path(), &["--config", cfg.to_str().unwrap(), "validate"]);
    assert_eq!(out.status.code(), Some(1));
    let report = fs::read_to_string(t.path().join("validation_report.txt")).unwrap();
    assert!(report.contains("criterion 2 ratios: FAIL"));
    assert!(report.contains("# seed 777"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 ratios"));
}

#[test]
fn test_validate_passing_subset_exits_0() {
    let t = tempdir().unwrap();
    let out = run_in(t.path(), &["validate", "--criteria", "2,5", "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(t.path().join("validation_report.json")).unwrap()).unwrap();
    assert_eq!(v["seed"].as_u64(), Some(4));
    assert_eq!(v["criteria"].as_array().unwrap().len(), 2);
}

#[test]
fn test_oracle_check_small_run() {
    let t = tempdir().unwrap();
    let out = run_in(
        t.path(),
        &["oracle-check", "--directions", "1", "--kappa", "1", "--channels", "y_par", "--detunings", "0"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = sidecar_without_timestamp(t.path());
    assert!(v["summary"]["worst_relative_deviation"].as_f64().unwrap() < 1e-4);
}
