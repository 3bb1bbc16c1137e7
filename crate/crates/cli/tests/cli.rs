use std::fs;
use std::path::Path;
use std::process::Command;

use peaklab_cli::parse_config;
use peaklab_cli::snapshot::{format_hex, parse_hex, read_snapshot};
use proptest::prelude::*;

const SWEEP: &str = r#"{"kind": "sweep", "domain": "ball", "N": 4, "R": 1, "h": 0.125, "p": [2, 4, 8]}"#;

fn peaklab(args: &[&str], env_out: Option<&Path>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_peaklab"));
    cmd.args(args).env_remove("PEAKLAB_OUT");
    if let Some(o) = env_out {
        cmd.env("PEAKLAB_OUT", o);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut rows = vec![header];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(String::from).collect());
    }
    rows
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn minimal_config_is_accepted_with_defaults() {
    let c = parse_config(SWEEP).unwrap();
    let r = c.resolved();
    let echo = serde_json::to_value(&r).unwrap();
    assert_eq!(echo["solver"]["step_tolerance"], 1e-8);
    assert_eq!(echo["solver"]["residual_tolerance"], 1e-5);
    assert_eq!(echo["center"], serde_json::json!([0.0, 0.0, 0.0, 0.0]));
    assert_eq!(echo["deterministic"], true);
}

#[test]
fn dimension_two_is_rejected() {
    let e = parse_config(&SWEEP.replace("\"N\": 4", "\"N\": 2")).unwrap_err();
    assert_eq!(e.field.as_deref(), Some("N"));
    assert_eq!(e.line, Some(1));
}

#[test]
fn unknown_field_is_named() {
    let text = "{\n  \"kind\": \"sweep\",\n  \"domain\": \"ball\",\n  \"N\": 4,\n  \"h\": 0.125,\n  \"mesh\": 3,\n  \"p\": [2]\n}";
    let e = parse_config(text).unwrap_err();
    assert_eq!(e.field.as_deref(), Some("mesh"));
    assert!(e.to_string().contains("mesh"));
    assert_eq!(e.line, Some(6));
}

#[test]
fn inconsistent_configs_are_rejected() {
    for bad in [
        r#"{"domain": "ellipsoid", "N": 4, "h": 0.1, "p": [2]}"#,
        r#"{"domain": "ball", "N": 4, "p": [2]}"#,
        r#"{"domain": "ball", "N": 4, "h": 0.1, "p": [1]}"#,
        r#"{"domain": "ball", "N": 4, "h": 0.1, "p": [4, 2]}"#,
        r#"{"domain": "ball", "N": 4, "h": 0.1, "p": [2], "deterministic": false}"#,
        r#"{"domain": "box", "N": 4, "radial": true, "p": [2]}"#,
        r#"{"domain": "ball", "N": 4, "h": 0.1, "p": [2], "robin": {"spacing": 0.1}}"#,
        r#"{"domain": "ball", "N": 4, "h": 0.1, "p": [2], "solver": {"tolerance": 1}}"#,
    ] {
        assert!(parse_config(bad).is_err(), "{bad}");
    }
}

#[test]
fn sweep_writes_manifest_rows_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SWEEP);
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = peaklab(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let m = manifest(&out);
        assert_eq!(m["status"], "ok");
        assert_eq!(m["config"]["solver"]["max_iterations"], 2000);
        let rows = read_csv(&out.join("sweep.csv"));
        assert_eq!(rows.len(), 4);
        assert_eq!(
            rows[0],
            [
                "p", "c_p", "cp_scaled", "gamma_p", "mass_p", "lambda_p", "L0_running", "energy_pplus1",
                "energy_scaled", "residual", "iterations", "seconds"
            ]
        );
        let (_, values) = read_snapshot(&fs::read_to_string(out.join("fields/u_p8.field")).unwrap()).unwrap();
        assert!(values.iter().all(|v| *v >= 0.0));
        let seconds = rows[0].len() - 1;
        tables.push(
            rows.into_iter()
                .map(|mut r| {
                    r.truncate(seconds);
                    r
                })
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn env_var_overrides_out_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"domain": "ball", "N": 3, "h": 0.25, "p": [2], "snapshots": false}"#,
    );
    let flag = tmp.path().join("flag");
    let env = tmp.path().join("env");
    let o = peaklab(&["solve", "--config", &cfg, "--out", flag.to_str().unwrap()], Some(&env));
    assert_eq!(o.status.code(), Some(0));
    assert!(env.join("solve.csv").exists());
    assert!(!flag.exists());
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"domain": "ball", "N": 2, "h": 0.25, "p": [2]}"#);
    let out = tmp.path().join("out");
    let o = peaklab(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert!(m["errors"][0].as_str().unwrap().contains("`N`"));
    let cfg = write_config(tmp.path(), &SWEEP.replace("sweep", "green"));
    let o = peaklab(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn non_convergence_exits_with_two_and_keeps_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"domain": "ball", "N": 4, "h": 0.2, "p": [2, 20], "snapshots": false,
            "solver": {"max_iterations": 3, "step_tolerance": 1e-12}}"#,
    );
    let out = tmp.path().join("out");
    let o = peaklab(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "not_converged");
    assert!(m["errors"][0].as_str().unwrap().contains("p = 2"));
    assert_eq!(read_csv(&out.join("sweep.csv")).len(), 1);
}

#[test]
fn radial_pohozaev_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"domain": "ball", "N": 4, "radial": true, "p": [10, 100]}"#);
    let out = tmp.path().join("out");
    let o = peaklab(&["pohozaev", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.join("pohozaev.csv"));
    assert_eq!(rows.len(), 3);
    let col = rows[0].iter().position(|h| h == "rel_residual").unwrap();
    for r in &rows[1..] {
        assert!(r[col].parse::<f64>().unwrap() < 1e-3);
    }
}

#[test]
fn robin_on_ellipsoid_lists_critical_points() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"domain": "ellipsoid", "N": 3, "semiaxes": [1, 1, 1.3], "h": 0.0625,
            "robin": {"spacing": 0.125}}"#,
    );
    let out = tmp.path().join("out");
    let o = peaklab(&["robin", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let probes = read_csv(&out.join("robin.csv"));
    assert_eq!(probes[0], ["x_1", "x_2", "x_3", "phi_tilde"]);
    assert!(probes.len() > 10);
    let cps = read_csv(&out.join("critical_points.csv"));
    assert!(cps.len() >= 2);
    let centre = cps[1..].iter().any(|r| {
        r[2..5].iter().all(|x| x.parse::<f64>().unwrap().abs() < 0.125)
    });
    assert!(centre);
}

#[test]
fn full_report_on_small_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"domain": "ball", "N": 3, "h": 0.0625, "p": [2, 4, 8, 16], "snapshots": false}"#,
    );
    let out = tmp.path().join("out");
    let o = peaklab(&["report", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["sweep.csv", "fit.csv", "concentration.csv", "peaks.csv", "pohozaev.csv", "adams.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["card_S"], 1);
    assert!(s["peak_vs_robin"]["distance_in_h"].as_f64().unwrap() <= 2.0);
}

proptest! {
    #[test]
    fn hex_floats_round_trip(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        let y = parse_hex(&format_hex(x)).unwrap();
        if x.is_nan() {
            prop_assert!(y.is_nan());
        } else {
            prop_assert_eq!(y.to_bits(), x.to_bits());
        }
    }
}
