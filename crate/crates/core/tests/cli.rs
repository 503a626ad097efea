use std::path::Path;
use std::process::Command;
use std::time::Instant;

use serde_json::Value;
use sqjcm::cli::output::{parse_csv, verify_manifest};

fn sqjcm(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sqjcm")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn column(dir: &Path, file: &str, name: &str) -> Vec<f64> {
    let (header, cols) = parse_csv(&std::fs::read_to_string(dir.join(file)).unwrap()).unwrap();
    let i = header.iter().position(|h| h == name).unwrap();
    cols[i].clone()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"command":"revival","params":{"b":2},"betta":1}"#).unwrap();
    let (code, _, err) = sqjcm(&["run", "--config", s(&cfg)]);
    assert_eq!(code, 2);
    assert!(err.contains("betta"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"command":"revival","params":{"b":2},"t_max":30,"t_steps":3000}"#).unwrap();
    let out = tmp.path().join("out");
    let (code, _, err) = sqjcm(&["run", "--config", s(&cfg), "--b", "5", "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let m = manifest(&out);
    assert_eq!(m["config"]["params"]["b"], 5.0);
    assert_eq!(m["config"]["params"]["lambda"], 1.0);
    assert_eq!(m["config"]["t_steps"], 3000);
}

#[test]
fn bn_table_for_coherent_field() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = sqjcm(&["bn", "--b", "2", "--out", s(tmp.path())]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(tmp.path().join("bn.csv")).unwrap();
    assert!(text.starts_with("n,re_bn,im_bn,abs2_bn\n"));
    let abs2 = column(tmp.path(), "bn.csv", "abs2_bn");
    assert!((abs2[1] - 4.0 * (-4.0f64).exp()).abs() < 1e-15);
    assert!((abs2[1] - 0.0732625556).abs() < 1e-10);
    let m = manifest(tmp.path());
    assert!(m["diagnostics"]["series"]["tail_mass"].as_f64().is_some());
}

#[test]
fn bn_table_is_normalized_for_displaced_squeezed_basis() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, _) = sqjcm(&["bn", "--a", "10", "--b", "2", "--r", "0.1", "--out", s(tmp.path())]);
    assert_eq!(code, 0);
    let total: f64 = column(tmp.path(), "bn.csv", "abs2_bn").iter().sum();
    assert!((total - 1.0).abs() < 1e-6);
    let m = manifest(tmp.path());
    let recorded = m["diagnostics"]["series"]["sum_abs2"].as_f64().unwrap();
    assert!((recorded - total).abs() < 1e-12);
}

#[test]
fn bn_table_at_degenerate_point_has_even_support() {
    let tmp = tempfile::tempdir().unwrap();
    let a = format!("{}", 2.0 * 0.1f64.exp());
    let (code, _, _) = sqjcm(&["bn", "--a", &a, "--b", "2", "--r", "0.1", "--out", s(tmp.path())]);
    assert_eq!(code, 0);
    let abs2 = column(tmp.path(), "bn.csv", "abs2_bn");
    for (n, w) in abs2.iter().enumerate() {
        if n % 2 == 1 {
            assert!(*w < 1e-24, "n={n}: {w}");
        }
    }
    assert!(abs2[2] > 1e-4);
}

#[test]
fn revival_curves_and_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, _) = sqjcm(&["revival", "--b", "2", "--t-max", "30", "--t-steps", "3001", "--compare-jcm", "--svg", "--out", s(tmp.path())]);
    assert_eq!(code, 0);
    for f in ["p_scoh.csv", "p_coh.csv", "p_scoh.svg", "p_coh.svg"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let p = column(tmp.path(), "p_scoh.csv", "p_ground");
    assert!((p[0] - 1.0).abs() < 1e-8);
    let m = manifest(tmp.path());
    let peak = m["diagnostics"]["p_scoh"]["first_revival"]["revival_time"].as_f64().unwrap();
    assert!((peak - 4.0 * std::f64::consts::PI).abs() < 2.0, "{peak}");
    assert!(verify_manifest(tmp.path()).unwrap().is_empty());
}

#[test]
fn revival_displaced_basis_differs_from_coherent_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, _) = sqjcm(&["revival", "--a", "15", "--b", "5", "--t-max", "60", "--t-steps", "601", "--compare-jcm", "--out", s(tmp.path())]);
    assert_eq!(code, 0);
    let m = manifest(tmp.path());
    assert!(m["diagnostics"]["max_abs_difference"].as_f64().unwrap() > 0.1);
    assert!(m["diagnostics"]["p_coh"].is_object() && m["diagnostics"]["p_scoh"].is_object());
}

#[test]
fn revival_vacuum_is_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, _) = sqjcm(&["revival", "--b", "0", "--t-steps", "11", "--out", s(tmp.path())]);
    assert_eq!(code, 0);
    assert!(column(tmp.path(), "p_scoh.csv", "p_ground").iter().all(|p| *p == 1.0));
}

#[test]
fn evolve_matches_revival_for_coherent_field() {
    let tmp = tempfile::tempdir().unwrap();
    let ev = tmp.path().join("ev");
    let rv = tmp.path().join("rv");
    let common = ["--b", "2", "--t-max", "30", "--t-steps", "601", "--tail-target", "1e-12"];
    let (c1, _, _) = sqjcm(&[&["evolve"], &common[..], &["--retained", "64", "--out", s(&ev)]].concat());
    let (c2, _, _) = sqjcm(&[&["revival"], &common[..], &["--compare-jcm", "--out", s(&rv)]].concat());
    assert_eq!((c1, c2), (0, 0));
    let a = column(&ev, "p_evolve.csv", "p_ground");
    let b = column(&rv, "p_coh.csv", "p_ground");
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
    let m = manifest(&ev);
    assert!(m["diagnostics"]["max_norm_drift_per_unit_time"].as_f64().unwrap() < 1e-9);
    assert!(m["diagnostics"]["truncation"]["max_edge_population"].as_f64().unwrap() < 1e-8);
}

#[test]
fn evolve_two_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, _) = sqjcm(&["evolve", "--b", "2", "--t-steps", "2", "--out", s(tmp.path())]);
    assert_eq!(code, 0);
    let p = column(tmp.path(), "p_evolve.csv", "p_ground");
    assert_eq!(p.len(), 2);
    assert!((p[0] - 1.0).abs() < 1e-12);
}

#[test]
fn evolve_strong_squeezing_records_escalation() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = sqjcm(&["evolve", "--b", "1", "--r", "2.3", "--t-max", "8", "--t-steps", "81", "--out", s(tmp.path())]);
    assert_eq!(code, 0, "{err}");
    let t = &manifest(tmp.path())["diagnostics"]["truncation"];
    assert_eq!(t["escalated"], true);
    assert_eq!(t["retained"], 2048);
}

#[test]
fn evolve_breach_at_ceiling_exits_with_truncation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = sqjcm(&["evolve", "--b", "1", "--r", "2.3", "--t-max", "30", "--t-steps", "31", "--out", s(tmp.path())]);
    assert_eq!(code, 4, "{err}");
    let m = manifest(tmp.path());
    assert_eq!(m["status"]["exit_code"], 4);
    assert!(m["artifacts"].as_array().unwrap().is_empty());
}

#[test]
fn evolve_ultrastrong_form_needs_its_regime() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, _) = sqjcm(&["evolve", "--hamiltonian", "ultrastrong", "--b", "1", "--r", "2.3", "--out", s(tmp.path())]);
    assert_eq!(code, 2);
    let pi = format!("{}", std::f64::consts::PI);
    let (code, _, _) = sqjcm(&["evolve", "--hamiltonian", "ultrastrong", "--b", "1", "--r", "2.3", "--phi", &pi, "--t-max", "200", "--t-steps", "2001", "--out", s(tmp.path())]);
    assert_eq!(code, 0);
}

#[test]
fn validate_smoke_suite_is_fast_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let (code, stdout, _) = sqjcm(&["validate", "--suite", "smoke", "--out", s(tmp.path())]);
    assert_eq!(code, 0);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    for (name, check) in report.as_object().unwrap() {
        assert_eq!(check["pass"], true, "{name}");
        assert!(check["residual"].is_number() && check["tolerance"].is_number());
    }
}

#[test]
fn validate_reports_failure_with_code_five() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, _) = sqjcm(&["validate", "--suite", "smoke", "--inject-mutation", "drop_chi_phase", "--out", s(tmp.path())]);
    assert_eq!(code, 5);
    let report: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["bn_oracle_phase_chi0.7"]["pass"], false);
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.json");
    std::fs::write(
        &cfg,
        r#"{"command":"sweep","t_max":10,"t_steps":101,
            "sweep_axes":[{"field":"r","values":[0,0.1,0.9]},{"field":"b","values":[2,5]}]}"#,
    )
    .unwrap();
    let out = tmp.path().join("out");
    let (code, _, err) = sqjcm(&["run", "--config", s(&cfg), "--jobs", "2", "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let dirs: Vec<_> = std::fs::read_dir(&out).unwrap().filter_map(|e| e.ok()).filter(|e| e.path().is_dir()).collect();
    assert_eq!(dirs.len(), 6);
    let m = manifest(&out);
    let points = m["diagnostics"]["points"].as_array().unwrap();
    let names: Vec<&str> = points.iter().map(|p| p["dir"].as_str().unwrap()).collect();
    assert_eq!(names, ["r=0_b=2", "r=0_b=5", "r=0.1_b=2", "r=0.1_b=5", "r=0.9_b=2", "r=0.9_b=5"]);
    assert!(verify_manifest(&out).unwrap().is_empty());
}

#[test]
fn sweep_with_empty_axes_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.json");
    std::fs::write(&cfg, r#"{"command":"sweep","sweep_axes":[]}"#).unwrap();
    let (code, _, _) = sqjcm(&["run", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(code, 2);
}

#[test]
fn sweep_continues_past_failing_points() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.json");
    std::fs::write(&cfg, r#"{"command":"sweep","t_steps":11,"sweep_axes":[{"field":"b","values":[-1,2]}]}"#).unwrap();
    let out = tmp.path().join("out");
    let (code, _, _) = sqjcm(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_ne!(code, 0);
    let m = manifest(&out);
    let points = m["diagnostics"]["points"].as_array().unwrap();
    assert_ne!(points[0]["exit_code"], 0);
    assert_eq!(points[1]["exit_code"], 0);
    assert!(out.join("b=2").join("p_scoh.csv").exists());
}

#[test]
fn identical_configs_give_identical_csv_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let (code, _, _) = sqjcm(&["revival", "--a", "10", "--b", "2", "--r", "0.1", "--t-steps", "501", "--svg", "--out", s(dir)]);
        assert_eq!(code, 0);
    }
    for f in ["p_scoh.csv", "p_scoh.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn csv_values_match_library_results() {
    use sqjcm::dynamics::{ground_prob, uniform_grid};
    use sqjcm::states::{build_series, ModelParams};
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, _) = sqjcm(&["revival", "--a", "10", "--b", "2", "--r", "0.1", "--t-steps", "301", "--out", s(tmp.path())]);
    assert_eq!(code, 0);
    let p = ModelParams::aligned(10.0, 2.0, 0.1, 0.0).unwrap();
    let series = build_series(&p, 1e-8).unwrap();
    let grid = uniform_grid(30.0, 301).unwrap();
    let expected = ground_prob(&series, 1.0, &grid, p).unwrap();
    assert_eq!(column(tmp.path(), "p_scoh.csv", "lambda_t"), expected.times);
    assert_eq!(column(tmp.path(), "p_scoh.csv", "p_ground"), expected.values);
}
