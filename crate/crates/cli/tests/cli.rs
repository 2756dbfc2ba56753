use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ekman_cli::commands::{RunSummary, SweepSummary};
use ekman_core::diagnostics::{phi_k, ConditionReport, TheoremId};
use ekman_core::dynamics::taylor_green;
use ekman_core::fields::{GridSpec, ScalarField};
use ekman_core::littlewood_paley::{BesovIndex, DyadicFilterBank};
use serde_json::{json, Value};
use tempfile::TempDir;

fn ekman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ekman"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn taylor_green_config(alpha: f64, t_end: f64, record_every: usize) -> Value {
    json!({
        "physics": {"alpha": alpha, "gamma": 1},
        "grid": {"n": 32},
        "time": {"dt": 0.01, "t_end": t_end, "record_every": record_every},
        "ic": {
            "u_preset": "taylor_green",
            "u_params": {"amplitude": 1.0},
            "rho_preset": "constant"
        }
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn reports(out: &Output) -> Vec<ConditionReport> {
    serde_json::from_slice(&out.stdout).expect("check prints condition reports")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_records_and_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tg.json", &taylor_green_config(0.5, 0.5, 5));
    let out_dir = tmp.path().join("out");
    let out = ekman(&["run", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let mut reader = csv::Reader::from_path(out_dir.join("records.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header.join(","),
        "t,l2_u,besov_u_0,l2_gradPi,besov_gradPi_0,besov_rho_minus_1,rho_min,rho_max,\
         energy,grad_u_inf,bkm_running"
    );
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    // t_end / (dt · record_every) + 1
    assert_eq!(rows.len(), 11);
    assert!((rows[10][0] - 0.5).abs() < 1e-12);
    let l2_0 = rows[0][1];
    assert!((rows[10][1] - l2_0 * (-0.25f64).exp()).abs() < 1e-9);

    let text = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    let summary: RunSummary = serde_json::from_str(&text).unwrap();
    assert!(summary.completed && summary.failure.is_none());
    assert_eq!(summary.records, 11);
    assert_eq!(summary.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(summary.config.physics.alpha, 0.5);
    assert_eq!(summary.conditions.len(), 2);
    assert!(summary.beta0.is_none());
    let again: RunSummary = serde_json::from_str(&serde_json::to_string(&summary).unwrap()).unwrap();
    assert_eq!(again, summary);
}

#[test]
fn csv_cells_use_plain_scientific_notation() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tg.json", &taylor_green_config(0.5, 0.02, 1));
    let out_dir = tmp.path().join("out");
    assert_eq!(ekman(&["run", "--config", s(&cfg), "--out", s(&out_dir)]).status.code(), Some(0));
    let text = fs::read_to_string(out_dir.join("records.csv")).unwrap();
    for cell in text.lines().skip(1).flat_map(|l| l.split(',')) {
        let (mantissa, exp) = cell.split_once('e').expect("scientific notation");
        let digits = mantissa.trim_start_matches('-').replace('.', "");
        assert_eq!(digits.len(), 17, "{cell}");
        assert!(exp.trim_start_matches('-').chars().all(|c| c.is_ascii_digit()));
    }
}

#[test]
fn identical_configs_give_identical_csv() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = taylor_green_config(0.3, 0.05, 1);
    cfg["ic"] = json!({
        "u_preset": "random_shell",
        "u_params": {"j": 2, "amplitude": 0.5},
        "rho_preset": "gaussian_bump",
        "rho_params": {"width": 0.8, "amplitude": 0.3},
        "seed": 42
    });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(ekman(&["run", "--config", s(&path), "--out", s(d)]).status.code(), Some(0));
    }
    assert_eq!(
        fs::read(a.join("records.csv")).unwrap(),
        fs::read(b.join("records.csv")).unwrap()
    );
}

#[test]
fn negative_alpha_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", &taylor_green_config(-1.0, 0.1, 1));
    let out = ekman(&["run", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("physics.alpha"), "{}", stderr(&out));
}

#[test]
fn unknown_key_and_missing_file_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = taylor_green_config(0.5, 0.1, 1);
    cfg["time"]["cfl"] = json!(0.5);
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let out = ekman(&["check", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("time.cfl"));
    let out = ekman(&["check", "--config", s(&tmp.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pressure_failure_aborts_with_partial_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "physics": {"alpha": 0.5, "gamma": 0},
        "grid": {"n": 32},
        "time": {"dt": 0.01, "t_end": 0.1},
        "ic": {
            "u_preset": "taylor_green",
            "u_params": {"amplitude": 0.5},
            "rho_preset": "single_mode",
            "rho_params": {"k": [1, 0], "amplitude": 0.6}
        },
        "pressure": {"tol": 1e-10, "max_iter": 1}
    });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let out_dir = tmp.path().join("out");
    let out = ekman(&["run", "--config", s(&path), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let csv_text = fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert!(csv_text.starts_with("t,l2_u,besov_u_0,"));
    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert!(!summary.completed);
    assert!(summary.failure.unwrap().contains("pressure"));
    assert!(summary.beta0.is_some());
}

#[test]
fn check_homogeneous_density_allows_large_velocity() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = taylor_green_config(0.5, 1.0, 1);
    cfg["ic"]["u_params"]["amplitude"] = json!(5.0);
    let path = write_config(tmp.path(), "c.json", &cfg);
    let out = ekman(&["check", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = reports(&out);
    let two_d = r.iter().find(|r| r.theorem_id == TheoremId::Gamma12d).unwrap();
    assert_eq!(two_d.lhs, vec![0.0]);
    assert!(two_d.satisfied);
    let general = r.iter().find(|r| r.theorem_id == TheoremId::Gamma1General).unwrap();
    assert!(!general.satisfied);
}

fn b1(f: &ScalarField) -> f64 {
    DyadicFilterBank::new(*f.grid())
        .unwrap()
        .besov_norm(f, BesovIndex::sup_summable(1.0))
}

/// Amplitudes giving `‖ρ₀ − 1‖_{B¹_{∞,1}} = rho_norm` for `ρ₀ = 1 + a cos(k·x)`
/// and `‖u₀‖_{L²} + ‖u₀‖_{B¹_{∞,1}} = u_norm` for Taylor–Green.
fn amplitudes(k: [i64; 2], rho_norm: f64, u_norm: f64) -> (f64, f64) {
    let g = GridSpec::with_default_dealias(32).unwrap();
    let mode = ScalarField::from_fn(g, |x, y| (k[0] as f64 * x + k[1] as f64 * y).cos());
    let bank = DyadicFilterBank::new(g).unwrap();
    let tg = bank.intersection_norm_vector(&taylor_green(g, 1.0), BesovIndex::sup_summable(1.0));
    (rho_norm / b1(&mode), u_norm / tg)
}

#[test]
fn check_reproduces_two_dimensional_example() {
    let (a_rho, a_u) = amplitudes([1, 0], 0.01, 1.0);
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "physics": {"alpha": 1.0, "gamma": 1},
        "grid": {"n": 32},
        "time": {"dt": 0.01, "t_end": 1.0},
        "ic": {
            "u_preset": "taylor_green",
            "u_params": {"amplitude": a_u},
            "rho_preset": "single_mode",
            "rho_params": {"k": [1, 0], "amplitude": a_rho}
        },
        "smallness": {"K": 1.0, "eta": 5.01}
    });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let out = ekman(&["check", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = reports(&out);
    let two_d = r.iter().find(|r| r.theorem_id == TheoremId::Gamma12d).unwrap();
    let expected = 0.01 * (1.0 + 0.01f64.powf(5.01)) * phi_k(1.0, 1.0, 1.0);
    assert!((two_d.lhs[0] - expected).abs() <= 1e-12, "{} vs {expected}", two_d.lhs[0]);
    assert!((two_d.lhs[0] - 1.119757).abs() < 1e-6);
    assert!(two_d.satisfied);
    assert_eq!(two_d.eta, 5.01);
}

#[test]
fn check_large_data_is_not_small() {
    let (a_rho, a_u) = amplitudes([2, 0], 1.0, 10.0);
    assert!((a_rho - 0.5).abs() < 1e-12);
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "physics": {"alpha": 0.1, "gamma": 1},
        "grid": {"n": 32},
        "time": {"dt": 0.01, "t_end": 1.0},
        "ic": {
            "u_preset": "taylor_green",
            "u_params": {"amplitude": a_u},
            "rho_preset": "single_mode",
            "rho_params": {"k": [2, 0], "amplitude": a_rho}
        }
    });
    let path = write_config(tmp.path(), "c.json", &cfg);
    let out = ekman(&["check", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let r = reports(&out);
    assert!(r.iter().all(|r| !r.satisfied && r.lhs[0] > 4.0));
    // infinities survive the JSON round trip
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"inf\""));
}

#[test]
fn check_gamma0_reports_one_condition() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = taylor_green_config(1.0, 1.0, 1);
    cfg["physics"]["gamma"] = json!(0);
    cfg["ic"]["u_params"]["amplitude"] = json!(0.01);
    let path = write_config(tmp.path(), "c.json", &cfg);
    let out = ekman(&["check", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = reports(&out);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].theorem_id, TheoremId::Gamma0General);
    assert_eq!(r[0].lhs.len(), 2);
}

#[test]
fn check_needs_positive_alpha() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &taylor_green_config(0.0, 1.0, 1));
    let out = ekman(&["check", "--config", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("physics.alpha"));
}

#[test]
fn verify_quick_passes_and_detects_faults() {
    let out = ekman(&["verify", "--level", "quick"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    for name in ["partition_of_unity", "bony_identity", "bernstein", "lax_milgram", "taylor_green", "energy_balance"] {
        assert!(text.lines().any(|l| l.starts_with(name) && l.contains("PASS")), "{name}");
    }
    let out = ekman(&["verify", "--level", "quick", "--inject-fault"]);
    assert_ne!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("partition_of_unity") && l.contains("FAIL")));
}

#[test]
fn sweep_alpha_recovers_decay_rates() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tg.json", &taylor_green_config(0.5, 4.0, 10));
    let out_dir = tmp.path().join("sweep");
    let out = Command::new(env!("CARGO_BIN_EXE_ekman"))
        .args(["sweep", "--config", s(&cfg), "--param", "physics.alpha"])
        .args(["--values", "0.25,0.5,1.0", "--out", s(&out_dir)])
        .env("THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: SweepSummary =
        serde_json::from_str(&fs::read_to_string(out_dir.join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.param, "physics.alpha");
    for (key, alpha) in [("0.25", 0.25), ("0.5", 0.5), ("1.0", 1.0)] {
        let entry = &summary.runs[key];
        let rate = entry.l2_u_rate.unwrap();
        assert!((rate - alpha).abs() <= 0.01 * alpha, "{key}: {rate}");
        assert!(out_dir.join(&entry.dir).join("records.csv").exists());
        assert!(out_dir.join(&entry.dir).join("summary.json").exists());
    }
}

#[test]
fn sweep_density_amplitude_orders_the_condition() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = taylor_green_config(1.0, 0.02, 1);
    cfg["ic"]["rho_preset"] = json!("single_mode");
    cfg["ic"]["rho_params"] = json!({"k": [1, 1], "amplitude": 0.0});
    let path = write_config(tmp.path(), "c.json", &cfg);
    let out_dir = tmp.path().join("sweep");
    let out = ekman(&[
        "sweep", "--config", s(&path), "--param", "ic.rho_params.amplitude",
        "--values", "0,0.1,0.2", "--out", s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: SweepSummary =
        serde_json::from_str(&fs::read_to_string(out_dir.join("sweep_summary.json")).unwrap()).unwrap();
    let lhs: Vec<f64> = ["0", "0.1", "0.2"]
        .iter()
        .map(|k| {
            summary.runs[*k]
                .conditions
                .iter()
                .find(|c| c.theorem_id == TheoremId::Gamma12d)
                .unwrap()
                .lhs[0]
        })
        .collect();
    assert_eq!(lhs[0], 0.0);
    assert!(lhs[0] < lhs[1] && lhs[1] < lhs[2], "{lhs:?}");
}

#[test]
fn sweep_rejects_empty_lists_and_bad_keys() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "tg.json", &taylor_green_config(0.5, 0.1, 1));
    let o = s(&tmp.path().join("o")).to_string();
    let out = ekman(&["sweep", "--config", s(&cfg), "--param", "physics.alpha", "--values", "", "--out", &o]);
    assert_eq!(out.status.code(), Some(1));
    let out = ekman(&["sweep", "--config", s(&cfg), "--param", "physics.nu", "--values", "1,2", "--out", &o]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("physics.nu"));
    let out = ekman(&["sweep", "--config", s(&cfg), "--param", "physics.alpha", "--values", "0.1,-1", "--out", &o]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(ekman(&["--help"]).status.code(), Some(0));
    assert_eq!(ekman(&["--version"]).status.code(), Some(0));
    assert_eq!(ekman(&["launch"]).status.code(), Some(1));
    assert_eq!(ekman(&["run", "--config", "x.json"]).status.code(), Some(1));
    assert_eq!(ekman(&["verify", "--level", "slow"]).status.code(), Some(1));
}
