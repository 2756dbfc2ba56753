use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ekman_core::diagnostics::{
    beta0, bkm_report, energy_balance_residual, fit_decay_rate, series, smallness_gamma0_general,
    smallness_gamma1_2d, smallness_gamma1_general, BkmReport, ConditionReport, DecayFit,
    DiagnosticsError, DiagnosticsRecord, InitialNorms,
};
use ekman_core::dynamics::{run_simulation, SimConfig};
use ekman_core::littlewood_paley::DyadicFilterBank;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{set_dotted, ConfigError, RunConfigFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CONDITION: i32 = 3;

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFits {
    pub l2_u: Option<DecayFit>,
    pub l2_grad_pi: Option<DecayFit>,
    /// One per tracked Besov index.
    pub besov_u: Vec<Option<DecayFit>>,
    pub besov_grad_pi: Vec<Option<DecayFit>>,
    /// `‖u‖_{L²} + ‖u‖_{B}` per tracked index.
    pub intersection_u: Vec<Option<DecayFit>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub config: RunConfigFile,
    pub completed: bool,
    pub failure: Option<String>,
    pub records: usize,
    pub t_final: Option<f64>,
    pub cfl: f64,
    pub cfl_warning: bool,
    pub conditions: Vec<ConditionReport>,
    pub decay_fits: DecayFits,
    pub energy_residual: Option<f64>,
    pub bkm: Option<BkmReport>,
    /// Guaranteed rate for `gamma = 0`, at `s = 1`, `d = 2`.
    pub beta0: Option<f64>,
}

pub fn csv_header(indices: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "l2_u".to_string()];
    cols.extend((0..indices).map(|i| format!("besov_u_{i}")));
    cols.push("l2_gradPi".into());
    cols.extend((0..indices).map(|i| format!("besov_gradPi_{i}")));
    for c in [
        "besov_rho_minus_1",
        "rho_min",
        "rho_max",
        "energy",
        "grad_u_inf",
        "bkm_running",
    ] {
        cols.push(c.into());
    }
    cols
}

fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_records_csv(path: &Path, indices: usize, records: &[DiagnosticsRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(indices))?;
    for r in records {
        let mut row = vec![r.t, r.l2_u];
        row.extend(&r.besov_u);
        row.push(r.l2_grad_pi);
        row.extend(&r.besov_grad_pi);
        row.extend([
            r.besov_rho_minus_1,
            r.rho_min,
            r.rho_max,
            r.energy,
            r.grad_u_inf,
            r.bkm_running,
        ]);
        w.write_record(row.into_iter().map(format_value))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Norms of the initial data that enter the smallness conditions.
pub fn initial_norms(sim: &SimConfig) -> InitialNorms {
    let bank = DyadicFilterBank::new(sim.grid).expect("validated grid supports a filter bank");
    InitialNorms::compute(
        &bank,
        &sim.ic.density_field(sim.grid),
        &sim.ic.velocity_field(sim.grid),
    )
}

/// Condition reports that apply to `gamma` in two dimensions: both uniform
/// damping conditions for `gamma = 1`, the variable-damping pair for
/// `gamma = 0`.
pub fn applicable_conditions(cfg: &RunConfigFile) -> Result<Vec<ConditionReport>, ConfigError> {
    let alpha = cfg.physics.alpha;
    if !(alpha > 0.0) {
        return Err(ConfigError::new(
            "physics.alpha",
            format!("must be > 0 to evaluate smallness conditions, got {alpha}"),
        ));
    }
    let sim = cfg.sim_config()?;
    let norms = initial_norms(&sim);
    let params = cfg.smallness_params();
    let eta_err = |e: DiagnosticsError| ConfigError::new("smallness.eta", e.to_string());
    Ok(match cfg.physics.gamma {
        1 => vec![
            smallness_gamma1_general(&norms, alpha, &params).map_err(eta_err)?,
            smallness_gamma1_2d(&norms, alpha, &params).map_err(eta_err)?,
        ],
        _ => vec![smallness_gamma0_general(&norms, alpha, &params).map_err(eta_err)?],
    })
}

fn fit(points: Vec<(f64, f64)>) -> Option<DecayFit> {
    fit_decay_rate(&points, None).ok()
}

pub fn decay_fits(records: &[DiagnosticsRecord], indices: usize) -> DecayFits {
    DecayFits {
        l2_u: fit(series(records, |r| r.l2_u)),
        l2_grad_pi: fit(series(records, |r| r.l2_grad_pi)),
        besov_u: (0..indices).map(|i| fit(series(records, |r| r.besov_u[i]))).collect(),
        besov_grad_pi: (0..indices)
            .map(|i| fit(series(records, |r| r.besov_grad_pi[i])))
            .collect(),
        intersection_u: (0..indices)
            .map(|i| fit(series(records, |r| r.l2_u + r.besov_u[i])))
            .collect(),
    }
}

/// Runs one validated configuration into `out`, always leaving a CSV
/// header and a summary behind. Returns the exit code and the summary.
pub fn execute_run(cfg: &RunConfigFile, out: &Path) -> Result<(i32, RunSummary), CliError> {
    let sim = cfg.sim_config()?;
    let conditions = if cfg.physics.alpha > 0.0 {
        applicable_conditions(cfg)?
    } else {
        Vec::new()
    };
    let beta0 = if cfg.physics.gamma == 0 && cfg.physics.alpha > 0.0 {
        let rho_upper = sim.ic.density_field(sim.grid).max();
        beta0(cfg.physics.alpha, rho_upper, 1.0, 2, cfg.smallness.delta).ok()
    } else {
        None
    };
    fs::create_dir_all(out).map_err(io_err(out))?;
    let csv_path = out.join(RECORDS_FILE);
    // header first, so an abort still leaves a loadable file
    write_records_csv(&csv_path, sim.besov_indices.len(), &[])?;

    let cfl = sim.cfl_number();
    let outcome = run_simulation(&sim);
    let records = &outcome.records;
    write_records_csv(&csv_path, sim.besov_indices.len(), records)?;

    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        completed: outcome.completed(),
        failure: outcome.failure.as_ref().map(|e| e.to_string()),
        records: records.len(),
        t_final: records.last().map(|r| r.t),
        cfl,
        cfl_warning: cfl > 0.5,
        conditions,
        decay_fits: decay_fits(records, sim.besov_indices.len()),
        energy_residual: energy_balance_residual(records, sim.gamma, sim.alpha).ok(),
        bkm: bkm_report(records).ok(),
        beta0,
    };
    let summary_path = out.join(SUMMARY_FILE);
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?).map_err(io_err(&summary_path))?;
    let code = if summary.completed { EXIT_OK } else { EXIT_RUNTIME };
    Ok((code, summary))
}

fn report_error(err: &CliError) -> i32 {
    eprintln!("error: {err}");
    err.exit_code()
}

pub fn cmd_run(config: &Path, out: &Path) -> i32 {
    let result = RunConfigFile::load(config)
        .map_err(CliError::from)
        .and_then(|cfg| execute_run(&cfg, out));
    match result {
        Ok((code, summary)) => {
            if let Some(f) = &summary.failure {
                eprintln!("run aborted: {f}");
            }
            if summary.cfl_warning {
                eprintln!("warning: CFL number {:.3} exceeds 0.5", summary.cfl);
            }
            code
        }
        Err(e) => report_error(&e),
    }
}

/// Exit 0 when any applicable condition holds, 3 when none does.
pub fn cmd_check(config: &Path) -> i32 {
    let reports = RunConfigFile::load(config).and_then(|cfg| applicable_conditions(&cfg));
    match reports {
        Ok(reports) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&reports).expect("reports serialize")
            );
            if reports.iter().any(|r| r.satisfied) {
                EXIT_OK
            } else {
                EXIT_CONDITION
            }
        }
        Err(e) => report_error(&CliError::Config(e)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: Value,
    pub dir: String,
    pub exit_code: i32,
    pub completed: bool,
    pub failure: Option<String>,
    pub l2_u_rate: Option<f64>,
    pub conditions: Vec<ConditionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub param: String,
    /// Keyed by the JSON text of each value.
    pub runs: BTreeMap<String, SweepEntry>,
}

/// Splits `v1,v2,...`; each item is read as JSON and falls back to a string.
pub fn parse_values(values: &str) -> Vec<Value> {
    values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect()
}

fn dir_name(i: usize, value: &Value) -> String {
    let text: String = value
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    format!("{i:03}_{text}")
}

fn thread_count() -> Result<usize, ConfigError> {
    match std::env::var("THREADS") {
        Err(_) => Ok(0),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(ConfigError::new(
                "THREADS",
                format!("must be a positive integer, got `{s}`"),
            )),
        },
    }
}

pub fn execute_sweep(
    config: &Path,
    key: &str,
    values: &[Value],
    out: &Path,
) -> Result<(i32, SweepSummary), CliError> {
    if values.is_empty() {
        return Err(ConfigError::new(key, "empty value list").into());
    }
    let text = fs::read_to_string(config).map_err(io_err(config))?;
    let doc: Value =
        serde_json::from_str(&text).map_err(|e| ConfigError::new("", e.to_string()))?;
    let mut jobs = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut d = doc.clone();
        set_dotted(&mut d, key, v.clone())?;
        let cfg = RunConfigFile::from_value(d)?;
        jobs.push((dir_name(i, v), v.clone(), cfg));
    }
    let mut keys: Vec<String> = values.iter().map(Value::to_string).collect();
    keys.sort();
    keys.dedup();
    if keys.len() != values.len() {
        return Err(ConfigError::new(key, "duplicate values in the sweep list").into());
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .expect("thread pool");
    let results: Vec<Result<SweepEntry, CliError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(dir, value, cfg)| {
                let (code, summary) = execute_run(cfg, &out.join(dir))?;
                Ok(SweepEntry {
                    value: value.clone(),
                    dir: dir.clone(),
                    exit_code: code,
                    completed: summary.completed,
                    failure: summary.failure,
                    l2_u_rate: summary.decay_fits.l2_u.map(|f| f.rate),
                    conditions: summary.conditions,
                })
            })
            .collect()
    });
    let mut runs = BTreeMap::new();
    let mut code = EXIT_OK;
    for r in results {
        let entry = r?;
        if entry.exit_code != EXIT_OK {
            code = EXIT_RUNTIME;
        }
        runs.insert(entry.value.to_string(), entry);
    }
    let summary = SweepSummary {
        param: key.to_string(),
        runs,
    };
    let path = out.join(SWEEP_SUMMARY_FILE);
    fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(io_err(&path))?;
    Ok((code, summary))
}

pub fn cmd_sweep(config: &Path, key: &str, values: &str, out: &Path) -> i32 {
    match execute_sweep(config, key, &parse_values(values), out) {
        Ok((code, _)) => code,
        Err(e) => report_error(&e),
    }
}
