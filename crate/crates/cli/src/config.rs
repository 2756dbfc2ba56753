//! Strict JSON run configuration.
//!
//! Every section rejects unknown keys. Errors carry the dotted path of the
//! offending key (`physics.alpha`, `ic.u_params.amplitude`, ...).

use std::fmt;
use std::path::Path;

use ekman_core::diagnostics::SmallnessParams;
use ekman_core::dynamics::{DensityPreset, InitialCondition, SimConfig, VelocityPreset};
use ekman_core::elliptic::PressureSolveParams;
use ekman_core::fields::{Exponent, GridSpec, DEFAULT_DEALIAS_FRACTION};
use ekman_core::littlewood_paley::BesovIndex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "invalid config: {}", self.message)
        } else {
            write!(f, "invalid config at `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub physics: Physics,
    pub grid: GridSection,
    pub time: TimeSection,
    pub ic: IcSection,
    #[serde(default)]
    pub pressure: PressureSection,
    #[serde(default)]
    pub track: TrackSection,
    #[serde(default)]
    pub smallness: SmallnessSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub alpha: f64,
    pub gamma: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcSection {
    pub u_preset: String,
    #[serde(default = "empty_object")]
    pub u_params: Value,
    pub rho_preset: String,
    #[serde(default = "empty_object")]
    pub rho_params: Value,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for PressureSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Besov triples `[s, p, r]`; `p` and `r` are numbers or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSection {
    #[serde(default = "default_indices")]
    pub besov_indices: Vec<[Value; 3]>,
}

impl Default for TrackSection {
    fn default() -> Self {
        Self {
            besov_indices: default_indices(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallnessSection {
    #[serde(rename = "K", default = "one_f64")]
    pub k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl Default for SmallnessSection {
    fn default() -> Self {
        Self {
            k: 1.0,
            eta: None,
            delta: default_delta(),
        }
    }
}

fn default_dealias() -> f64 {
    DEFAULT_DEALIAS_FRACTION
}

fn one() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

fn default_tol() -> f64 {
    PressureSolveParams::default().tol
}

fn default_max_iter() -> usize {
    PressureSolveParams::default().max_iter
}

fn default_indices() -> Vec<[Value; 3]> {
    vec![[Value::from(1.0), Value::from("inf"), Value::from(1.0)]]
}

fn default_delta() -> f64 {
    SmallnessParams::default().delta
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaylorGreenParams {
    #[serde(default = "one_f64")]
    amplitude: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomShellParams {
    j: u32,
    amplitude: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CellularParams {
    amplitude: f64,
    #[serde(default)]
    perturbation: f64,
    #[serde(default = "default_mode")]
    mode: [i64; 2],
}

fn default_mode() -> [i64; 2] {
    [2, 1]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyParams {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    #[serde(default = "one_f64")]
    value: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SingleModeParams {
    k: [i64; 2],
    amplitude: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianBumpParams {
    width: f64,
    amplitude: f64,
}

fn path_error<E: fmt::Display>(prefix: &str, err: serde_path_to_error::Error<E>) -> ConfigError {
    let path = err.path().to_string();
    let key = match (prefix.is_empty(), path.as_str()) {
        (true, ".") => String::new(),
        (true, _) => path,
        (false, ".") => prefix.to_string(),
        (false, _) => format!("{prefix}.{path}"),
    };
    ConfigError::new(key, err.into_inner().to_string())
}

fn params<T: DeserializeOwned>(value: &Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(value.clone()).map_err(|e| path_error(prefix, e))
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be a positive number, got {v}")))
    }
}

fn exponent(key: &str, v: &Value) -> Result<Exponent, ConfigError> {
    match v {
        Value::String(s) if s == "inf" => Ok(Exponent::Infinity),
        Value::Number(n) => {
            let p = n.as_f64().unwrap_or(f64::NAN);
            Exponent::finite(p).map_err(|e| ConfigError::new(key, e.to_string()))
        }
        other => Err(ConfigError::new(
            key,
            format!("expected a number >= 1 or \"inf\", got {other}"),
        )),
    }
}

impl RunConfigFile {
    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| path_error("", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::new("", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Checks everything except `alpha > 0`, which only `check` demands.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let alpha = self.physics.alpha;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(ConfigError::new(
                "physics.alpha",
                format!("must be a finite number >= 0, got {alpha}"),
            ));
        }
        if self.physics.gamma > 1 {
            return Err(ConfigError::new(
                "physics.gamma",
                format!("must be 0 or 1, got {}", self.physics.gamma),
            ));
        }
        if self.grid.n < 8 || !self.grid.n.is_power_of_two() {
            return Err(ConfigError::new(
                "grid.n",
                format!("must be a power of two >= 8, got {}", self.grid.n),
            ));
        }
        let grid = self.grid_spec()?;
        positive("time.dt", self.time.dt)?;
        if !(self.time.t_end >= 0.0 && self.time.t_end.is_finite()) {
            return Err(ConfigError::new(
                "time.t_end",
                format!("must be a finite number >= 0, got {}", self.time.t_end),
            ));
        }
        if self.time.record_every == 0 {
            return Err(ConfigError::new("time.record_every", "must be at least 1"));
        }
        positive("pressure.tol", self.pressure.tol)?;
        if self.pressure.max_iter == 0 {
            return Err(ConfigError::new("pressure.max_iter", "must be at least 1"));
        }
        self.besov_indices()?;
        positive("smallness.K", self.smallness.k)?;
        if let Some(eta) = self.smallness.eta {
            positive("smallness.eta", eta)?;
        }
        positive("smallness.delta", self.smallness.delta)?;
        let ic = self.initial_condition()?;
        ic.validate(&grid).map_err(|m| ConfigError::new("ic", m))?;
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        GridSpec::new(self.grid.n, self.grid.dealias_fraction).map_err(|e| {
            let key = if self.grid.n.is_power_of_two() && self.grid.n >= 8 {
                "grid.dealias_fraction"
            } else {
                "grid.n"
            };
            ConfigError::new(key, e.to_string())
        })
    }

    pub fn besov_indices(&self) -> Result<Vec<BesovIndex>, ConfigError> {
        self.track
            .besov_indices
            .iter()
            .enumerate()
            .map(|(i, [s, p, r])| {
                let key = format!("track.besov_indices[{i}]");
                let s = s
                    .as_f64()
                    .filter(|s| s.is_finite())
                    .ok_or_else(|| ConfigError::new(format!("{key}[0]"), "s must be a finite number"))?;
                let p = exponent(&format!("{key}[1]"), p)?;
                let r = exponent(&format!("{key}[2]"), r)?;
                BesovIndex::new(s, p, r).map_err(|e| ConfigError::new(key, e.to_string()))
            })
            .collect()
    }

    pub fn initial_condition(&self) -> Result<InitialCondition, ConfigError> {
        let ic = &self.ic;
        let velocity = match ic.u_preset.as_str() {
            "zero" => {
                params::<EmptyParams>(&ic.u_params, "ic.u_params")?;
                VelocityPreset::Zero
            }
            "taylor_green" => {
                let p: TaylorGreenParams = params(&ic.u_params, "ic.u_params")?;
                VelocityPreset::TaylorGreen {
                    amplitude: p.amplitude,
                }
            }
            "random_shell" => {
                let p: RandomShellParams = params(&ic.u_params, "ic.u_params")?;
                VelocityPreset::RandomShell {
                    j: p.j,
                    amplitude: p.amplitude,
                }
            }
            "cellular" => {
                let p: CellularParams = params(&ic.u_params, "ic.u_params")?;
                VelocityPreset::Cellular {
                    amplitude: p.amplitude,
                    perturbation: p.perturbation,
                    mode: p.mode,
                }
            }
            other => {
                return Err(ConfigError::new(
                    "ic.u_preset",
                    format!(
                        "unknown preset `{other}`, expected one of zero, taylor_green, random_shell, cellular"
                    ),
                ))
            }
        };
        let density = match ic.rho_preset.as_str() {
            "constant" => {
                let p: ConstantParams = params(&ic.rho_params, "ic.rho_params")?;
                DensityPreset::Constant { value: p.value }
            }
            "single_mode" => {
                let p: SingleModeParams = params(&ic.rho_params, "ic.rho_params")?;
                DensityPreset::SingleMode {
                    k: p.k,
                    amplitude: p.amplitude,
                }
            }
            "gaussian_bump" => {
                let p: GaussianBumpParams = params(&ic.rho_params, "ic.rho_params")?;
                DensityPreset::GaussianBump {
                    width: p.width,
                    amplitude: p.amplitude,
                }
            }
            other => {
                return Err(ConfigError::new(
                    "ic.rho_preset",
                    format!(
                        "unknown preset `{other}`, expected one of constant, single_mode, gaussian_bump"
                    ),
                ))
            }
        };
        Ok(InitialCondition {
            velocity,
            density,
            seed: ic.seed,
        })
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        Ok(SimConfig {
            alpha: self.physics.alpha,
            gamma: self.physics.gamma,
            grid: self.grid_spec()?,
            dt: self.time.dt,
            t_end: self.time.t_end,
            ic: self.initial_condition()?,
            pressure: PressureSolveParams {
                tol: self.pressure.tol,
                max_iter: self.pressure.max_iter,
            },
            besov_indices: self.besov_indices()?,
            record_every: self.time.record_every,
        })
    }

    pub fn smallness_params(&self) -> SmallnessParams {
        SmallnessParams {
            k: self.smallness.k,
            eta: self.smallness.eta,
            delta: self.smallness.delta,
        }
    }
}

/// Sets a dotted key (`ic.rho_params.amplitude`) inside a raw config
/// document, creating intermediate objects as needed. Whether the key is
/// legal is decided later by the strict parser.
pub fn set_dotted(doc: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "malformed parameter key"));
    }
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::new(key, format!("`{part}` is not inside an object")))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| ConfigError::new(key, "parent is not an object"))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({
            "physics": {"alpha": 0.5, "gamma": 1},
            "grid": {"n": 32},
            "time": {"dt": 0.01, "t_end": 0.1},
            "ic": {"u_preset": "taylor_green", "rho_preset": "constant"}
        })
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfigFile::from_value(base()).unwrap();
        assert_eq!(cfg.time.record_every, 1);
        assert_eq!(cfg.grid.dealias_fraction, 2.0 / 3.0);
        assert_eq!(cfg.pressure.max_iter, 500);
        let idx = cfg.besov_indices().unwrap();
        assert_eq!(idx, vec![BesovIndex::sup_summable(1.0)]);
        let sim = cfg.sim_config().unwrap();
        assert_eq!(sim.ic.velocity, VelocityPreset::TaylorGreen { amplitude: 1.0 });
        assert_eq!(sim.ic.density, DensityPreset::Constant { value: 1.0 });
    }

    #[test]
    fn errors_name_the_key() {
        let cases = [
            ("physics.alpha", json!(-1.0), "physics.alpha"),
            ("physics.gamma", json!(2), "physics.gamma"),
            ("grid.n", json!(12), "grid.n"),
            ("grid.dealias_fraction", json!(1.5), "grid.dealias_fraction"),
            ("time.dt", json!(0.0), "time.dt"),
            ("time.record_every", json!(0), "time.record_every"),
            ("physics.beta", json!(1.0), "physics.beta"),
            ("ic.u_params.amp", json!(1.0), "ic.u_params.amp"),
            ("ic.u_preset", json!("vortex"), "ic.u_preset"),
            ("track.besov_indices", json!([[1, "sup", 1]]), "track.besov_indices[0][1]"),
            ("smallness.K", json!(0.0), "smallness.K"),
            ("pressure.max_iter", json!(0), "pressure.max_iter"),
            ("physics.alpha", json!("fast"), "physics.alpha"),
        ];
        for (key, value, expected) in cases {
            let mut doc = base();
            set_dotted(&mut doc, key, value).unwrap();
            let err = RunConfigFile::from_value(doc).unwrap_err();
            assert_eq!(err.key, expected, "{err}");
            assert!(err.to_string().contains(expected));
        }
    }

    #[test]
    fn unknown_top_level_section() {
        let mut doc = base();
        doc["extra"] = json!({});
        assert_eq!(RunConfigFile::from_value(doc).unwrap_err().key, "extra");
    }

    #[test]
    fn echo_round_trips() {
        let mut doc = base();
        doc["track"] = json!({"besov_indices": [[0.5, "inf", 1], [1, 2, "inf"]]});
        let cfg = RunConfigFile::from_value(doc).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfigFile::parse_str(&text).unwrap(), cfg);
        assert_eq!(cfg.besov_indices().unwrap().len(), 2);
    }

    #[test]
    fn preset_validation_reports_ic() {
        let mut doc = base();
        doc["ic"] = json!({
            "u_preset": "zero",
            "rho_preset": "single_mode",
            "rho_params": {"k": [1, 0], "amplitude": 1.2}
        });
        assert_eq!(RunConfigFile::from_value(doc).unwrap_err().key, "ic");
    }
}
