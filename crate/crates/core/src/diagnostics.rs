//! Per-record norms, decay fits, smallness conditions, BKM monitoring and
//! the kinetic energy balance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::FluidState;
use crate::fields::{gradient_sup_norm, l2_norm_vector, ScalarField, VectorField};
use crate::littlewood_paley::{BesovIndex, DyadicFilterBank};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-positive value {value} at t = {t}")]
    NonPositive { t: f64, value: f64 },
    #[error("record spacing is not uniform (dt {first} vs {other})")]
    NonUniformSpacing { first: f64, other: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub l2_u: f64,
    pub besov_u: Vec<f64>,
    pub l2_grad_pi: f64,
    pub besov_grad_pi: Vec<f64>,
    /// `‖ρ − 1‖_{B¹_{∞,1}}`.
    pub besov_rho_minus_1: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// `½ avg(ρ|u|²)`.
    pub energy: f64,
    pub grad_u_inf: f64,
    /// Trapezoid rule for `∫₀ᵗ ‖∇u‖_∞`.
    pub bkm_running: f64,
}

impl DiagnosticsRecord {
    pub fn capture(
        state: &FluidState,
        bank: &DyadicFilterBank,
        indices: &[BesovIndex],
        previous: Option<&DiagnosticsRecord>,
    ) -> Self {
        let grad_u_inf = gradient_sup_norm(&state.u);
        let bkm_running = match previous {
            Some(p) => p.bkm_running + 0.5 * (state.t - p.t) * (p.grad_u_inf + grad_u_inf),
            None => 0.0,
        };
        let rho_minus_1 = state.rho.map(|r| r - 1.0);
        let energy = 0.5 * state.rho.product(&state.u.dot(&state.u)).mean();
        Self {
            t: state.t,
            l2_u: l2_norm_vector(&state.u),
            besov_u: indices
                .iter()
                .map(|&idx| bank.besov_norm_vector(&state.u, idx))
                .collect(),
            l2_grad_pi: l2_norm_vector(&state.grad_pi),
            besov_grad_pi: indices
                .iter()
                .map(|&idx| bank.besov_norm_vector(&state.grad_pi, idx))
                .collect(),
            besov_rho_minus_1: bank.besov_norm(&rho_minus_1, BesovIndex::sup_summable(1.0)),
            rho_min: state.rho.min(),
            rho_max: state.rho.max(),
            energy,
            grad_u_inf,
            bkm_running,
        }
    }
}

/// Constants entering the smallness conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallnessParams {
    pub k: f64,
    /// `None` selects 2 for the general conditions and 5.01 for the 2-D one.
    pub eta: Option<f64>,
    pub delta: f64,
}

impl Default for SmallnessParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            eta: None,
            delta: 0.01,
        }
    }
}

impl SmallnessParams {
    pub const DEFAULT_ETA_GENERAL: f64 = 2.0;
    pub const DEFAULT_ETA_2D: f64 = 5.01;

    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(DiagnosticsError::InvalidParameter(format!(
                "K must be positive, got {}",
                self.k
            )));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(DiagnosticsError::InvalidParameter(format!(
                    "eta must be positive, got {eta}"
                )));
            }
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(DiagnosticsError::InvalidParameter(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        Ok(())
    }

    fn eta_general(&self) -> f64 {
        self.eta.unwrap_or(Self::DEFAULT_ETA_GENERAL)
    }

    fn eta_2d(&self) -> f64 {
        self.eta.unwrap_or(Self::DEFAULT_ETA_2D)
    }
}

/// Norms of the initial data that the conditions consume.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialNorms {
    /// `‖u₀‖_{B¹_{∞,1}}`
    pub u_besov: f64,
    /// `‖u₀‖_{L²}`
    pub u_l2: f64,
    /// `‖ρ₀ − 1‖_{B¹_{∞,1}}`
    pub rho_minus_1_besov: f64,
}

impl InitialNorms {
    pub fn compute(bank: &DyadicFilterBank, rho: &ScalarField, u: &VectorField) -> Self {
        let idx = BesovIndex::sup_summable(1.0);
        Self {
            u_besov: bank.besov_norm_vector(u, idx),
            u_l2: l2_norm_vector(u),
            rho_minus_1_besov: bank.besov_norm(&rho.map(|r| r - 1.0), idx),
        }
    }

    /// `‖u₀‖_{L²∩B¹_{∞,1}}`, realized as the sum.
    pub fn u_intersection(&self) -> f64 {
        self.u_l2 + self.u_besov
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    Gamma1General,
    Gamma0General,
    Gamma12d,
}

impl TheoremId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremId::Gamma1General => "gamma1_general",
            TheoremId::Gamma0General => "gamma0_general",
            TheoremId::Gamma12d => "gamma1_2d",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub theorem_id: TheoremId,
    /// Overflowing exponentials are kept as `inf` (serialized as `"inf"`).
    #[serde(with = "extended_floats")]
    pub lhs: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub satisfied: bool,
    pub alpha: f64,
    pub k: f64,
    pub eta: f64,
    pub norms: InitialNorms,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

// JSON has no infinities; write them as strings and read them back.
mod extended_floats {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            if v.is_finite() {
                seq.serialize_element(v)?;
            } else {
                seq.serialize_element(&v.to_string())?;
            }
        }
        seq.end()
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Item {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Item>::deserialize(d)?
            .into_iter()
            .map(|item| match item {
                Item::Number(v) => Ok(v),
                Item::Text(t) => t
                    .parse::<f64>()
                    .map_err(|_| serde::de::Error::custom(format!("not a number: {t}"))),
            })
            .collect()
    }
}

fn report(
    theorem_id: TheoremId,
    lhs: Vec<f64>,
    thresholds: Vec<f64>,
    alpha: f64,
    params: &SmallnessParams,
    eta: f64,
    norms: &InitialNorms,
    note: Option<String>,
) -> ConditionReport {
    let satisfied = lhs.iter().zip(&thresholds).all(|(l, t)| l < t);
    ConditionReport {
        theorem_id,
        lhs,
        thresholds,
        satisfied,
        alpha,
        k: params.k,
        eta,
        norms: *norms,
        note,
    }
}

fn check_alpha(alpha: f64) -> Result<(), DiagnosticsError> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(DiagnosticsError::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )))
    }
}

fn eta_note(params: &SmallnessParams) -> Option<String> {
    params
        .eta
        .is_none()
        .then(|| "eta = 2 is a placeholder; the exponent is only known to depend on d".to_string())
}

/// Uniform damping, any dimension:
/// `(1/α)‖u₀‖_{B¹} exp((1 + ‖ρ₀−1‖^η_{B¹}) e^K (‖u₀‖_{L²}/α + 1)) < 2`.
pub fn smallness_gamma1_general(
    norms: &InitialNorms,
    alpha: f64,
    params: &SmallnessParams,
) -> Result<ConditionReport, DiagnosticsError> {
    check_alpha(alpha)?;
    params.validate()?;
    let eta = params.eta_general();
    let exponent =
        (1.0 + norms.rho_minus_1_besov.powf(eta)) * params.k.exp() * (norms.u_l2 / alpha + 1.0);
    let lhs = norms.u_besov / alpha * exponent.exp();
    Ok(report(
        TheoremId::Gamma1General,
        vec![lhs],
        vec![2.0],
        alpha,
        params,
        eta,
        norms,
        eta_note(params),
    ))
}

/// Density-weighted damping: with `R = 1 + ‖ρ₀−1‖^η_{B¹}` and
/// `z = ‖u₀‖_{L²∩B¹}`, requires `K R e^{KR} z/α < 2` and
/// `K R³ e^{KR} z²/α < 4`.
pub fn smallness_gamma0_general(
    norms: &InitialNorms,
    alpha: f64,
    params: &SmallnessParams,
) -> Result<ConditionReport, DiagnosticsError> {
    check_alpha(alpha)?;
    params.validate()?;
    let eta = params.eta_general();
    let k = params.k;
    let r = 1.0 + norms.rho_minus_1_besov.powf(eta);
    let z = norms.u_intersection();
    let common = k * r * (k * r).exp() / alpha;
    Ok(report(
        TheoremId::Gamma0General,
        vec![common * z, common * r * r * z * z],
        vec![2.0, 4.0],
        alpha,
        params,
        eta,
        norms,
        eta_note(params),
    ))
}

/// `Φ_K(z) = e^{2Kz/α} e^{K exp(Kz/α)}`.
pub fn phi_k(z: f64, alpha: f64, k: f64) -> f64 {
    (2.0 * k * z / alpha + k * (k * z / alpha).exp()).exp()
}

/// Two-dimensional uniform damping:
/// `‖ρ₀−1‖_{B¹}(1 + ‖ρ₀−1‖^η_{B¹}) z Φ_K(z) < 4`, `z = ‖u₀‖_{L²∩B¹}`.
pub fn smallness_gamma1_2d(
    norms: &InitialNorms,
    alpha: f64,
    params: &SmallnessParams,
) -> Result<ConditionReport, DiagnosticsError> {
    check_alpha(alpha)?;
    params.validate()?;
    let eta = params.eta_2d();
    if !(eta > 5.0) {
        return Err(DiagnosticsError::InvalidParameter(format!(
            "the 2-D condition needs eta > 5, got {eta}"
        )));
    }
    let d = norms.rho_minus_1_besov;
    let z = norms.u_intersection();
    let lhs = if d == 0.0 {
        0.0
    } else {
        d * (1.0 + d.powf(eta)) * z * phi_k(z, alpha, params.k)
    };
    Ok(report(
        TheoremId::Gamma12d,
        vec![lhs],
        vec![4.0],
        alpha,
        params,
        eta,
        norms,
        None,
    ))
}

/// Guaranteed decay rate `β₀ = θ₀/(1+θ₀)·α/ρ^*` with `θ₀ = 1/(s + d/2 + δ)`.
pub fn beta0(alpha: f64, rho_upper: f64, s: f64, d: usize, delta: f64) -> Result<f64, DiagnosticsError> {
    check_alpha(alpha)?;
    if !(rho_upper > 0.0 && rho_upper.is_finite()) {
        return Err(DiagnosticsError::InvalidParameter(format!(
            "rho_upper must be positive, got {rho_upper}"
        )));
    }
    if !(s >= 1.0 && s.is_finite()) {
        return Err(DiagnosticsError::InvalidParameter(format!("s must be >= 1, got {s}")));
    }
    if d == 0 {
        return Err(DiagnosticsError::InvalidParameter("d must be >= 1".into()));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(DiagnosticsError::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let sigma = d as f64 / 2.0 + delta;
    let theta = 1.0 / (s + sigma);
    Ok(theta / (1.0 + theta) * alpha / rho_upper)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: [f64; 2],
    pub points: usize,
}

/// Least-squares fit of `log value = intercept − rate·t` over the points
/// with `t` in `window` (inclusive). Without a window, the trailing half
/// `[t_end/2, t_end]` is used.
pub fn fit_decay_rate(
    series: &[(f64, f64)],
    window: Option<[f64; 2]>,
) -> Result<DecayFit, DiagnosticsError> {
    let window = window.unwrap_or_else(|| {
        let t_end = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        [0.5 * t_end, t_end]
    });
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= window[0] && t <= window[1])
        .collect();
    if pts.len() < 5 {
        return Err(DiagnosticsError::TooFewPoints {
            needed: 5,
            got: pts.len(),
        });
    }
    if let Some(&(t, value)) = pts.iter().find(|p| !(p.1 > 0.0)) {
        return Err(DiagnosticsError::NonPositive { t, value });
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(t, v) in &pts {
        let (dx, dy) = (t - t_mean, v.ln() - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(DiagnosticsError::InvalidParameter(
            "all points share one time".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let ss_res: f64 = pts
        .iter()
        .map(|&(t, v)| {
            let e = v.ln() - (intercept + slope * t);
            e * e
        })
        .sum();
    // a constant series is fitted exactly
    let r_squared = if syy <= f64::EPSILON * n * y_mean.abs().max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    let rate = if slope == 0.0 { 0.0 } else { -slope };
    Ok(DecayFit {
        rate,
        intercept,
        r_squared,
        window,
        points: pts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BkmReport {
    pub integral: f64,
    pub increments: Vec<f64>,
    /// Largest ratio of consecutive increments over the last five intervals.
    pub tail_ratio: Option<f64>,
    /// Advisory only: every tail ratio below 1.
    pub geometric_tail: bool,
}

/// Trapezoid integral of `‖∇u‖_∞` over the records and its per-interval
/// increments.
pub fn bkm_report(records: &[DiagnosticsRecord]) -> Result<BkmReport, DiagnosticsError> {
    if records.len() < 2 {
        return Err(DiagnosticsError::TooFewPoints {
            needed: 2,
            got: records.len(),
        });
    }
    let increments: Vec<f64> = records
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].grad_u_inf + w[1].grad_u_inf))
        .collect();
    let integral = increments.iter().sum();
    let tail = &increments[increments.len().saturating_sub(5)..];
    let ratios: Vec<f64> = tail
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let tail_ratio = ratios.iter().copied().reduce(f64::max);
    Ok(BkmReport {
        integral,
        increments,
        tail_ratio,
        geometric_tail: tail_ratio.map_or(false, |r| r < 1.0),
    })
}

/// Max over interior records of
/// `|dE/dt + α avg(ρ^γ|u|²)| / (α E(0))`, with `dE/dt` by centred
/// differences. For `α = 0` the normalization is `E(0)` alone.
pub fn energy_balance_residual(
    records: &[DiagnosticsRecord],
    gamma: u8,
    alpha: f64,
) -> Result<f64, DiagnosticsError> {
    if records.len() < 3 {
        return Err(DiagnosticsError::TooFewPoints {
            needed: 3,
            got: records.len(),
        });
    }
    let dt = records[1].t - records[0].t;
    for w in records.windows(2) {
        let other = w[1].t - w[0].t;
        if (other - dt).abs() > 1e-9 * dt.abs().max(1e-300) {
            return Err(DiagnosticsError::NonUniformSpacing { first: dt, other });
        }
    }
    let scale = if alpha > 0.0 { alpha } else { 1.0 } * records[0].energy;
    if scale == 0.0 {
        return Ok(0.0);
    }
    let dissipation = |r: &DiagnosticsRecord| match gamma {
        1 => 2.0 * r.energy,
        _ => r.l2_u * r.l2_u,
    };
    Ok(records
        .windows(3)
        .map(|w| {
            let de = (w[2].energy - w[0].energy) / (2.0 * dt);
            (de + alpha * dissipation(&w[1])).abs() / scale
        })
        .fold(0.0, f64::max))
}

/// `(t, column)` pairs for fitting.
pub fn series(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> Vec<(f64, f64)> {
    records.iter().map(|r| (r.t, f(r))).collect()
}
