//! Time integration of the damped inhomogeneous Euler system
//!
//! ```text
//! ∂_t ρ + u·∇ρ = 0
//! ρ(∂_t u + u·∇u) + ∇Π + α ρ^γ u = 0
//! div u = 0
//! ```
//!
//! written in velocity form `∂_t u = −u·∇u − (1/ρ)∇Π − α ρ^{γ−1} u`, with
//! `Π` from the elliptic problem that keeps `∂_t u` divergence-free.
//! Classical RK4, one pressure solve per stage, Leray projection after each
//! accepted step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::DiagnosticsRecord;
use crate::elliptic::{solve_pressure, EllipticError, PressureSolveParams};
use crate::fields::{
    advect, advect_vector, dealias, dealias_vector, divergence_ratio, leray_project,
    lp_norm_vector, perp_gradient, Exponent, GridSpec, ScalarField, VectorField,
};
use crate::littlewood_paley::{BesovIndex, DyadicFilterBank};

/// Relative slack allowed on the density bounds.
pub const DENSITY_DRIFT_TOL: f64 = 1e-6;
/// Largest accepted `‖div u‖ / ‖u‖` after a step.
pub const DIVERGENCE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("pressure solve failed at t = {t}: {source}")]
    Pressure { t: f64, source: EllipticError },
    #[error(
        "density left [{lower}, {upper}] beyond tolerance at t = {t}: min {min}, max {max}"
    )]
    DensityDrift {
        t: f64,
        min: f64,
        max: f64,
        lower: f64,
        upper: f64,
    },
    #[error("divergence drift at t = {t}: ‖div u‖/‖u‖ = {ratio:e}")]
    Divergence { t: f64, ratio: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum VelocityPreset {
    Zero,
    TaylorGreen { amplitude: f64 },
    /// Random divergence-free field on the shell `0.75·2^j <= |k| <= 1.5·2^j`,
    /// scaled so that `max |u| = amplitude`.
    RandomShell { j: u32, amplitude: f64 },
    /// Taylor–Green cell plus a second odd-odd mode: stream function
    /// `−A[sin x sin y + ε (2/|m|²) sin(m₁x) sin(m₂y)]`. Not steady for
    /// `ε ≠ 0`, and the hyperbolic stagnation points persist by symmetry.
    Cellular {
        amplitude: f64,
        perturbation: f64,
        mode: [i64; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum DensityPreset {
    Constant { value: f64 },
    /// `1 + amplitude·cos(k·x)`.
    SingleMode { k: [i64; 2], amplitude: f64 },
    /// `1 + amplitude·exp(−d²/(2 width²))` centred at `(π, π)`, with the
    /// periodic distance `d² = 2(1 − cos(x − π)) + 2(1 − cos(y − π))`.
    GaussianBump { width: f64, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub velocity: VelocityPreset,
    pub density: DensityPreset,
    pub seed: u64,
}

impl InitialCondition {
    pub fn validate(&self, grid: &GridSpec) -> Result<(), String> {
        match &self.velocity {
            VelocityPreset::Zero => {}
            VelocityPreset::TaylorGreen { amplitude } => {
                if !amplitude.is_finite() {
                    return Err("taylor_green amplitude must be finite".into());
                }
            }
            VelocityPreset::RandomShell { j, amplitude } => {
                if !amplitude.is_finite() {
                    return Err("random_shell amplitude must be finite".into());
                }
                if 1.5 * 2f64.powi(*j as i32) > grid.k_max() as f64 {
                    return Err(format!("random_shell j = {j} is not resolved on this grid"));
                }
            }
            VelocityPreset::Cellular {
                amplitude,
                perturbation,
                mode,
            } => {
                if !(amplitude.is_finite() && perturbation.is_finite()) {
                    return Err("cellular amplitude and perturbation must be finite".into());
                }
                if mode.iter().any(|&m| m < 1 || m as usize > grid.k_max()) {
                    return Err(format!("cellular mode {mode:?} must have resolved positive components"));
                }
            }
        }
        match &self.density {
            DensityPreset::Constant { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    return Err(format!("constant density must be positive, got {value}"));
                }
            }
            DensityPreset::SingleMode { k, amplitude } => {
                if !(amplitude.abs() < 1.0) {
                    return Err(format!("single_mode amplitude must satisfy |a| < 1, got {amplitude}"));
                }
                if k.iter().any(|c| c.unsigned_abs() as usize > grid.k_max()) {
                    return Err(format!("single_mode wavevector {k:?} is not resolved"));
                }
            }
            DensityPreset::GaussianBump { width, amplitude } => {
                if !(*width > 0.0) {
                    return Err(format!("gaussian_bump width must be positive, got {width}"));
                }
                if !(*amplitude > -1.0 && amplitude.is_finite()) {
                    return Err(format!("gaussian_bump amplitude must exceed -1, got {amplitude}"));
                }
            }
        }
        Ok(())
    }

    pub fn velocity_field(&self, grid: GridSpec) -> VectorField {
        match self.velocity {
            VelocityPreset::Zero => VectorField::zeros(grid),
            VelocityPreset::TaylorGreen { amplitude } => taylor_green(grid, amplitude),
            VelocityPreset::RandomShell { j, amplitude } => {
                random_shell(grid, j, amplitude, self.seed)
            }
            VelocityPreset::Cellular {
                amplitude,
                perturbation,
                mode,
            } => cellular(grid, amplitude, perturbation, mode),
        }
    }

    pub fn density_field(&self, grid: GridSpec) -> ScalarField {
        match self.density {
            DensityPreset::Constant { value } => ScalarField::constant(grid, value),
            DensityPreset::SingleMode { k, amplitude } => {
                let (kx, ky) = (k[0] as f64, k[1] as f64);
                ScalarField::from_fn(grid, |x, y| 1.0 + amplitude * (kx * x + ky * y).cos())
            }
            DensityPreset::GaussianBump { width, amplitude } => {
                let pi = std::f64::consts::PI;
                let bump = ScalarField::from_fn(grid, |x, y| {
                    let d2 = 2.0 * (1.0 - (x - pi).cos()) + 2.0 * (1.0 - (y - pi).cos());
                    1.0 + amplitude * (-d2 / (2.0 * width * width)).exp()
                });
                dealias(&bump)
            }
        }
    }
}

/// `A (sin x cos y, −cos x sin y)`: a steady Euler flow.
pub fn taylor_green(grid: GridSpec, amplitude: f64) -> VectorField {
    VectorField::from_fns(
        grid,
        |x, y| amplitude * x.sin() * y.cos(),
        |x, y| -amplitude * x.cos() * y.sin(),
    )
    .assert_divergence_free()
    .unwrap_or_else(|(v, _)| v)
}

pub fn random_shell(grid: GridSpec, j: u32, amplitude: f64, seed: u64) -> VectorField {
    let centre = 2f64.powi(j as i32);
    let (lo, hi) = (0.75 * centre, 1.5 * centre);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shell = |rng: &mut ChaCha8Rng| {
        ScalarField::random_band_limited(grid, hi, 1.0, rng).apply_multiplier(|ix, iy| {
            let r = grid.wavevector_norm(ix, iy);
            if r >= lo && r <= hi {
                1.0
            } else {
                0.0
            }
        })
    };
    let raw = VectorField::new(vec![shell(&mut rng), shell(&mut rng)])
        .expect("two components on one grid");
    let projected = leray_project(&raw);
    let sup = lp_norm_vector(&projected, Exponent::Infinity);
    if sup == 0.0 {
        projected
    } else {
        projected.scale(amplitude / sup)
    }
}

pub fn cellular(grid: GridSpec, amplitude: f64, perturbation: f64, mode: [i64; 2]) -> VectorField {
    let (mx, my) = (mode[0] as f64, mode[1] as f64);
    let weight = perturbation * 2.0 / (mx * mx + my * my);
    perp_gradient(&ScalarField::from_fn(grid, |x, y| {
        -amplitude * (x.sin() * y.sin() + weight * (mx * x).sin() * (my * y).sin())
    }))
}

/// Cellular swirl `A(−sin y, sin x)`: a rigid rotation near the origin,
/// divergence-free and 2π-periodic.
pub fn swirl(grid: GridSpec, amplitude: f64) -> VectorField {
    perp_gradient(&ScalarField::from_fn(grid, |x, y| {
        -amplitude * (x.cos() + y.cos())
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub alpha: f64,
    pub gamma: u8,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_end: f64,
    pub ic: InitialCondition,
    pub pressure: PressureSolveParams,
    pub besov_indices: Vec<BesovIndex>,
    pub record_every: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: String| Err(DynamicsError::InvalidConfig(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if self.gamma > 1 {
            return bad(format!("gamma must be 0 or 1, got {}", self.gamma));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        if self.record_every == 0 {
            return bad("record_every must be >= 1".into());
        }
        self.pressure
            .validate()
            .map_err(|e| DynamicsError::InvalidConfig(e.to_string()))?;
        self.ic
            .validate(&self.grid)
            .map_err(DynamicsError::InvalidConfig)
    }

    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// `dt · max|u₀| · n / 2π`; values above 0.5 deserve a warning.
    pub fn cfl_number(&self) -> f64 {
        let u0 = self.ic.velocity_field(self.grid);
        self.dt * lp_norm_vector(&u0, Exponent::Infinity) * self.grid.n() as f64
            / self.grid.length()
    }
}

/// Vacuum bounds `ρ_* <= ρ <= ρ^*` fixed by the initial density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBounds {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug)]
pub struct FluidState {
    pub t: f64,
    pub rho: ScalarField,
    pub u: VectorField,
    /// Pressure gradient solved at `(rho, u)`.
    pub grad_pi: VectorField,
    pub bounds: DensityBounds,
}

impl FluidState {
    /// Builds the state at `t` and solves for its pressure.
    pub fn new(
        t: f64,
        rho: ScalarField,
        u: VectorField,
        bounds: DensityBounds,
        alpha: f64,
        gamma: u8,
        pressure: &PressureSolveParams,
    ) -> Result<Self, DynamicsError> {
        let force = pressure_force(&rho, &u, alpha, gamma);
        let grad_pi = solve_pressure(&rho, &force, pressure)
            .map_err(|source| DynamicsError::Pressure { t, source })?
            .grad_pi;
        Ok(Self {
            t,
            rho,
            u,
            grad_pi,
            bounds,
        })
    }

    pub fn initial(config: &SimConfig) -> Result<Self, DynamicsError> {
        let rho = config.ic.density_field(config.grid);
        let u = config.ic.velocity_field(config.grid);
        let bounds = DensityBounds {
            lower: rho.min(),
            upper: rho.max(),
        };
        Self::new(0.0, rho, u, bounds, config.alpha, config.gamma, &config.pressure)
    }

    fn check_invariants(&self) -> Result<(), DynamicsError> {
        let (min, max) = (self.rho.min(), self.rho.max());
        if min < self.bounds.lower * (1.0 - DENSITY_DRIFT_TOL)
            || max > self.bounds.upper * (1.0 + DENSITY_DRIFT_TOL)
            || !min.is_finite()
            || !max.is_finite()
        {
            return Err(DynamicsError::DensityDrift {
                t: self.t,
                min,
                max,
                lower: self.bounds.lower,
                upper: self.bounds.upper,
            });
        }
        let ratio = divergence_ratio(&self.u);
        if !(ratio <= DIVERGENCE_TOL) {
            return Err(DynamicsError::Divergence { t: self.t, ratio });
        }
        Ok(())
    }
}

/// Damping factor `α ρ^{γ−1}` applied to `u`, truncated.
fn damping(rho: &ScalarField, u: &VectorField, alpha: f64, gamma: u8) -> VectorField {
    if gamma == 1 {
        u.scale(alpha)
    } else {
        let coeff = rho.map(|r| alpha / r);
        dealias_vector(&u.scale_by_field(&coeff))
    }
}

/// `F = u·∇u + α ρ^{γ−1} u`, so that `∂_t u = −F − (1/ρ)∇Π`.
fn pressure_force(rho: &ScalarField, u: &VectorField, alpha: f64, gamma: u8) -> VectorField {
    &advect_vector(u, u) + &damping(rho, u, alpha, gamma)
}

fn velocity_tendency(rho: &ScalarField, force: &VectorField, grad_pi: &VectorField) -> VectorField {
    let inv_rho = rho.map(|r| 1.0 / r);
    let pressure_term = dealias_vector(&grad_pi.scale_by_field(&inv_rho));
    &force.scale(-1.0) - &pressure_term
}

struct StageTendency {
    drho: ScalarField,
    du: VectorField,
}

fn stage(
    t: f64,
    rho: &ScalarField,
    u: &VectorField,
    config: &SimConfig,
    cached_grad_pi: Option<&VectorField>,
) -> Result<StageTendency, DynamicsError> {
    let force = pressure_force(rho, u, config.alpha, config.gamma);
    let solved;
    let grad_pi = match cached_grad_pi {
        Some(g) => g,
        None => {
            solved = solve_pressure(rho, &force, &config.pressure)
                .map_err(|source| DynamicsError::Pressure { t, source })?
                .grad_pi;
            &solved
        }
    };
    Ok(StageTendency {
        drho: -&advect(u, rho),
        du: velocity_tendency(rho, &force, grad_pi),
    })
}

/// `∂_t u` at the given state.
pub fn momentum_rhs(state: &FluidState, config: &SimConfig) -> Result<VectorField, DynamicsError> {
    Ok(stage(state.t, &state.rho, &state.u, config, None)?.du)
}

/// `∂_t ρ = −u·∇ρ`.
pub fn density_rhs(state: &FluidState) -> ScalarField {
    -&advect(&state.u, &state.rho)
}

fn axpy_scalar(x: &ScalarField, a: f64, y: &ScalarField) -> ScalarField {
    x + &(y * a)
}

fn axpy_vector(x: &VectorField, a: f64, y: &VectorField) -> VectorField {
    x + &y.scale(a)
}

/// One RK4 step of size `config.dt`.
pub fn step_rk4(state: &FluidState, config: &SimConfig) -> Result<FluidState, DynamicsError> {
    let dt = config.dt;
    let t = state.t;
    let k1 = stage(t, &state.rho, &state.u, config, Some(&state.grad_pi))?;
    let k2 = stage(
        t + 0.5 * dt,
        &axpy_scalar(&state.rho, 0.5 * dt, &k1.drho),
        &axpy_vector(&state.u, 0.5 * dt, &k1.du),
        config,
        None,
    )?;
    let k3 = stage(
        t + 0.5 * dt,
        &axpy_scalar(&state.rho, 0.5 * dt, &k2.drho),
        &axpy_vector(&state.u, 0.5 * dt, &k2.du),
        config,
        None,
    )?;
    let k4 = stage(
        t + dt,
        &axpy_scalar(&state.rho, dt, &k3.drho),
        &axpy_vector(&state.u, dt, &k3.du),
        config,
        None,
    )?;
    let w = dt / 6.0;
    let drho = &(&(&k1.drho + &(&k2.drho * 2.0)) + &(&k3.drho * 2.0)) + &k4.drho;
    let du = &(&(&k1.du + &k2.du.scale(2.0)) + &k3.du.scale(2.0)) + &k4.du;
    let rho = axpy_scalar(&state.rho, w, &drho);
    let u = leray_project(&axpy_vector(&state.u, w, &du));
    let next = FluidState::new(
        t + dt,
        rho,
        u,
        state.bounds,
        config.alpha,
        config.gamma,
        &config.pressure,
    )?;
    next.check_invariants()?;
    Ok(next)
}

/// Records produced by a run, plus the error that stopped it early, if any.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub records: Vec<DiagnosticsRecord>,
    pub failure: Option<DynamicsError>,
    pub final_state: Option<FluidState>,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Integrates to `t_end`, recording every `record_every` steps.
pub fn run_simulation(config: &SimConfig) -> RunOutcome {
    run_simulation_with(config, |_| {})
}

/// As [`run_simulation`], calling `observe` on every recorded state.
pub fn run_simulation_with(config: &SimConfig, mut observe: impl FnMut(&FluidState)) -> RunOutcome {
    let mut records = Vec::new();
    if let Err(e) = config.validate() {
        return RunOutcome {
            records,
            failure: Some(e),
            final_state: None,
        };
    }
    let bank = DyadicFilterBank::new(config.grid).expect("validated grid hosts the filter bank");
    let mut state = match FluidState::initial(config) {
        Ok(s) => s,
        Err(e) => {
            return RunOutcome {
                records,
                failure: Some(e),
                final_state: None,
            }
        }
    };
    records.push(DiagnosticsRecord::capture(&state, &bank, &config.besov_indices, None));
    observe(&state);
    for step in 1..=config.step_count() {
        match step_rk4(&state, config) {
            Ok(mut next) => {
                // avoid drift of t from repeated additions
                next.t = step as f64 * config.dt;
                state = next;
            }
            Err(e) => {
                return RunOutcome {
                    records,
                    failure: Some(e),
                    final_state: Some(state),
                }
            }
        }
        if step % config.record_every == 0 {
            let record =
                DiagnosticsRecord::capture(&state, &bank, &config.besov_indices, records.last());
            records.push(record);
            observe(&state);
        }
    }
    RunOutcome {
        records,
        failure: None,
        final_state: Some(state),
    }
}

/// `(e^{βt} u, e^{βt} ∇Π)`.
pub fn rescaled_view(state: &FluidState, beta: f64) -> (VectorField, VectorField) {
    let factor = (beta * state.t).exp();
    (state.u.scale(factor), state.grad_pi.scale(factor))
}

/// RK4 integration of `∂_t f + v·∇f = g`, returning `(t, f)` every
/// `record_every` steps (and at `t = 0`).
pub fn solve_linear_transport(
    velocity: &dyn Fn(f64) -> VectorField,
    f0: &ScalarField,
    forcing: Option<&dyn Fn(f64) -> ScalarField>,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Vec<(f64, ScalarField)> {
    assert!(dt > 0.0 && record_every > 0);
    let rhs = |t: f64, f: &ScalarField| {
        let transport = -&advect(&velocity(t), f);
        match forcing {
            Some(g) => &transport + &dealias(&g(t)),
            None => transport,
        }
    };
    let steps = (t_end / dt).round() as usize;
    let mut f = f0.clone();
    let mut out = vec![(0.0, f.clone())];
    for step in 0..steps {
        let t = step as f64 * dt;
        let k1 = rhs(t, &f);
        let k2 = rhs(t + 0.5 * dt, &axpy_scalar(&f, 0.5 * dt, &k1));
        let k3 = rhs(t + 0.5 * dt, &axpy_scalar(&f, 0.5 * dt, &k2));
        let k4 = rhs(t + dt, &axpy_scalar(&f, dt, &k3));
        let sum = &(&(&k1 + &(&k2 * 2.0)) + &(&k3 * 2.0)) + &k4;
        f = axpy_scalar(&f, dt / 6.0, &sum);
        if (step + 1) % record_every == 0 {
            out.push(((step + 1) as f64 * dt, f.clone()));
        }
    }
    out
}

/// Right-hand side of the rescaled 2-D vorticity equation,
/// `−∇^⊥(1/ρ)·∇Π̃` with `Π̃ = e^{αt}Π`.
pub fn vorticity_forcing(state: &FluidState, alpha: f64) -> ScalarField {
    let inv_rho = state.rho.map(|r| 1.0 / r);
    let perp = perp_gradient(&inv_rho);
    let (_, grad_pi_resc) = rescaled_view(state, alpha);
    -&perp.dot(&grad_pi_resc)
}

/// Scalar vorticity of the rescaled velocity `e^{αt} u`.
pub fn rescaled_vorticity(state: &FluidState, alpha: f64) -> ScalarField {
    crate::fields::curl2d(&state.u.scale((alpha * state.t).exp()))
}

/// `‖∇v‖_∞` for a velocity field, pointwise Frobenius norm.
pub fn velocity_gradient_sup(v: &VectorField) -> f64 {
    crate::fields::gradient_sup_norm(v)
}
