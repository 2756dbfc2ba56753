//! Periodic grid functions on the 2-torus `[0, 2π)²`.
//!
//! Every [`ScalarField`] carries both its nodal values and its Fourier
//! coefficients. The coefficients are normalized so that `spectrum[0]` is the
//! grid average, which makes `lp_norm` and the spectral quantities agree on
//! the normalized (unit-mass) measure used throughout the crate.
//!
//! Storage is row-major with `x` varying fastest: node `(ix, iy)` lives at
//! `iy * n + ix` and sits at `(ix h, iy h)` with `h = 2π / n`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DOMAIN_LENGTH: f64 = 2.0 * PI;
pub const DEFAULT_DEALIAS_FRACTION: f64 = 2.0 / 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("Lebesgue exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("vector field needs {expected} components, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected {expected} samples, got {got}")]
    Length { expected: usize, got: usize },
}

/// Uniform periodic grid with `n` points per direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    dim: usize,
    length: f64,
    dealias_fraction: f64,
}

impl GridSpec {
    pub fn new(n: usize, dealias_fraction: f64) -> Result<Self, FieldError> {
        if n < 8 || !n.is_power_of_two() {
            return Err(FieldError::InvalidGrid(format!(
                "n must be a power of two >= 8, got {n}"
            )));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(FieldError::InvalidGrid(format!(
                "dealias fraction must lie in (0, 1], got {dealias_fraction}"
            )));
        }
        let grid = Self {
            n,
            dim: 2,
            length: DOMAIN_LENGTH,
            dealias_fraction,
        };
        if grid.k_max() < 2 {
            return Err(FieldError::InvalidGrid(format!(
                "dealias cutoff {} is below 2",
                grid.k_max()
            )));
        }
        Ok(grid)
    }

    /// Grid with the standard 2/3 truncation.
    pub fn with_default_dealias(n: usize) -> Result<Self, FieldError> {
        Self::new(n, DEFAULT_DEALIAS_FRACTION)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Number of nodes, `n^dim`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Largest retained wavenumber component.
    pub fn k_max(&self) -> usize {
        // the small offset absorbs rounding in e.g. (2/3) * 48
        (self.dealias_fraction * (self.n / 2) as f64 + 1e-9).floor() as usize
    }

    /// Signed integer wavenumber of FFT bin `i`. The Nyquist bin maps to `+n/2`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavenumber used by spectral derivatives: the Nyquist bin is dropped so
    /// that derivatives of real fields stay real.
    pub fn derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i) as f64
        }
    }

    /// Euclidean length of the integer wavevector of bin `(ix, iy)`.
    pub fn wavevector_norm(&self, ix: usize, iy: usize) -> f64 {
        let kx = self.wavenumber(ix) as f64;
        let ky = self.wavenumber(iy) as f64;
        (kx * kx + ky * ky).sqrt()
    }

    pub fn is_retained(&self, ix: usize, iy: usize) -> bool {
        let k_max = self.k_max() as i64;
        self.wavenumber(ix).abs() <= k_max && self.wavenumber(iy).abs() <= k_max
    }

    pub fn node(&self, ix: usize, iy: usize) -> (f64, f64) {
        let h = self.spacing();
        (ix as f64 * h, iy as f64 * h)
    }

    fn index_of_wavenumber(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Storage index of the mode with integer wavevector `(kx, ky)`.
    pub fn mode_index(&self, kx: i64, ky: i64) -> usize {
        self.index_of_wavenumber(ky) * self.n + self.index_of_wavenumber(kx)
    }
}

struct Fft2 {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

// Rows are transformed real-to-complex, keeping the `n/2 + 1` non-negative
// x-frequencies; columns are then transformed as complex data. The
// negative x-frequencies of the full spectrum follow from conjugate symmetry.
impl Fft2 {
    fn for_size(n: usize) -> Arc<Fft2> {
        static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Fft2>>>> = OnceLock::new();
        let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
        let mut plans = plans.lock().expect("fft plan cache poisoned");
        plans
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                let mut real_planner = RealFftPlanner::new();
                Arc::new(Fft2 {
                    n,
                    r2c: real_planner.plan_fft_forward(n),
                    c2r: real_planner.plan_fft_inverse(n),
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    fn half(&self) -> usize {
        self.n / 2 + 1
    }

    fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let h = self.half();
        let zero = Complex64::new(0.0, 0.0);
        let mut row_in = vec![0.0; n];
        let mut row_out = vec![zero; h];
        let mut scratch = vec![zero; self.r2c.get_scratch_len()];
        let mut cols = vec![zero; h * n];
        for y in 0..n {
            row_in.copy_from_slice(&values[y * n..(y + 1) * n]);
            self.r2c
                .process_with_scratch(&mut row_in, &mut row_out, &mut scratch)
                .expect("buffer sizes match the plan");
            for (kx, c) in row_out.iter().enumerate() {
                cols[kx * n + y] = *c;
            }
        }
        let mut scratch = vec![zero; self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(&mut cols, &mut scratch);

        let scale = 1.0 / (n * n) as f64;
        let mut spectrum = vec![zero; n * n];
        for kx in 0..h {
            for ky in 0..n {
                spectrum[ky * n + kx] = cols[kx * n + ky] * scale;
            }
        }
        for ky in 0..n {
            let my = (n - ky) % n;
            for kx in h..n {
                spectrum[ky * n + kx] = spectrum[my * n + (n - kx)].conj();
            }
        }
        spectrum
    }

    /// Real part of the inverse transform, i.e. the inverse of the
    /// Hermitian part of `spectrum`.
    fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let h = self.half();
        let zero = Complex64::new(0.0, 0.0);
        let mut cols = vec![zero; h * n];
        for kx in 0..h {
            let mx = (n - kx) % n;
            for ky in 0..n {
                let my = (n - ky) % n;
                cols[kx * n + ky] = 0.5 * (spectrum[ky * n + kx] + spectrum[my * n + mx].conj());
            }
        }
        let mut scratch = vec![zero; self.inverse.get_inplace_scratch_len()];
        self.inverse.process_with_scratch(&mut cols, &mut scratch);

        let mut values = vec![0.0; n * n];
        let mut row_in = vec![zero; h];
        let mut scratch = vec![zero; self.c2r.get_scratch_len()];
        for y in 0..n {
            for (kx, c) in row_in.iter_mut().enumerate() {
                *c = cols[kx * n + y];
            }
            row_in[0].im = 0.0;
            if n % 2 == 0 {
                row_in[h - 1].im = 0.0;
            }
            self.c2r
                .process_with_scratch(&mut row_in, &mut values[y * n..(y + 1) * n], &mut scratch)
                .expect("buffer sizes match the plan");
        }
        values
    }
}

/// Real periodic scalar field with matching nodal values and Fourier coefficients.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
    spectrum: Vec<Complex64>,
}

impl ScalarField {
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::Length {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let spectrum = Fft2::for_size(grid.n).forward(&values);
        Ok(Self {
            grid,
            values,
            spectrum,
        })
    }

    /// Builds a field from (normalized) Fourier coefficients, which must be
    /// Hermitian-symmetric up to rounding.
    pub fn from_spectrum(grid: GridSpec, spectrum: Vec<Complex64>) -> Result<Self, FieldError> {
        if spectrum.len() != grid.len() {
            return Err(FieldError::Length {
                expected: grid.len(),
                got: spectrum.len(),
            });
        }
        let values = Fft2::for_size(grid.n).inverse(&spectrum);
        Ok(Self {
            grid,
            values,
            spectrum,
        })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n;
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = grid.node(ix, iy);
                values.push(f(x, y));
            }
        }
        Self::from_values(grid, values).expect("length matches by construction")
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        let mut spectrum = vec![Complex64::new(0.0, 0.0); grid.len()];
        spectrum[0] = Complex64::new(c, 0.0);
        Self {
            grid,
            values: vec![c; grid.len()],
            spectrum,
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Random real field whose spectrum is supported on `0 < |k| <= k_cut`.
    ///
    /// Coefficients are drawn in a fixed wavevector order that does not depend
    /// on `n`, so the same seed gives the same function on every grid that
    /// resolves `k_cut`.
    pub fn random_band_limited<R: Rng + ?Sized>(
        grid: GridSpec,
        k_cut: f64,
        amplitude: f64,
        rng: &mut R,
    ) -> Self {
        let kc = k_cut.floor() as i64;
        assert!(
            (kc as usize) < grid.n / 2,
            "cutoff {k_cut} is not resolved on an n = {} grid",
            grid.n
        );
        let mut spectrum = vec![Complex64::new(0.0, 0.0); grid.len()];
        for ky in 0..=kc {
            for kx in -kc..=kc {
                if ky == 0 && kx <= 0 {
                    continue;
                }
                let norm = ((kx * kx + ky * ky) as f64).sqrt();
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if norm > k_cut {
                    continue;
                }
                let c = c * amplitude;
                spectrum[grid.mode_index(kx, ky)] = c;
                spectrum[grid.mode_index(-kx, -ky)] = c.conj();
            }
        }
        Self::from_spectrum(grid, spectrum).expect("length matches by construction")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn value_at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.n + ix]
    }

    pub fn mean(&self) -> f64 {
        self.spectrum[0].re
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pointwise map evaluated on the nodes (no dealiasing).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_values(self.grid, self.values.iter().map(|&v| f(v)).collect())
            .expect("length preserved")
    }

    /// Pointwise combination of two fields on the nodes (no dealiasing).
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        self.check_grid(other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_values(self.grid, values).expect("length preserved")
    }

    /// Collocation product: nodal values multiplied, no truncation.
    pub fn product(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// Applies a real Fourier multiplier `m(ix, iy)` mode by mode.
    pub fn apply_multiplier(&self, multiplier: impl Fn(usize, usize) -> f64) -> Self {
        let n = self.grid.n;
        let spectrum = self
            .spectrum
            .iter()
            .enumerate()
            .map(|(idx, &c)| c * multiplier(idx % n, idx / n))
            .collect();
        Self::from_spectrum(self.grid, spectrum).expect("length preserved")
    }

    /// Applies a multiplier given as a precomputed table in storage order.
    pub fn apply_multiplier_table(&self, table: &[f64]) -> Self {
        assert_eq!(table.len(), self.grid.len());
        let spectrum = self
            .spectrum
            .iter()
            .zip(table)
            .map(|(&c, &m)| c * m)
            .collect();
        Self::from_spectrum(self.grid, spectrum).expect("length preserved")
    }

    /// Spectral partial derivative along `axis` (0 = x, 1 = y).
    pub fn derivative(&self, axis: usize) -> Self {
        let n = self.grid.n;
        let spectrum = self
            .spectrum
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                let bin = if axis == 0 { idx % n } else { idx / n };
                c * Complex64::new(0.0, self.grid.derivative_wavenumber(bin))
            })
            .collect();
        Self::from_spectrum(self.grid, spectrum).expect("length preserved")
    }

    /// Relative L² mismatch between the nodal values and the inverse
    /// transform of the stored spectrum.
    pub fn round_trip_error(&self) -> f64 {
        let back = Fft2::for_size(self.grid.n).inverse(&self.spectrum);
        let diff: f64 = back
            .iter()
            .zip(&self.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let norm: f64 = self.values.iter().map(|v| v * v).sum();
        if norm == 0.0 {
            diff.sqrt()
        } else {
            (diff / norm).sqrt()
        }
    }

    fn check_grid(&self, other: &Self) {
        assert_eq!(self.grid, other.grid, "{}", FieldError::GridMismatch);
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;

    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.check_grid(rhs);
        ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
            spectrum: self
                .spectrum
                .iter()
                .zip(&rhs.spectrum)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;

    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.check_grid(rhs);
        ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
            spectrum: self
                .spectrum
                .iter()
                .zip(&rhs.spectrum)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;

    fn mul(self, rhs: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * rhs).collect(),
            spectrum: self.spectrum.iter().map(|c| c * rhs).collect(),
        }
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;

    fn neg(self) -> ScalarField {
        self * -1.0
    }
}

/// Vector field with one scalar component per spatial direction.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: Vec<ScalarField>,
    divergence_free: bool,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self, FieldError> {
        let grid = match components.first() {
            Some(c) => *c.grid(),
            None => return Err(FieldError::Dimension { expected: 2, got: 0 }),
        };
        if components.len() != grid.dim() {
            return Err(FieldError::Dimension {
                expected: grid.dim(),
                got: components.len(),
            });
        }
        if components.iter().any(|c| *c.grid() != grid) {
            return Err(FieldError::GridMismatch);
        }
        Ok(Self {
            components,
            divergence_free: false,
        })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            components: vec![ScalarField::zeros(grid); grid.dim()],
            divergence_free: true,
        }
    }

    pub fn from_fns(
        grid: GridSpec,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> Self {
        Self::new(vec![
            ScalarField::from_fn(grid, fx),
            ScalarField::from_fn(grid, fy),
        ])
        .expect("two components on one grid")
    }

    pub fn grid(&self) -> &GridSpec {
        self.components[0].grid()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    /// Sets the divergence-free flag after checking `‖div v‖ <= 1e-10 ‖v‖`.
    pub fn assert_divergence_free(mut self) -> Result<Self, (Self, f64)> {
        let ratio = divergence_ratio(&self);
        if ratio <= 1e-10 {
            self.divergence_free = true;
            Ok(self)
        } else {
            Err((self, ratio))
        }
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        Self {
            components: self.components.iter().map(f).collect(),
            divergence_free: false,
        }
    }

    /// Pointwise Euclidean magnitude `|v|`.
    pub fn magnitude(&self) -> ScalarField {
        let grid = *self.grid();
        let values = (0..grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .map(|c| c.values[i] * c.values[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        ScalarField::from_values(grid, values).expect("length preserved")
    }

    /// Pointwise dot product (collocation, no truncation).
    pub fn dot(&self, other: &Self) -> ScalarField {
        let grid = *self.grid();
        let values = (0..grid.len())
            .map(|i| {
                self.components
                    .iter()
                    .zip(&other.components)
                    .map(|(a, b)| a.values[i] * b.values[i])
                    .sum()
            })
            .collect();
        ScalarField::from_values(grid, values).expect("length preserved")
    }

    /// Multiplies every component by a scalar field on the nodes.
    pub fn scale_by_field(&self, factor: &ScalarField) -> Self {
        self.map_components(|c| c.product(factor))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            components: self.components.iter().map(|x| x * c).collect(),
            divergence_free: self.divergence_free,
        }
    }
}

impl Add for &VectorField {
    type Output = VectorField;

    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField {
            components: self
                .components
                .iter()
                .zip(&rhs.components)
                .map(|(a, b)| a + b)
                .collect(),
            divergence_free: self.divergence_free && rhs.divergence_free,
        }
    }
}

impl Sub for &VectorField {
    type Output = VectorField;

    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField {
            components: self
                .components
                .iter()
                .zip(&rhs.components)
                .map(|(a, b)| a - b)
                .collect(),
            divergence_free: self.divergence_free && rhs.divergence_free,
        }
    }
}

/// Lebesgue exponent `p ∈ [1, ∞]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn finite(p: f64) -> Result<Self, FieldError> {
        if p.is_nan() || p < 1.0 {
            Err(FieldError::InvalidExponent(p))
        } else if p.is_infinite() {
            Ok(Self::Infinity)
        } else {
            Ok(Self::Finite(p))
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Self::Finite(p) => *p,
            Self::Infinity => f64::INFINITY,
        }
    }
}

fn lp_of_values(values: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        Exponent::Finite(p) => {
            let n = values.len() as f64;
            if p == 1.0 {
                values.iter().map(|v| v.abs()).sum::<f64>() / n
            } else if p == 2.0 {
                (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
            } else {
                (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / n).powf(1.0 / p)
            }
        }
    }
}

/// `L^p` norm for the normalized measure; `p = ∞` is the nodal maximum.
pub fn lp_norm(f: &ScalarField, p: Exponent) -> f64 {
    lp_of_values(&f.values, p)
}

/// `L^p` norm of the pointwise Euclidean magnitude.
pub fn lp_norm_vector(v: &VectorField, p: Exponent) -> f64 {
    lp_of_values(&v.magnitude().values, p)
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    lp_norm(f, Exponent::Finite(2.0))
}

pub fn l2_norm_vector(v: &VectorField) -> f64 {
    lp_norm_vector(v, Exponent::Finite(2.0))
}

pub fn gradient(f: &ScalarField) -> VectorField {
    VectorField {
        components: (0..f.grid().dim()).map(|axis| f.derivative(axis)).collect(),
        divergence_free: false,
    }
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = *v.grid();
    let n = grid.n();
    let spectrum = (0..grid.len())
        .map(|idx| {
            let kx = grid.derivative_wavenumber(idx % n);
            let ky = grid.derivative_wavenumber(idx / n);
            let vx = v.components[0].spectrum[idx];
            let vy = v.components[1].spectrum[idx];
            Complex64::new(0.0, 1.0) * (vx * kx + vy * ky)
        })
        .collect();
    ScalarField::from_spectrum(grid, spectrum).expect("length preserved")
}

/// Scalar vorticity `∂₁v² − ∂₂v¹`.
pub fn curl2d(v: &VectorField) -> ScalarField {
    let grid = *v.grid();
    let n = grid.n();
    let spectrum = (0..grid.len())
        .map(|idx| {
            let kx = grid.derivative_wavenumber(idx % n);
            let ky = grid.derivative_wavenumber(idx / n);
            let vx = v.components[0].spectrum[idx];
            let vy = v.components[1].spectrum[idx];
            Complex64::new(0.0, 1.0) * (vy * kx - vx * ky)
        })
        .collect();
    ScalarField::from_spectrum(grid, spectrum).expect("length preserved")
}

/// `∇^⊥ f = (−∂₂f, ∂₁f)`.
pub fn perp_gradient(f: &ScalarField) -> VectorField {
    VectorField {
        components: vec![-&f.derivative(1), f.derivative(0)],
        divergence_free: true,
    }
}

/// Orthogonal projection onto divergence-free fields, `v − ∇Δ⁻¹ div v`.
pub fn leray_project(v: &VectorField) -> VectorField {
    let grid = *v.grid();
    let n = grid.n();
    let mut px = Vec::with_capacity(grid.len());
    let mut py = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let kx = grid.derivative_wavenumber(idx % n);
        let ky = grid.derivative_wavenumber(idx / n);
        let vx = v.components[0].spectrum[idx];
        let vy = v.components[1].spectrum[idx];
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            px.push(vx);
            py.push(vy);
        } else {
            let kdotv = (vx * kx + vy * ky) / k2;
            px.push(vx - kdotv * kx);
            py.push(vy - kdotv * ky);
        }
    }
    VectorField {
        components: vec![
            ScalarField::from_spectrum(grid, px).expect("length preserved"),
            ScalarField::from_spectrum(grid, py).expect("length preserved"),
        ],
        divergence_free: true,
    }
}

/// 2/3-rule truncation: zero every mode with a component above `k_max`.
pub fn dealias(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    f.apply_multiplier(|ix, iy| if grid.is_retained(ix, iy) { 1.0 } else { 0.0 })
}

pub fn dealias_vector(v: &VectorField) -> VectorField {
    VectorField {
        components: v.components.iter().map(dealias).collect(),
        divergence_free: v.divergence_free,
    }
}

/// Truncated pointwise product.
pub fn dealiased_product(a: &ScalarField, b: &ScalarField) -> ScalarField {
    dealias(&a.product(b))
}

/// Transport term `u·∇f`, truncated.
pub fn advect(u: &VectorField, f: &ScalarField) -> ScalarField {
    let grad = gradient(f);
    let raw = u
        .components
        .iter()
        .zip(&grad.components)
        .map(|(ui, di)| ui.product(di))
        .reduce(|acc, term| &acc + &term)
        .expect("at least one component");
    dealias(&raw)
}

/// `(u·∇)v` component-wise, truncated.
pub fn advect_vector(u: &VectorField, v: &VectorField) -> VectorField {
    v.map_components(|c| advect(u, c))
}

/// `‖div v‖_{L²} / ‖v‖_{L²}` (0 for the zero field).
pub fn divergence_ratio(v: &VectorField) -> f64 {
    let norm = l2_norm_vector(v);
    if norm == 0.0 {
        0.0
    } else {
        l2_norm(&divergence(v)) / norm
    }
}

/// Pointwise Frobenius norm of the velocity gradient, maximized over nodes.
pub fn gradient_sup_norm(v: &VectorField) -> f64 {
    let grads: Vec<VectorField> = v.components.iter().map(gradient).collect();
    let len = v.grid().len();
    (0..len)
        .map(|i| {
            grads
                .iter()
                .flat_map(|g| g.components.iter())
                .map(|c| c.values[i] * c.values[i])
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GridSpec {
        GridSpec::with_default_dealias(n).unwrap()
    }

    fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    /// Centered difference of order 4 or 6 along an axis, used as an
    /// independent check on the spectral derivative.
    fn fd(f: &ScalarField, axis: usize, order: usize) -> ScalarField {
        let g = *f.grid();
        let n = g.n();
        let h = g.spacing();
        let at = |ix: isize, iy: isize| {
            let ix = ix.rem_euclid(n as isize) as usize;
            let iy = iy.rem_euclid(n as isize) as usize;
            f.value_at(ix, iy)
        };
        let mut out = Vec::with_capacity(g.len());
        for iy in 0..n as isize {
            for ix in 0..n as isize {
                let (dx, dy) = if axis == 0 { (1, 0) } else { (0, 1) };
                let diff = |m: isize| at(ix + m * dx, iy + m * dy) - at(ix - m * dx, iy - m * dy);
                let d = match order {
                    4 => (8.0 * diff(1) - diff(2)) / (12.0 * h),
                    6 => (45.0 * diff(1) - 9.0 * diff(2) + diff(3)) / (60.0 * h),
                    _ => unreachable!(),
                };
                out.push(d);
            }
        }
        ScalarField::from_values(g, out).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::with_default_dealias(4).is_err());
        assert!(GridSpec::with_default_dealias(48).is_err());
        assert!(GridSpec::new(64, 0.0).is_err());
        let g = grid(64);
        assert_eq!(g.k_max(), 21);
        assert_eq!(grid(8).k_max(), 2);
        assert_eq!(grid(128).k_max(), 42);
    }

    #[test]
    fn round_trip_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid(64);
        let values: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = ScalarField::from_values(g, values).unwrap();
        assert!(f.round_trip_error() <= 1e-12);
        let f = ScalarField::random_band_limited(g, 10.0, 1.0, &mut rng);
        assert!(f.round_trip_error() <= 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let g = grid(64);
        let c = gradient(&ScalarField::constant(g, 3.0));
        assert!(lp_norm_vector(&c, Exponent::Infinity) < 1e-14);

        let grad = gradient(&ScalarField::from_fn(g, |x, _| x.sin()));
        let cos = ScalarField::from_fn(g, |x, _| x.cos());
        assert!(max_diff(grad.component(0), &cos) < 1e-12);
        assert!(grad.component(1).max_abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = grid(256);
        let f = ScalarField::from_fn(g, |x, y| (2.0 * x).sin() * (3.0 * y).cos());
        let grad = gradient(&f);
        assert!(max_diff(grad.component(0), &fd(&f, 0, 6)) < 1e-6);
        assert!(max_diff(grad.component(1), &fd(&f, 1, 6)) < 1e-6);
    }

    #[test]
    fn spectral_derivative_converges_at_fourth_order_against_fd() {
        // FD error should drop by ~16 per halving of h.
        let err = |n: usize| {
            let g = grid(n);
            let f = ScalarField::from_fn(g, |x, y| (x.sin() + 0.5 * y.cos()).exp());
            max_diff(&f.derivative(0), &fd(&f, 0, 4))
        };
        let (e64, e128) = (err(64), err(128));
        let order = (e64 / e128).log2();
        assert!(order > 3.7 && order < 4.3, "order {order}");
    }

    #[test]
    fn divergence_examples() {
        let g = grid(64);
        let v = VectorField::from_fns(g, |_, y| y.cos(), |x, _| x.sin());
        assert!(divergence(&v).max_abs() < 1e-12);

        let f = ScalarField::from_fn(g, |x, _| x.sin());
        let lap = divergence(&gradient(&f));
        assert!(max_diff(&lap, &f.map(|v| -v)) < 1e-12);
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let g = grid(256);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = VectorField::new(vec![
            ScalarField::random_band_limited(g, 4.0, 0.2, &mut rng),
            ScalarField::random_band_limited(g, 4.0, 0.2, &mut rng),
        ])
        .unwrap();
        let fd = &fd(v.component(0), 0, 6) + &fd(v.component(1), 1, 6);
        assert!(max_diff(&divergence(&v), &fd) < 1e-6);
    }

    #[test]
    fn curl_examples() {
        let g = grid(64);
        let v = VectorField::from_fns(g, |_, y| y.cos(), |_, _| 0.0);
        let expected = ScalarField::from_fn(g, |_, y| y.sin());
        assert!(max_diff(&curl2d(&v), &expected) < 1e-12);

        let tg = VectorField::from_fns(g, |x, y| x.sin() * y.cos(), |x, y| -x.cos() * y.sin());
        // ∂₁u² − ∂₂u¹ = sin x sin y + sin x sin y
        let expected = ScalarField::from_fn(g, |x, y| 2.0 * x.sin() * y.sin());
        let err = max_diff(&curl2d(&tg), &expected);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn perp_gradient_examples() {
        let g = grid(64);
        let zero = perp_gradient(&ScalarField::constant(g, 2.5));
        assert!(lp_norm_vector(&zero, Exponent::Infinity) < 1e-14);
        let p = perp_gradient(&ScalarField::from_fn(g, |x, _| x.sin()));
        assert!(p.component(0).max_abs() < 1e-12);
        assert!(max_diff(p.component(1), &ScalarField::from_fn(g, |x, _| x.cos())) < 1e-12);
    }

    #[test]
    fn wrong_component_count_is_rejected() {
        let g = grid(16);
        let s = ScalarField::zeros(g);
        assert_eq!(
            VectorField::new(vec![s.clone(), s.clone(), s]).unwrap_err(),
            FieldError::Dimension {
                expected: 2,
                got: 3
            }
        );
    }

    #[test]
    fn leray_examples() {
        let g = grid(64);
        let v = VectorField::from_fns(g, |_, y| y.cos(), |x, _| x.sin());
        let p = leray_project(&v);
        assert!(max_diff(p.component(0), v.component(0)) < 1e-12);
        assert!(max_diff(p.component(1), v.component(1)) < 1e-12);

        let f = ScalarField::from_fn(g, |x, y| (x + 2.0 * y).sin() + (3.0 * x).cos());
        let p = leray_project(&gradient(&f));
        assert!(lp_norm_vector(&p, Exponent::Infinity) < 1e-12);
    }

    #[test]
    fn lp_norm_examples() {
        let g = grid(64);
        for p in [1.0, 2.0, 3.5] {
            let p = Exponent::finite(p).unwrap();
            assert!((lp_norm(&ScalarField::constant(g, -2.0), p) - 2.0).abs() < 1e-14);
        }
        let s = ScalarField::from_fn(g, |x, _| x.sin());
        assert!((l2_norm(&s) - 0.5f64.sqrt()).abs() < 1e-14);
        let sup = lp_norm(&s, Exponent::Infinity);
        assert!(sup >= 0.9988 && sup <= 1.0);
        assert_eq!(Exponent::finite(0.5), Err(FieldError::InvalidExponent(0.5)));
    }

    #[test]
    fn advect_examples() {
        let g = grid(64);
        let f = ScalarField::from_fn(g, |x, _| x.sin());
        assert!(advect(&VectorField::zeros(g), &f).max_abs() < 1e-15);
        let u = VectorField::from_fns(g, |x, y| x.cos() * y.sin(), |x, _| x.sin());
        assert!(advect(&u, &ScalarField::constant(g, 4.0)).max_abs() < 1e-14);
        let unit = VectorField::from_fns(g, |_, _| 1.0, |_, _| 0.0);
        let expected = ScalarField::from_fn(g, |x, _| x.cos());
        assert!(max_diff(&advect(&unit, &f), &expected) < 1e-12);
    }

    #[test]
    fn dealias_examples() {
        let g = grid(64);
        let low = ScalarField::from_fn(g, |x, y| (5.0 * x).cos() * (21.0 * y).sin());
        assert!(max_diff(&dealias(&low), &low) < 1e-12);
        let high = ScalarField::from_fn(g, |x, _| (22.0 * x).cos());
        assert!(dealias(&high).max_abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = ScalarField::from_values(g, values).unwrap();
        let once = dealias(&r);
        assert!(max_diff(&dealias(&once), &once) < 1e-14);
    }

    #[test]
    fn random_fields_agree_across_resolutions() {
        let f = |n| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            ScalarField::random_band_limited(grid(n), 6.0, 1.0, &mut rng)
        };
        let (a, b) = (f(32), f(64));
        assert!((a.value_at(3, 5) - b.value_at(6, 10)).abs() < 1e-12);
        assert!((l2_norm(&a) - l2_norm(&b)).abs() < 1e-12);
    }
}
