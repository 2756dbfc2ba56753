//! Dyadic frequency decomposition on the torus.
//!
//! The radial profile `χ` equals 1 on `|ξ| <= 1.1`, vanishes on
//! `|ξ| >= 1.9`, and in between follows the smooth step
//! `ψ(t) = h(t) / (h(t) + h(1 − t))`, `h(t) = exp(−1/t)`.
//!
//! Blocks are `φ_j(ξ) = χ(2^{−j}ξ) − χ(2^{−j+1}ξ)`, so `φ_j` lives on the
//! annulus `0.55·2^j < |ξ| < 1.9·2^j` and equals 1 at `|ξ| = 2^j`. The
//! low-frequency block is `χ(2ξ)`, which makes the partial sums telescope:
//! `Δ_{−1} + Δ_0 + … + Δ_{j−1} = χ(2^{−j+1}D)`. The top block `j_max` takes
//! everything left over, `1 − χ(2^{−j_max+1}ξ)`, so the bank is an exact
//! partition of unity on the whole grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{
    dealias, gradient, lp_norm, lp_norm_vector, Exponent, GridSpec, ScalarField, VectorField,
};

const CHI_INNER: f64 = 1.1;
const CHI_OUTER: f64 = 1.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("grid too small: j_max = {0}, need at least 1")]
    GridTooSmall(i32),
    #[error("block index {j} outside [-1, {j_max}]")]
    BlockOutOfRange { j: i32, j_max: i32 },
    #[error("invalid Besov index: {0}")]
    InvalidIndex(String),
}

fn smooth_step_kernel(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// The radial low-pass profile `χ(|ξ|)`.
pub fn chi(radius: f64) -> f64 {
    if radius <= CHI_INNER {
        1.0
    } else if radius >= CHI_OUTER {
        0.0
    } else {
        // t runs from 0 at the outer edge to 1 at the inner edge
        let t = (CHI_OUTER - radius) / (CHI_OUTER - CHI_INNER);
        let a = smooth_step_kernel(t);
        a / (a + smooth_step_kernel(1.0 - t))
    }
}

/// Besov regularity/integrability/summability triple `(s, p, r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovIndex {
    pub s: f64,
    pub p: Exponent,
    pub r: Exponent,
}

impl BesovIndex {
    pub fn new(s: f64, p: Exponent, r: Exponent) -> Result<Self, LpError> {
        if !s.is_finite() {
            return Err(LpError::InvalidIndex(format!("s must be finite, got {s}")));
        }
        for e in [p, r] {
            if let Exponent::Finite(v) = e {
                if !(v >= 1.0) {
                    return Err(LpError::InvalidIndex(format!("exponent {v} < 1")));
                }
            }
        }
        Ok(Self { s, p, r })
    }

    /// `B^s_{∞,1}`.
    pub fn sup_summable(s: f64) -> Self {
        Self {
            s,
            p: Exponent::Infinity,
            r: Exponent::Finite(1.0),
        }
    }

    /// Whether `B^s_{p,r}` embeds in the globally Lipschitz functions:
    /// `s > 1 + d/p`, or `s = 1 + d/p` with `r = 1`.
    pub fn lipschitz_embedding(&self, dim: usize) -> bool {
        let critical = 1.0 + dim as f64 / self.p.as_f64();
        self.s > critical || (self.s == critical && self.r == Exponent::Finite(1.0))
    }
}

/// Precomputed multipliers `χ(2·)` and `φ_0..φ_{j_max}` on the grid's modes.
#[derive(Clone, Debug)]
pub struct DyadicFilterBank {
    grid: GridSpec,
    j_max: i32,
    chi_profile: Vec<f64>,
    phi_profiles: Vec<Vec<f64>>,
}

impl DyadicFilterBank {
    pub fn new(grid: GridSpec) -> Result<Self, LpError> {
        let reach = grid.k_max() as f64 * (grid.dim() as f64).sqrt();
        let mut j_max = 0;
        while CHI_OUTER * 2f64.powi(j_max) < reach {
            j_max += 1;
        }
        if j_max < 1 {
            return Err(LpError::GridTooSmall(j_max));
        }
        let n = grid.n();
        let radii: Vec<f64> = (0..grid.len())
            .map(|idx| grid.wavevector_norm(idx % n, idx / n))
            .collect();
        let chi_profile: Vec<f64> = radii.iter().map(|&r| chi(2.0 * r)).collect();
        let phi_profiles = (0..=j_max)
            .map(|j| {
                let outer = 2f64.powi(-j);
                let inner = 2f64.powi(-j + 1);
                radii
                    .iter()
                    .map(|&r| {
                        if j == j_max {
                            1.0 - chi(inner * r)
                        } else {
                            chi(outer * r) - chi(inner * r)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid,
            j_max,
            chi_profile,
            phi_profiles,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn chi_profile(&self) -> &[f64] {
        &self.chi_profile
    }

    /// Multiplier of block `j` (`j = −1` is the low-pass `χ(2ξ)`).
    pub fn block_profile(&self, j: i32) -> Result<&[f64], LpError> {
        match j {
            -1 => Ok(&self.chi_profile),
            j if (0..=self.j_max).contains(&j) => Ok(&self.phi_profiles[j as usize]),
            j => Err(LpError::BlockOutOfRange {
                j,
                j_max: self.j_max,
            }),
        }
    }

    /// Mutable access to a block multiplier, for fault-injection checks.
    pub fn block_profile_mut(&mut self, j: i32) -> Result<&mut Vec<f64>, LpError> {
        let j_max = self.j_max;
        match j {
            -1 => Ok(&mut self.chi_profile),
            j if (0..=j_max).contains(&j) => Ok(&mut self.phi_profiles[j as usize]),
            j => Err(LpError::BlockOutOfRange { j, j_max }),
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = i32> {
        -1..=self.j_max
    }

    /// Largest `|χ + Σ φ_j − 1|` over retained modes.
    pub fn partition_of_unity_residual(&self) -> f64 {
        let n = self.grid.n();
        (0..self.grid.len())
            .filter(|idx| self.grid.is_retained(idx % n, idx / n))
            .map(|idx| {
                let total = self.chi_profile[idx]
                    + self.phi_profiles.iter().map(|p| p[idx]).sum::<f64>();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `Δ_j f`.
    pub fn dyadic_block(&self, f: &ScalarField, j: i32) -> Result<ScalarField, LpError> {
        Ok(f.apply_multiplier_table(self.block_profile(j)?))
    }

    pub fn dyadic_block_vector(&self, v: &VectorField, j: i32) -> Result<VectorField, LpError> {
        let profile = self.block_profile(j)?;
        Ok(v.map_components(|c| c.apply_multiplier_table(profile)))
    }

    /// `S_j f = Σ_{k <= j−1} Δ_k f`, i.e. `χ(2^{−j+1}D) f` below the top block
    /// and the identity from `j = j_max + 1` on.
    pub fn low_cutoff(&self, f: &ScalarField, j: i32) -> ScalarField {
        assert!(j >= 0, "low cut-off index must be non-negative");
        if j > self.j_max {
            return f.clone();
        }
        let scale = 2f64.powi(-j + 1);
        let grid = self.grid;
        f.apply_multiplier(|ix, iy| chi(scale * grid.wavevector_norm(ix, iy)))
    }

    fn block_norms(&self, f: &ScalarField, p: Exponent) -> Vec<(i32, f64)> {
        self.blocks()
            .map(|j| {
                let block = f.apply_multiplier_table(self.block_profile(j).expect("in range"));
                (j, lp_norm(&block, p))
            })
            .collect()
    }

    fn block_norms_vector(&self, v: &VectorField, p: Exponent) -> Vec<(i32, f64)> {
        self.blocks()
            .map(|j| {
                let block = self.dyadic_block_vector(v, j).expect("in range");
                (j, lp_norm_vector(&block, p))
            })
            .collect()
    }

    /// `‖(2^{js} ‖Δ_j f‖_{L^p})_j‖_{ℓ^r}`.
    pub fn besov_norm(&self, f: &ScalarField, idx: BesovIndex) -> f64 {
        weighted_sequence_norm(&self.block_norms(f, idx.p), idx)
    }

    /// Besov norm of a vector field, with `|·|` the pointwise Euclidean norm.
    pub fn besov_norm_vector(&self, v: &VectorField, idx: BesovIndex) -> f64 {
        weighted_sequence_norm(&self.block_norms_vector(v, idx.p), idx)
    }

    /// `‖f‖_{L²} + ‖f‖_{B^s_{p,r}}`.
    pub fn intersection_norm(&self, f: &ScalarField, idx: BesovIndex) -> f64 {
        lp_norm(f, Exponent::Finite(2.0)) + self.besov_norm(f, idx)
    }

    pub fn intersection_norm_vector(&self, v: &VectorField, idx: BesovIndex) -> f64 {
        lp_norm_vector(v, Exponent::Finite(2.0)) + self.besov_norm_vector(v, idx)
    }

    /// Largest `|φ_j(ξ) φ_k(ξ)|` over all modes and all `|j − k| >= 2`.
    pub fn quasi_orthogonality_residual(&self) -> f64 {
        let blocks: Vec<i32> = self.blocks().collect();
        let mut worst = 0.0f64;
        for &j in &blocks {
            for &k in blocks.iter().filter(|&&k| k >= j + 2) {
                let a = self.block_profile(j).expect("in range");
                let b = self.block_profile(k).expect("in range");
                worst = a.iter().zip(b).fold(worst, |m, (x, y)| m.max((x * y).abs()));
            }
        }
        worst
    }

    /// `‖∇Δ_j f‖_{L^p} / (2^j ‖Δ_j f‖_{L^p})`; zero when the block is empty.
    pub fn bernstein_ratio(&self, f: &ScalarField, j: i32, p: Exponent) -> Result<f64, LpError> {
        let block = self.dyadic_block(f, j)?;
        let denom = 2f64.powi(j) * lp_norm(&block, p);
        if denom == 0.0 {
            return Ok(0.0);
        }
        Ok(lp_norm_vector(&gradient(&block), p) / denom)
    }

    /// `‖T_u v + T_v u + R(u, v) − uv‖_∞ / (‖u‖_∞ ‖v‖_∞)` after dealiasing
    /// both inputs and the product.
    pub fn bony_residual(&self, u: &ScalarField, v: &ScalarField) -> f64 {
        let u = dealias(u);
        let v = dealias(v);
        let scale = u.max_abs() * v.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let sum = &(&self.paraproduct(&u, &v) + &self.paraproduct(&v, &u)) + &self.remainder(&u, &v);
        let uv = dealias(&u.product(&v));
        sum.values()
            .iter()
            .zip(uv.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale
    }

    fn blocks_of(&self, f: &ScalarField) -> Vec<ScalarField> {
        self.blocks()
            .map(|j| self.dyadic_block(f, j).expect("in range"))
            .collect()
    }

    /// Paraproduct `T_u v = Σ_{j>=1} S_{j−1}u Δ_j v`, truncated.
    pub fn paraproduct(&self, u: &ScalarField, v: &ScalarField) -> ScalarField {
        let v_blocks = self.blocks_of(v);
        let mut acc = ScalarField::zeros(self.grid);
        for j in 1..=self.j_max {
            let low = self.low_cutoff(u, j - 1);
            // v_blocks is indexed from j = -1
            acc = &acc + &low.product(&v_blocks[(j + 1) as usize]);
        }
        dealias(&acc)
    }

    /// Remainder `R(u, v) = Σ_j Σ_{|k−j|<=1} Δ_j u Δ_k v`, truncated.
    pub fn remainder(&self, u: &ScalarField, v: &ScalarField) -> ScalarField {
        let u_blocks = self.blocks_of(u);
        let v_blocks = self.blocks_of(v);
        let count = u_blocks.len();
        let mut acc = ScalarField::zeros(self.grid);
        for j in 0..count {
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(count - 1);
            let near = (lo..=hi)
                .map(|k| &v_blocks[k])
                .fold(ScalarField::zeros(self.grid), |a, b| &a + b);
            acc = &acc + &u_blocks[j].product(&near);
        }
        dealias(&acc)
    }

    /// Per-block commutator sizes `2^{js} ‖[f, Δ_j] v‖_{L^p}` together with
    /// the right-hand envelope
    /// `‖f‖_{B¹_{∞,1}} ‖v‖_{B^{s−1}_{p,r}} + ‖∇f‖_{B^{s−1}_{p,r}} ‖v‖_{L^∞}`.
    pub fn commutator_damping_profile(
        &self,
        f: &ScalarField,
        v: &VectorField,
        idx: BesovIndex,
    ) -> CommutatorProfile {
        let lower = BesovIndex { s: idx.s - 1.0, ..idx };
        let envelope = self.besov_norm(f, BesovIndex::sup_summable(1.0))
            * self.besov_norm_vector(v, lower)
            + self.besov_norm_vector(&gradient(f), lower) * lp_norm_vector(v, Exponent::Infinity);
        let fv = v.scale_by_field(f);
        let blocks = self
            .blocks()
            .map(|j| {
                let f_block_v = self.dyadic_block_vector(v, j).expect("in range").scale_by_field(f);
                let block_fv = self.dyadic_block_vector(&fv, j).expect("in range");
                let comm = &f_block_v - &block_fv;
                let lhs = 2f64.powf(j as f64 * idx.s) * lp_norm_vector(&comm, idx.p);
                (j, lhs)
            })
            .collect();
        CommutatorProfile { blocks, envelope }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommutatorProfile {
    /// `(j, 2^{js} ‖[f, Δ_j] v‖_{L^p})`.
    pub blocks: Vec<(i32, f64)>,
    pub envelope: f64,
}

impl CommutatorProfile {
    /// `sup_j lhs_j / envelope` (0 when both vanish).
    pub fn sup_ratio(&self) -> f64 {
        let sup = self.blocks.iter().map(|b| b.1).fold(0.0, f64::max);
        if sup == 0.0 {
            0.0
        } else {
            sup / self.envelope
        }
    }
}

fn weighted_sequence_norm(block_norms: &[(i32, f64)], idx: BesovIndex) -> f64 {
    let weighted = block_norms
        .iter()
        .map(|&(j, norm)| 2f64.powf(j as f64 * idx.s) * norm);
    match idx.r {
        Exponent::Infinity => weighted.fold(0.0, f64::max),
        Exponent::Finite(r) if r == 1.0 => weighted.sum(),
        Exponent::Finite(r) => weighted.map(|w| w.powf(r)).sum::<f64>().powf(1.0 / r),
    }
}
