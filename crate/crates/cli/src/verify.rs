//! Self-checks of the numerical kernels, run by `ekman verify`.

use std::time::Instant;

use ekman_core::diagnostics::energy_balance_residual;
use ekman_core::dynamics::{
    run_simulation, DensityPreset, InitialCondition, SimConfig, VelocityPreset,
};
use ekman_core::elliptic::{lax_milgram_check, solve_pressure, PressureSolveParams};
use ekman_core::fields::{Exponent, GridSpec, ScalarField, VectorField};
use ekman_core::littlewood_paley::{BesovIndex, DyadicFilterBank};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Level {
    Quick,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

fn grid(n: usize) -> GridSpec {
    GridSpec::with_default_dealias(n).expect("power-of-two grid")
}

/// Filter bank at `n`; with `fault` set, one block multiplier is nudged
/// off the partition of unity.
fn bank(n: usize, fault: bool) -> DyadicFilterBank {
    let mut b = DyadicFilterBank::new(grid(n)).expect("grid supports a filter bank");
    if fault {
        let idx = b.grid().mode_index(3, 1);
        b.block_profile_mut(1).expect("block 1 exists")[idx] += 1e-3;
    }
    b
}

fn random_field(g: GridSpec, k_cut: f64, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::random_band_limited(g, k_cut, 1.0, rng)
}

fn partition_of_unity(b: &DyadicFilterBank) -> CheckOutcome {
    let r = b.partition_of_unity_residual();
    CheckOutcome::new(
        format!("partition_of_unity[n={}]", b.grid().n()),
        r <= 1e-14,
        format!("max residual {r:.3e}"),
    )
}

fn quasi_orthogonality(b: &DyadicFilterBank) -> CheckOutcome {
    let r = b.quasi_orthogonality_residual();
    CheckOutcome::new(
        format!("block_orthogonality[n={}]", b.grid().n()),
        r <= 1e-12,
        format!("max |phi_j phi_k| {r:.3e}"),
    )
}

fn bony(b: &DyadicFilterBank, pairs: usize) -> CheckOutcome {
    let g = *b.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let k_cut = (g.n() / 3) as f64;
    let worst = (0..pairs)
        .map(|_| {
            let u = random_field(g, k_cut, &mut rng);
            let v = random_field(g, k_cut, &mut rng);
            b.bony_residual(&u, &v)
        })
        .fold(0.0, f64::max);
    CheckOutcome::new(
        format!("bony_identity[n={}]", g.n()),
        worst <= 1e-10,
        format!("{pairs} pairs, max relative residual {worst:.3e}"),
    )
}

fn bernstein(b: &DyadicFilterBank, fields: usize) -> CheckOutcome {
    let g = *b.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(0xbe25);
    let k_cut = (g.n() / 3) as f64;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..fields {
        let f = random_field(g, k_cut, &mut rng);
        for j in 1..b.j_max() {
            for p in [Exponent::Finite(2.0), Exponent::Infinity] {
                let r = b.bernstein_ratio(&f, j, p).expect("block in range");
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
    }
    CheckOutcome::new(
        format!("bernstein[n={}]", g.n()),
        lo >= 0.125 && hi <= 8.0,
        format!("ratios in [{lo:.3}, {hi:.3}]"),
    )
}

fn lax_milgram(instances: usize) -> CheckOutcome {
    let g = grid(32);
    let params = PressureSolveParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a8);
    let (mut worst_ratio, mut worst_iter, mut failures) = (0.0f64, 0usize, 0usize);
    for _ in 0..instances {
        let shape = random_field(g, 3.0, &mut rng);
        // contrast (1 + a) / (1 − a) stays at or below 2
        let a = rng.gen_range(0.0..1.0 / 3.0) / shape.max_abs();
        let rho = shape.map(|v| 1.0 + a * v);
        let force = VectorField::new(vec![
            random_field(g, 8.0, &mut rng),
            random_field(g, 8.0, &mut rng),
        ])
        .expect("matching grids");
        match solve_pressure(&rho, &force, &params) {
            Ok(sol) => {
                let ratio = lax_milgram_check(&rho, &force, &sol.grad_pi).unwrap_or(f64::INFINITY);
                worst_ratio = worst_ratio.max(ratio);
                worst_iter = worst_iter.max(sol.iterations);
                if sol.residual > params.tol {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    CheckOutcome::new(
        "lax_milgram",
        failures == 0 && worst_ratio <= 1.0 + 1e-8 && worst_iter <= 50,
        format!(
            "{instances} instances, max ratio {worst_ratio:.10}, max iterations {worst_iter}, failures {failures}"
        ),
    )
}

fn sim(n: usize, alpha: f64, gamma: u8, dt: f64, t_end: f64, ic: InitialCondition) -> SimConfig {
    SimConfig {
        alpha,
        gamma,
        grid: grid(n),
        dt,
        t_end,
        ic,
        pressure: PressureSolveParams::default(),
        besov_indices: vec![BesovIndex::sup_summable(1.0)],
        record_every: 1,
    }
}

fn taylor_green_ic() -> InitialCondition {
    InitialCondition {
        velocity: VelocityPreset::TaylorGreen { amplitude: 1.0 },
        density: DensityPreset::Constant { value: 1.0 },
        seed: 0,
    }
}

fn stratified_ic() -> InitialCondition {
    InitialCondition {
        velocity: VelocityPreset::TaylorGreen { amplitude: 0.3 },
        density: DensityPreset::SingleMode {
            k: [1, 0],
            amplitude: 0.2,
        },
        seed: 0,
    }
}

fn taylor_green_regression() -> CheckOutcome {
    let alpha = 0.5;
    let decay = run_simulation(&sim(32, alpha, 1, 0.01, 2.0, taylor_green_ic()));
    let l0 = decay.records.first().map_or(f64::NAN, |r| r.l2_u);
    let decay_err = decay
        .records
        .iter()
        .map(|r| {
            let exact = l0 * (-alpha * r.t).exp();
            (r.l2_u - exact).abs() / exact
        })
        .fold(0.0, f64::max);

    let steady_cfg = sim(32, 0.0, 1, 0.01, 1.0, taylor_green_ic());
    let steady = run_simulation(&steady_cfg);
    let u0 = steady_cfg.ic.velocity_field(steady_cfg.grid);
    let drift = steady.final_state.as_ref().map_or(f64::INFINITY, |s| {
        s.u.components()
            .iter()
            .zip(u0.components())
            .flat_map(|(a, b)| a.values().iter().zip(b.values()))
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }) / u0.component(0).max_abs();
    CheckOutcome::new(
        "taylor_green",
        decay.completed() && steady.completed() && decay_err <= 1e-8 && drift <= 1e-8,
        format!("decay rel. error {decay_err:.3e}, steady drift {drift:.3e}"),
    )
}

fn energy_balance() -> CheckOutcome {
    let tg = run_simulation(&sim(32, 0.5, 1, 1e-3, 0.2, taylor_green_ic()));
    let r_tg = energy_balance_residual(&tg.records, 1, 0.5).unwrap_or(f64::INFINITY);
    let strat = run_simulation(&sim(32, 0.4, 0, 0.005, 1.0, stratified_ic()));
    let r_strat = energy_balance_residual(&strat.records, 0, 0.4).unwrap_or(f64::INFINITY);
    CheckOutcome::new(
        "energy_balance",
        tg.completed() && strat.completed() && r_tg <= 1e-6 && r_strat <= 1e-5,
        format!("uniform damping {r_tg:.3e}, density-weighted {r_strat:.3e}"),
    )
}

fn resolution_consistency() -> CheckOutcome {
    let coarse = run_simulation(&sim(64, 0.4, 0, 0.01, 1.0, stratified_ic()));
    let fine = run_simulation(&sim(128, 0.4, 0, 0.01, 1.0, stratified_ic()));
    let worst = coarse
        .records
        .iter()
        .zip(&fine.records)
        .map(|(a, b)| {
            let e = (a.energy - b.energy).abs() / b.energy;
            let u = (a.l2_u - b.l2_u).abs() / b.l2_u;
            e.max(u)
        })
        .fold(0.0, f64::max);
    let same_len = coarse.records.len() == fine.records.len();
    CheckOutcome::new(
        "resolution_consistency[64 vs 128]",
        coarse.completed() && fine.completed() && same_len && worst <= 1e-8,
        format!("max relative difference {worst:.3e}"),
    )
}

/// Fourier collocation differentiation matrix for even `n`.
fn differentiation_matrix(n: usize) -> DMatrix<f64> {
    let h = 2.0 * std::f64::consts::PI / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * d * h).tan()
        }
    })
}

fn dense_elliptic_oracle() -> CheckOutcome {
    let n = 16;
    let g = grid(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0xde5e);
    let rho = ScalarField::from_fn(g, |x, y| 1.0 + 0.2 * x.cos() + 0.1 * (x + y).sin());
    let force = VectorField::new(vec![
        random_field(g, 5.0, &mut rng),
        random_field(g, 5.0, &mut rng),
    ])
    .expect("matching grids");
    let sol = match solve_pressure(&rho, &force, &PressureSolveParams::default()) {
        Ok(s) => s,
        Err(e) => return CheckOutcome::new("dense_elliptic[n=16]", false, e.to_string()),
    };
    let d1 = differentiation_matrix(n);
    let id = DMatrix::<f64>::identity(n, n);
    // x varies fastest in storage
    let dx = id.kronecker(&d1);
    let dy = d1.kronecker(&id);
    let a = DMatrix::from_diagonal(&DVector::from_iterator(
        n * n,
        rho.values().iter().map(|r| 1.0 / r),
    ));
    let op = -(&dx * &a * &dx + &dy * &a * &dy);
    let rhs = &dx * DVector::from_column_slice(force.component(0).values())
        + &dy * DVector::from_column_slice(force.component(1).values());
    let dense = op.svd(true, true).solve(&rhs, 1e-10).expect("svd solve");
    let err = dense
        .iter()
        .zip(sol.pi.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    CheckOutcome::new(
        "dense_elliptic[n=16]",
        err <= 1e-8,
        format!("max |pi - pi_dense| {err:.3e}"),
    )
}

pub fn run_checks(level: Level, inject_fault: bool) -> Vec<CheckOutcome> {
    let mut sizes = vec![64];
    if level == Level::Full {
        sizes.push(128);
    }
    let mut out = Vec::new();
    for &n in &sizes {
        let b = bank(n, inject_fault);
        out.push(partition_of_unity(&b));
        out.push(quasi_orthogonality(&b));
        out.push(bony(&b, 100));
        out.push(bernstein(&b, 10));
    }
    out.push(lax_milgram(50));
    out.push(taylor_green_regression());
    out.push(energy_balance());
    if level == Level::Full {
        out.push(resolution_consistency());
        out.push(dense_elliptic_oracle());
    }
    out
}

pub fn cmd_verify(level: Level, inject_fault: bool) -> i32 {
    let start = Instant::now();
    let results = run_checks(level, inject_fault);
    let width = results.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &results {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        println!("{:<width$}  {mark}  {}", c.name, c.detail);
    }
    let failed = results.iter().filter(|c| !c.passed).count();
    println!(
        "{} checks, {failed} failed, {:.1} s",
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        0
    } else {
        1
    }
}
