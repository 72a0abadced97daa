//! Self-checks run by `herald validate`: coupling coefficients against the
//! Racah formula, trajectories against the master equation, the jump-free
//! limit and the read-out threshold.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::atom::{clebsch_gordan_rank1, LevelScheme, Manifold, Sublevel, N_LEVELS};
use crate::config::Config;
use crate::dynamics::{
    master_equation_oracle, AtomState, DriveField, Engine, Operator, RunOptions, StateVector,
};
use num_complex::Complex64;
use crate::error::Result;
use crate::polarization::{decompose_drive, NamedPolarization, Polarization};
use crate::protocol::{ReadoutModel, Variant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn factorial(n: i32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Wigner 3j symbol by the Racah formula. Arguments are doubled.
pub fn wigner_3j(tj1: i32, tj2: i32, tj3: i32, tm1: i32, tm2: i32, tm3: i32) -> f64 {
    if tm1 + tm2 + tm3 != 0 || tm1.abs() > tj1 || tm2.abs() > tj2 || tm3.abs() > tj3 {
        return 0.0;
    }
    if tj3 > tj1 + tj2 || tj3 < (tj1 - tj2).abs() || (tj1 + tj2 + tj3) % 2 != 0 {
        return 0.0;
    }
    if (tj1 + tm1) % 2 != 0 || (tj2 + tm2) % 2 != 0 || (tj3 + tm3) % 2 != 0 {
        return 0.0;
    }
    let h = |x: i32| x / 2;
    let triangle = factorial(h(tj1 + tj2 - tj3)) * factorial(h(tj1 - tj2 + tj3)) * factorial(h(-tj1 + tj2 + tj3))
        / factorial(h(tj1 + tj2 + tj3) + 1);
    let prefactor = (triangle
        * factorial(h(tj1 + tm1))
        * factorial(h(tj1 - tm1))
        * factorial(h(tj2 + tm2))
        * factorial(h(tj2 - tm2))
        * factorial(h(tj3 + tm3))
        * factorial(h(tj3 - tm3)))
    .sqrt();
    let kmin = 0.max(h(tj2 - tj3 - tm1)).max(h(tj1 - tj3 + tm2));
    let kmax = h(tj1 + tj2 - tj3).min(h(tj1 - tm1)).min(h(tj2 + tm2));
    let mut sum = 0.0;
    for k in kmin..=kmax {
        let denom = factorial(k)
            * factorial(h(tj1 + tj2 - tj3) - k)
            * factorial(h(tj1 - tm1) - k)
            * factorial(h(tj2 + tm2) - k)
            * factorial(h(tj3 - tj2 + tm1) + k)
            * factorial(h(tj3 - tj1 - tm2) + k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    let phase = if h(tj1 - tj2 - tm3) % 2 == 0 { 1.0 } else { -1.0 };
    phase * prefactor * sum
}

/// ⟨j₁ m₁; 1 q | J M⟩ from the 3j symbol.
pub fn clebsch_gordan_from_3j(two_j1: i32, two_m1: i32, q: i32, two_j: i32, two_m: i32) -> f64 {
    let exponent = (two_j1 - 2 + two_m) / 2;
    let phase = if exponent.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * f64::from(two_j + 1).sqrt() * wigner_3j(two_j1, 2, two_j, two_m1, 2 * q, -two_m)
}

/// Largest deviation of the closed-form coefficients over every S₁/₂ and
/// D₅/₂ to P₃/₂ component.
pub fn cg_table_deviation() -> f64 {
    let mut worst: f64 = 0.0;
    for lower in [Manifold::S12, Manifold::D52] {
        let two_jl = lower.two_j().expect("angular momentum");
        let two_ju = Manifold::P32.two_j().expect("angular momentum");
        for l in lower.sublevels() {
            for u in Manifold::P32.sublevels() {
                for q in -1..=1 {
                    let a = clebsch_gordan_rank1(two_jl, l.two_m, q, two_ju, u.two_m);
                    let b = clebsch_gordan_from_3j(two_jl, l.two_m, q, two_ju, u.two_m);
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    worst
}

/// Largest |trajectory mean − master equation| / σ over all levels and times.
pub fn trajectory_z_score(config: &Config, trajectories: usize, seed: u64) -> Result<f64> {
    let scheme = config.scheme();
    let drive = DriveField {
        rabi_peak: 2.0 * PI * config.drive.rabi_mhz,
        detuning: 2.0 * PI * config.drive.detuning_mhz,
        decomposition: decompose_drive(&Polarization::named(NamedPolarization::D))?,
        window: (0.0, config.sequence.absorb_window_us),
    };
    let (lo, hi) = crate::protocol::storage_pair(Variant::A);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = StateVector::zeros();
    psi[lo.index()] = Complex64::new(a, 0.0);
    psi[hi.index()] = Complex64::new(0.0, a);
    let init = AtomState::from_amplitudes(psi);
    let settle = config.drive.settle_us;
    let end = config.sequence.absorb_window_us + settle;
    let times = [0.02, 0.1, 0.4, end];
    let rho0: Operator = psi * psi.adjoint();
    let oracle = master_equation_oracle(&rho0, &scheme, &drive, &times)?;

    let engine = Engine::new(&scheme, &drive, config.drive.dt_max_us, settle)?;
    let opts = RunOptions {
        sample_times: &times,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![[0.0; N_LEVELS]; times.len()];
    let mut sum_sq = vec![[0.0; N_LEVELS]; times.len()];
    for _ in 0..trajectories {
        let out = engine.run(&init, &mut rng, &opts, |_, _| None)?;
        for (k, pops) in out.samples.iter().enumerate() {
            for i in 0..N_LEVELS {
                sum[k][i] += pops[i];
                sum_sq[k][i] += pops[i] * pops[i];
            }
        }
    }
    let n = trajectories as f64;
    let mut worst: f64 = 0.0;
    for (k, sample) in oracle.iter().enumerate() {
        let want = sample.populations();
        for i in 0..N_LEVELS {
            let mean = sum[k][i] / n;
            let var = (sum_sq[k][i] / n - mean * mean).max(0.0);
            let null = (want[i] * (1.0 - want[i]) / n).max(0.0).sqrt();
            let sigma = (var / n).sqrt().max(null).max(1e-9);
            worst = worst.max((mean - want[i]).abs() / sigma);
        }
    }
    Ok(worst)
}

/// Number of jumps in `trajectories` runs with the P₃/₂ decay switched off.
pub fn jumps_without_decay(config: &Config, trajectories: usize, seed: u64) -> Result<usize> {
    let scheme = LevelScheme {
        linewidth_p32: 0.0,
        ..config.scheme()
    };
    let drive = DriveField {
        rabi_peak: 2.0 * PI * config.drive.rabi_mhz,
        detuning: 2.0 * PI * config.drive.detuning_mhz,
        decomposition: decompose_drive(&Polarization::named(NamedPolarization::H))?,
        window: (0.0, config.sequence.absorb_window_us),
    };
    let engine = Engine::new(&scheme, &drive, config.drive.dt_max_us, config.drive.settle_us)?;
    let init = AtomState::basis(Sublevel::d(-3));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jumps = 0;
    for _ in 0..trajectories {
        jumps += engine.run(&init, &mut rng, &RunOptions::default(), |_, _| None)?.jumps.len();
    }
    Ok(jumps)
}

/// All checks, in a fixed order.
pub fn run_validation(config: &Config, trajectories: usize, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let cg = cg_table_deviation();
    checks.push(Check {
        name: "cg_table_vs_racah_3j".into(),
        passed: cg <= 1e-12,
        detail: format!("max deviation {cg:.2e} (limit 1e-12)"),
    });

    let z = trajectory_z_score(config, trajectories, seed)?;
    checks.push(Check {
        name: "trajectories_vs_master_equation".into(),
        passed: z <= 3.0,
        detail: format!("{trajectories} trajectories, worst level deviation {z:.2} σ (limit 3)"),
    });

    let jumps = jumps_without_decay(config, 200, seed.wrapping_add(1))?;
    checks.push(Check {
        name: "no_jumps_without_decay".into(),
        passed: jumps == 0,
        detail: format!("{jumps} jumps in 200 trajectories with Γ = 0"),
    });

    let m = ReadoutModel::from_sequence(&config.sequence);
    let f = m.choice.fidelity();
    checks.push(Check {
        name: "readout_discrimination".into(),
        passed: f >= 0.999,
        detail: format!(
            "threshold {} counts, fidelity {:.5} (means {:.3} / {:.4})",
            m.choice.threshold, f, m.bright_mean, m.dark_mean
        ),
    });
    Ok(checks)
}
