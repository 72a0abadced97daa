use std::time::Instant;

use herald_core::atom::{LevelScheme, Sublevel, N_LEVELS};
use herald_core::dynamics::{
    master_equation_oracle, AtomState, DriveField, Engine, Operator, RunOptions, StateVector,
};
use herald_core::polarization::{decompose_drive, NamedPolarization, Polarization};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TRAJECTORIES: usize = 10_000;

fn compare(pol: NamedPolarization, initial: StateVector, seed: u64) {
    let scheme = LevelScheme::default();
    let drive = DriveField {
        rabi_peak: 2.0 * std::f64::consts::PI * 9.0,
        detuning: 0.0,
        decomposition: decompose_drive(&Polarization::named(pol)).unwrap(),
        window: (0.0, 3.0),
    };
    let times = [0.02, 0.1, 0.4, 3.2];
    let rho0: Operator = initial * initial.adjoint();
    let oracle = master_equation_oracle(&rho0, &scheme, &drive, &times).unwrap();

    let engine = Engine::new(&scheme, &drive, 3e-4, 0.5).unwrap();
    let init = AtomState::from_amplitudes(initial);
    let opts = RunOptions {
        sample_times: &times,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![[0.0; N_LEVELS]; times.len()];
    let mut sum_sq = vec![[0.0; N_LEVELS]; times.len()];
    let start = Instant::now();
    for _ in 0..TRAJECTORIES {
        let out = engine.run(&init, &mut rng, &opts, |_, _| None).unwrap();
        for (k, pops) in out.samples.iter().enumerate() {
            for i in 0..N_LEVELS {
                sum[k][i] += pops[i];
                sum_sq[k][i] += pops[i] * pops[i];
            }
        }
    }
    let elapsed = start.elapsed();
    eprintln!("{pol}: {TRAJECTORIES} trajectories in {elapsed:.2?}");
    assert!(elapsed.as_secs_f64() < 60.0);

    let n = TRAJECTORIES as f64;
    for (k, sample) in oracle.iter().enumerate() {
        let want = sample.populations();
        for i in 0..N_LEVELS {
            let mean = sum[k][i] / n;
            let var = (sum_sq[k][i] / n - mean * mean).max(0.0);
            // Rare levels may never be visited; the null-hypothesis spread
            // p(1 − p)/n bounds the standard error from below.
            let null = (want[i] * (1.0 - want[i]) / n).max(0.0).sqrt();
            let sigma = (var / n).sqrt().max(null).max(1e-9);
            assert!(
                (mean - want[i]).abs() <= 3.0 * sigma,
                "{pol} t={} level {}: trajectories {mean:.5} vs oracle {:.5} (σ {sigma:.2e})",
                times[k],
                Sublevel::from_index(i).unwrap(),
                want[i],
            );
        }
    }
}

#[test]
fn linear_drive_on_d_three_halves_superposition() {
    let mut psi = StateVector::zeros();
    let a = std::f64::consts::FRAC_1_SQRT_2;
    psi[Sublevel::d(-3).index()] = Complex64::new(a, 0.0);
    psi[Sublevel::d(3).index()] = Complex64::new(0.0, a);
    compare(NamedPolarization::D, psi, 11);
}

#[test]
fn circular_drive_on_d_minus_three_halves() {
    let mut psi = StateVector::zeros();
    psi[Sublevel::d(-3).index()] = Complex64::new(1.0, 0.0);
    compare(NamedPolarization::R, psi, 12);
}
