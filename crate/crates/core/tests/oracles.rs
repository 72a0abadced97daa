//! Independent oracles for the hand-written physics: coupling coefficients
//! from diagonalizing J², the effective Hamiltonian rebuilt entry by entry,
//! the propagator against a Taylor-series exponential, the read-out threshold
//! from the gamma-integral form of the Poisson tail, and the channel algebra
//! behind process tomography.

use std::f64::consts::PI;

use herald_core::analysis::{
    density_from_bloch, fit_phase_events, pauli, process_tomography, pure_state_fidelity, two_design_average,
    PhaseEvent, TomographyInput,
};
use herald_core::atom::{all_sublevels, clebsch_gordan_rank1, zeeman_shift, LevelScheme, Manifold, N_LEVELS};
use herald_core::dynamics::{effective_hamiltonian, DriveField, Operator, Propagator, StateVector};
use herald_core::polarization::{decompose_drive, NamedPolarization, Polarization};
use herald_core::protocol::{optimal_threshold, ReadoutModel, SequenceConfig};
use nalgebra::{DMatrix, Matrix2, SMatrix};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------- Clebsch–Gordan from J² eigenvectors ----------

/// All ⟨j₁ m₁; 1 q | J M⟩ for one (j₁, J), built by diagonalizing J² in the
/// M = J block, fixing the Condon–Shortley sign (m₁ = j₁ component positive)
/// and applying J₋ repeatedly. Indexed by (m₁, q) in doubled units.
fn cg_oracle(two_j1: i32, two_j: i32) -> Vec<(i32, i32, i32, f64)> {
    let j1 = f64::from(two_j1) / 2.0;
    let basis: Vec<(i32, i32)> = (0..=two_j1)
        .map(|k| two_j1 - 2 * k)
        .flat_map(|m1| [1, 0, -1].map(|q| (m1, q)))
        .collect();
    let n = basis.len();
    let idx = |m1: i32, q: i32| basis.iter().position(|&b| b == (m1, q));
    // J± matrix elements √(j(j+1) − m(m±1)).
    let ladder = |j: f64, m: f64, s: f64| (j * (j + 1.0) - m * (m + s)).max(0.0).sqrt();

    let mut j2 = DMatrix::<f64>::zeros(n, n);
    for (c, &(m1, q)) in basis.iter().enumerate() {
        let (mf, qf) = (f64::from(m1) / 2.0, f64::from(q));
        j2[(c, c)] += j1 * (j1 + 1.0) + 2.0 + 2.0 * mf * qf;
        // J1+ J2−
        if let Some(r) = idx(m1 + 2, q - 1) {
            j2[(r, c)] += ladder(j1, mf, 1.0) * ladder(1.0, qf, -1.0);
        }
        // J1− J2+
        if let Some(r) = idx(m1 - 2, q + 1) {
            j2[(r, c)] += ladder(j1, mf, -1.0) * ladder(1.0, qf, 1.0);
        }
    }

    let top: Vec<usize> = (0..n).filter(|&i| basis[i].0 + 2 * basis[i].1 == two_j).collect();
    let block = DMatrix::from_fn(top.len(), top.len(), |a, b| j2[(top[a], top[b])]);
    let eig = block.symmetric_eigen();
    let jf = f64::from(two_j) / 2.0;
    let k = (0..top.len())
        .min_by(|&a, &b| {
            (eig.eigenvalues[a] - jf * (jf + 1.0))
                .abs()
                .total_cmp(&(eig.eigenvalues[b] - jf * (jf + 1.0)).abs())
        })
        .unwrap();
    let mut v = vec![0.0; n];
    for (a, &i) in top.iter().enumerate() {
        v[i] = eig.eigenvectors[(a, k)];
    }
    let lead = top.iter().find(|&&i| basis[i].0 == two_j1).copied().expect("m1 = j1 present");
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }

    let mut out = Vec::new();
    let mut two_m = two_j;
    loop {
        for (i, &(m1, q)) in basis.iter().enumerate() {
            if m1 + 2 * q == two_m {
                out.push((m1, q, two_m, v[i]));
            }
        }
        if two_m == -two_j {
            break;
        }
        let mut w = vec![0.0; n];
        for (c, &(m1, q)) in basis.iter().enumerate() {
            let (mf, qf) = (f64::from(m1) / 2.0, f64::from(q));
            if let Some(r) = idx(m1 - 2, q) {
                w[r] += ladder(j1, mf, -1.0) * v[c];
            }
            if let Some(r) = idx(m1, q - 1) {
                w[r] += ladder(1.0, qf, -1.0) * v[c];
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
        two_m -= 2;
    }
    out
}

#[test]
fn closed_form_cg_matches_j_squared_oracle() {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for two_j1 in 1..=6 {
        for two_j in [two_j1 - 2, two_j1, two_j1 + 2] {
            if two_j < 0 || (two_j1 == 0 && two_j == 0) {
                continue;
            }
            for (m1, q, m, want) in cg_oracle(two_j1, two_j) {
                let got = clebsch_gordan_rank1(two_j1, m1, q, two_j, m);
                worst = worst.max((got - want).abs());
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn cg_oracle_reproduces_textbook_values() {
    // ⟨½ ½; 1 0 | 3/2 ½⟩ = √(2/3), ⟨½ −½; 1 1 | 3/2 ½⟩ = √(1/3).
    let table = cg_oracle(1, 3);
    let get = |m1, q| table.iter().find(|e| e.0 == m1 && e.1 == q).unwrap().3;
    assert!((get(1, 0) - (2.0f64 / 3.0).sqrt()).abs() < 1e-14);
    assert!((get(-1, 1) - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
}

// ---------- effective Hamiltonian ----------

#[test]
fn effective_hamiltonian_matches_entrywise_construction() {
    let scheme = LevelScheme::default();
    for pol in [NamedPolarization::H, NamedPolarization::D, NamedPolarization::R, NamedPolarization::L] {
        let dec = decompose_drive(&Polarization::named(pol)).unwrap();
        let drive = DriveField {
            rabi_peak: 2.0 * PI * 9.0,
            detuning: 2.0 * PI * 1.5,
            decomposition: dec,
            window: (0.0, 3.0),
        };
        let h = effective_hamiltonian(&scheme, &drive);
        let cg = cg_oracle(5, 3);
        let mut want = Operator::zeros();
        for l in all_sublevels() {
            let i = l.index();
            want[(i, i)] = match l.manifold {
                Manifold::Sink => C::new(0.0, 0.0),
                Manifold::P32 => C::new(
                    scheme.g_factors.p32 * l.m() * scheme.larmor_unit() - drive.detuning,
                    -scheme.linewidth_p32 / 2.0,
                ),
                m => C::new(scheme.g_factor(m).unwrap() * l.m() * scheme.larmor_unit(), 0.0),
            };
        }
        for &(m1, q, m, c) in &cg {
            let lower = herald_core::atom::Sublevel::d(m1);
            let upper = herald_core::atom::Sublevel::p(m);
            let w = dec.component(q) * (0.5 * drive.rabi_peak * c);
            want[(upper.index(), lower.index())] += w;
            want[(lower.index(), upper.index())] += w.conj();
        }
        let diff = (h - want).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{pol}: max deviation {diff:e}");
        let hermitian_part = (h + h.adjoint()) * C::new(0.5, 0.0);
        let anti = h - hermitian_part;
        // The only non-Hermitian part is the P₃/₂ decay.
        for l in all_sublevels() {
            let expect = if l.manifold == Manifold::P32 { -scheme.linewidth_p32 / 2.0 } else { 0.0 };
            assert!((anti[(l.index(), l.index())].im - expect).abs() < 1e-12);
        }
        assert!(zeeman_shift(herald_core::atom::Sublevel::s(1), &scheme).unwrap() > 0.0);
    }
}

/// exp(−iHt) by scaling and squaring with a 30-term Taylor series.
fn taylor_expm(h: &Operator, t: f64) -> Operator {
    let a = h * C::new(0.0, -t);
    let norm = a.iter().map(|z| z.norm()).fold(0.0, f64::max) * N_LEVELS as f64;
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = a / C::new(2f64.powi(s), 0.0);
    let mut sum = Operator::identity();
    let mut term = Operator::identity();
    for k in 1..30 {
        term = term * a / C::new(f64::from(k), 0.0);
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

#[test]
fn propagator_ladder_matches_taylor_exponential() {
    let scheme = LevelScheme::default();
    let drive = DriveField {
        rabi_peak: 2.0 * PI * 9.0,
        detuning: 0.0,
        decomposition: decompose_drive(&Polarization::named(NamedPolarization::D)).unwrap(),
        window: (0.0, 3.0),
    };
    let h = effective_hamiltonian(&scheme, &drive);
    let prop = Propagator::new(&h, 0.05, 3e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut psi0 = StateVector::from_fn(|_, _| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    psi0 /= C::new(psi0.norm(), 0.0);
    for (level, &dt) in prop.steps().iter().enumerate() {
        let mut psi = psi0;
        prop.step(level, &mut psi);
        let want = taylor_expm(&h, dt) * psi0;
        assert!((psi - want).norm() < 1e-10, "level {level} (dt {dt}): {:e}", (psi - want).norm());
    }
    for dt in [1e-5, 0.0123, 0.37, 1.9] {
        let mut psi = psi0;
        prop.evolve_exact(dt, &mut psi);
        let want = taylor_expm(&h, dt) * psi0;
        assert!((psi - want).norm() < 1e-10, "dt {dt}");
    }
}

// ---------- read-out threshold ----------

/// P(X ≤ k) for X ~ Poisson(μ) as ∫_μ^∞ t^k e^{−t}/k! dt, composite Simpson.
fn poisson_cdf_integral(k: u32, mu: f64) -> f64 {
    let upper = mu + 60.0 + 10.0 * f64::from(k);
    let n = 200_000;
    let h = (upper - mu) / n as f64;
    let lgk: f64 = (1..=k).map(|i| f64::from(i).ln()).sum();
    let f = |t: f64| {
        if t <= 0.0 {
            if k == 0 { 1.0 } else { 0.0 }
        } else {
            (f64::from(k) * t.ln() - t - lgk).exp()
        }
    };
    let mut s = f(mu) + f(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(mu + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn threshold_scan_matches_integral_oracle() {
    let model = ReadoutModel::from_sequence(&SequenceConfig::default());
    let (b, d) = (model.bright_mean, model.dark_mean);
    let mut best = (0, f64::INFINITY);
    for t in 1..=20u32 {
        // Bright read as dark: X_b ≤ t − 1. Dark read as bright: X_d ≥ t.
        let err = 0.5 * (poisson_cdf_integral(t - 1, b) + 1.0 - poisson_cdf_integral(t - 1, d));
        if err < best.1 {
            best = (t, err);
        }
    }
    let choice = optimal_threshold(b, d);
    assert_eq!(choice.threshold, best.0);
    assert!((choice.mean_error() - best.1).abs() < 1e-9);
    assert!(choice.fidelity() >= 0.999);
    // Default detection: 10.7 bright counts, 0.006 dark, 2-count threshold.
    assert!((choice.fidelity() - 0.99986).abs() < 2e-5, "{}", choice.fidelity());
}

// ---------- fringes ----------

#[test]
fn perfect_synthetic_fringe_has_unit_visibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let phi0 = 0.8;
    let events: Vec<PhaseEvent> = (0..40_000)
        .map(|_| {
            let theta = rng.random::<f64>() * 2.0 * PI;
            let p = 0.5 * (1.0 + (theta - phi0).sin());
            PhaseEvent {
                theta,
                plus: rng.random::<f64>() < p,
            }
        })
        .collect();
    let fit = fit_phase_events(&events, 16, 1).unwrap();
    // Binning a unit sinusoid into 16 bins reduces it by sinc(π/16).
    let sinc = (PI / 16.0).sin() / (PI / 16.0);
    assert!(fit.visibility_raw > sinc - 4.0 * fit.visibility_stderr, "{}", fit.visibility_raw);
    assert!(fit.visibility <= 1.0);
    assert!((fit.phase_offset - phi0).abs() < 4.0 * fit.phase_offset_stderr + 1e-3);
    assert!((fit.mean - 0.5).abs() < 0.01);
}

// ---------- process tomography ----------

type M2 = Matrix2<C>;

fn random_channel(rng: &mut ChaCha8Rng) -> Vec<M2> {
    // Stinespring isometry from the QR factor of a random 4×2 matrix.
    let g = SMatrix::<C, 4, 2>::from_fn(|_, _| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let q = g.qr().q();
    vec![q.fixed_view::<2, 2>(0, 0).into_owned(), q.fixed_view::<2, 2>(2, 0).into_owned()]
}

fn apply(kraus: &[M2], rho: &M2) -> M2 {
    kraus.iter().map(|k| k * rho * k.adjoint()).sum()
}

fn bloch(rho: &M2) -> [f64; 3] {
    std::array::from_fn(|i| (pauli(i + 1) * rho).trace().re)
}

#[test]
fn random_cptp_channel_obeys_two_design_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let inputs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
    let six = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    for _ in 0..50 {
        let kraus = random_channel(&mut rng);
        let trace_preserving: M2 = kraus.iter().map(|k| k.adjoint() * k).sum();
        assert!((trace_preserving - M2::identity()).norm() < 1e-12);

        let data: Vec<TomographyInput> = inputs
            .iter()
            .map(|&r| TomographyInput {
                input: r,
                output: bloch(&apply(&kraus, &density_from_bloch(r))),
            })
            .collect();
        let chi = process_tomography(&data).unwrap();
        // χ₀₀ = Σ_k |tr K_k|² / 4 for the Pauli basis.
        let want = kraus.iter().map(|k| k.trace().norm_sqr()).sum::<f64>() / 4.0;
        assert!((chi.process_fidelity() - want).abs() < 1e-12);
        assert!(chi.hermiticity_error() < 1e-12);
        assert!((chi.trace().re - 1.0).abs() < 1e-12 && chi.trace().im.abs() < 1e-12);

        let avg = six
            .iter()
            .map(|&r| pure_state_fidelity(r, bloch(&apply(&kraus, &density_from_bloch(r)))))
            .sum::<f64>()
            / 6.0;
        assert!((avg - two_design_average(want)).abs() < 1e-12);
        assert!((two_design_average(want) - (2.0 * want + 1.0) / 3.0).abs() < 1e-15);
    }
}
