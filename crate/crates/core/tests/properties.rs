use std::f64::consts::PI;
use std::sync::OnceLock;

use herald_core::analysis::{
    analyze, build_histograms, density_from_bloch, fit_phase_events, pauli, process_tomography, reduced_phase,
    AnalysisOptions, BasisFilter, Estimate, PhaseEvent, TomographyInput,
};
use herald_core::config::Config;
use herald_core::eventlog::EventLog;
use herald_core::protocol::{run_campaign, CampaignSpec};
use nalgebra::Matrix2;
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn small_log() -> &'static EventLog {
    static LOG: OnceLock<EventLog> = OnceLock::new();
    LOG.get_or_init(|| {
        let mut config = Config::default();
        config.campaign.runs = 30_000;
        config.campaign.seed = 8;
        let spec = CampaignSpec::from_config(&config).unwrap();
        run_campaign(&spec, &config, None).unwrap()
    })
}

fn bloch(rho: &Matrix2<C>) -> [f64; 3] {
    std::array::from_fn(|i| (pauli(i + 1) * rho).trace().re)
}

/// A unital-plus-shift qubit channel: r → M r + t with M a scaled rotation.
fn affine_channel(angle: f64, shrink: f64, shift: f64) -> impl Fn([f64; 3]) -> [f64; 3] {
    move |r| {
        let (s, c) = angle.sin_cos();
        let x = shrink * (c * r[0] - s * r[1]);
        let y = shrink * (s * r[0] + c * r[1]);
        let z = shrink * r[2] + shift;
        [x, y, z]
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histograms_partition_the_heralds(pol in 0usize..6, window in 0u32..3000) {
        let log = small_log();
        let any = build_histograms(log, pol, BasisFilter::Any);
        let z = build_histograms(log, pol, BasisFilter::Z);
        let x = build_histograms(log, pol, BasisFilter::Superposition);
        let heralds = log.heralds.iter().filter(|e| e.polarization == pol).count() as u64;
        prop_assert_eq!(any.total(), heralds);
        prop_assert_eq!(z.total() + x.total(), any.total());
        let (ap, am) = any.counts_within(window);
        let (zp, zm) = z.counts_within(window);
        let (xp, xm) = x.counts_within(window);
        prop_assert_eq!(ap, zp + xp);
        prop_assert_eq!(am, zm + xm);
        let within = log
            .heralds
            .iter()
            .filter(|e| e.polarization == pol && e.t_detect_ns <= window)
            .count() as u64;
        prop_assert_eq!(ap + am, within);
        let unc = any.unconditional();
        for (i, u) in unc.iter().enumerate() {
            prop_assert_eq!(*u, any.counts_plus[i] + any.counts_minus[i]);
        }
    }

    #[test]
    fn fitted_fidelities_stay_in_range(
        v in 0.0f64..1.0,
        phi in -PI..PI,
        mean in 0.3f64..0.7,
        n in 200usize..3000,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let events: Vec<PhaseEvent> = (0..n)
            .map(|_| {
                let theta = rng.random::<f64>() * 2.0 * PI;
                let p = (mean + 0.5 * v * (theta - phi).sin()).clamp(0.0, 1.0);
                PhaseEvent { theta, plus: rng.random::<f64>() < p }
            })
            .collect();
        let fit = fit_phase_events(&events, 16, 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&fit.visibility));
        prop_assert!((0.5..=1.0).contains(&fit.fidelity()));
        prop_assert!(fit.visibility_stderr >= 0.0);
        prop_assert!((0.0..2.0 * PI).contains(&fit.phase_offset));
    }

    #[test]
    fn binomial_estimates_are_probabilities(k in 0u64..1000, extra in 0u64..1000) {
        let e = Estimate::binomial(k, k + extra + 1).unwrap();
        prop_assert!((0.0..=1.0).contains(&e.value));
        prop_assert!(e.stderr >= 0.0);
    }

    #[test]
    fn reduced_phase_is_wrapped(t in 0.0f64..5000.0, period in 1.0f64..500.0) {
        let p = reduced_phase(t, period).unwrap();
        prop_assert!((0.0..2.0 * PI).contains(&p));
    }

    #[test]
    fn chi_does_not_depend_on_input_order(
        angle in -PI..PI,
        shrink in 0.5f64..1.0,
        shift in -0.2f64..0.2,
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let channel = affine_channel(angle, shrink, shift * (1.0 - shrink));
        let inputs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
        let data: Vec<TomographyInput> = inputs
            .iter()
            .map(|&r| TomographyInput { input: r, output: channel(r) })
            .collect();
        let shuffled: Vec<TomographyInput> = perm.iter().map(|&i| data[i]).collect();
        let a = process_tomography(&data).unwrap();
        let b = process_tomography(&shuffled).unwrap();
        prop_assert!((a.chi - b.chi).norm() < 1e-12);
        prop_assert!(a.hermiticity_error() < 1e-12);
        prop_assert!((a.trace().re - 1.0).abs() < 1e-12);
        // Reconstructed χ reproduces every tomography output.
        for d in &data {
            let out = herald_core::analysis::apply_chi(&a.chi, &density_from_bloch(d.input));
            let r = bloch(&out);
            for k in 0..3 {
                prop_assert!((r[k] - d.output[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn analysis_is_deterministic() {
    let log = small_log();
    let mut opts = AnalysisOptions::from_config(&log.header.config);
    opts.tradeoff_windows_ns = vec![200, 450, 1000];
    let a = serde_json::to_string(&analyze(log, &opts).unwrap()).unwrap();
    let b = serde_json::to_string(&analyze(log, &opts).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn event_log_round_trips_through_text() {
    let mut config = Config::default();
    config.campaign.runs = 5_000;
    let spec = CampaignSpec::from_config(&config).unwrap();
    let mut buf = Vec::new();
    let log = run_campaign(&spec, &config, Some(&mut buf)).unwrap();
    let back = EventLog::read(buf.as_slice()).unwrap();
    assert_eq!(back.heralds, log.heralds);
    assert_eq!(back.runs_per_polarization, log.runs_per_polarization);
    assert_eq!(back.header, log.header);
}
