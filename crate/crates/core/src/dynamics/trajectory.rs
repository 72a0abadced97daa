//! Monte Carlo wave-function trajectories with the norm-threshold jump rule.

use num_complex::Complex64;
use rand::Rng;

use super::{
    effective_hamiltonian, free_hamiltonian, jump_channels, AtomState, DriveField, JumpChannel,
    JumpRecord, Propagator, StateVector, MAX_GAMMA_DT,
};
use crate::atom::{LevelScheme, Manifold, Sublevel, N_LEVELS};
use crate::error::{Error, Result};

const COARSEST_STEP: f64 = 1.0;
const TIME_EPS: f64 = 1e-12;

/// Per-run settings that do not change the shared propagators.
#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// Additional diagonal energies (rad/μs), e.g. a quasi-static field error.
    /// Applied as a phase after every propagation step.
    pub energy_offsets: Option<[f64; N_LEVELS]>,
    /// Times at which populations are recorded.
    pub sample_times: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutput {
    pub final_state: AtomState,
    pub jumps: Vec<JumpRecord>,
    /// Normalized populations at each requested sample time.
    pub samples: Vec<[f64; N_LEVELS]>,
}

/// Shared, immutable trajectory machinery for one level scheme and drive.
#[derive(Debug, Clone)]
pub struct Engine {
    drive: DriveField,
    on: Propagator,
    off: Propagator,
    channels: Vec<JumpChannel>,
    end_time: f64,
}

impl Engine {
    /// `settle` extends the evolution past the end of the drive window so
    /// that P₃/₂ population can decay before read-out.
    pub fn new(scheme: &LevelScheme, drive: &DriveField, dt_max: f64, settle: f64) -> Result<Self> {
        scheme.validate()?;
        drive.validate()?;
        if !(dt_max > 0.0) {
            return Err(Error::config("dt_max", "must be positive"));
        }
        if scheme.linewidth_p32 * dt_max > MAX_GAMMA_DT {
            return Err(Error::config(
                "dt_max",
                format!(
                    "Γ·dt = {:.3} exceeds {MAX_GAMMA_DT}",
                    scheme.linewidth_p32 * dt_max
                ),
            ));
        }
        if settle < 0.0 {
            return Err(Error::config("settle", "must be >= 0"));
        }
        let coarsest = COARSEST_STEP.max(dt_max);
        Ok(Self {
            drive: *drive,
            on: Propagator::new(&effective_hamiltonian(scheme, drive), coarsest, dt_max),
            off: Propagator::new(&free_hamiltonian(scheme, drive.detuning), coarsest, dt_max),
            channels: jump_channels(scheme),
            end_time: drive.window.1 + settle,
        })
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    pub fn drive(&self) -> &DriveField {
        &self.drive
    }

    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    /// Jump-time resolution.
    pub fn resolution(&self) -> f64 {
        self.on.finest_step()
    }

    /// Propagates `initial` from t = 0 to the end time. `on_jump` sees every
    /// jump with the pre-jump (unnormalized) state and may return a
    /// replacement for the post-jump state.
    pub fn run<R, F>(
        &self,
        initial: &AtomState,
        rng: &mut R,
        opts: &RunOptions<'_>,
        mut on_jump: F,
    ) -> Result<TrajectoryOutput>
    where
        R: Rng + ?Sized,
        F: FnMut(&JumpRecord, &StateVector) -> Option<StateVector>,
    {
        if !initial.is_normalized() {
            return Err(Error::domain(format!(
                "initial state must be normalized, |ψ|² = {}",
                initial.norm_sqr()
            )));
        }
        let phases = opts
            .energy_offsets
            .map(|offsets| Phases::new(offsets, self.on.steps()));

        let mut breakpoints: Vec<(f64, Option<usize>)> = vec![
            (self.drive.window.0, None),
            (self.drive.window.1, None),
            (self.end_time, None),
        ];
        for (k, &t) in opts.sample_times.iter().enumerate() {
            breakpoints.push((t.clamp(0.0, self.end_time), Some(k)));
        }
        breakpoints.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut psi = initial.amplitudes;
        let mut t = 0.0;
        let mut threshold: f64 = rng.random();
        let mut jumps = Vec::new();
        let mut samples = vec![[0.0; N_LEVELS]; opts.sample_times.len()];
        let mut absorbed = false;

        for &(t_stop, sample) in &breakpoints {
            while !absorbed && t < t_stop - TIME_EPS {
                let prop = if self.drive.is_on(t) { &self.on } else { &self.off };
                let crossed = advance(prop, phases.as_ref(), &mut psi, &mut t, t_stop, threshold);
                if !crossed {
                    break;
                }
                let (record, mut post) = self.jump(&psi, t, rng);
                if let Some(replacement) = on_jump(&record, &psi) {
                    post = replacement;
                }
                absorbed = record.destination == Manifold::Sink;
                jumps.push(record);
                psi = post;
                threshold = rng.random();
            }
            t = t.max(t_stop);
            if let Some(k) = sample {
                let n = psi.norm_squared();
                samples[k] = std::array::from_fn(|i| psi[i].norm_sqr() / n);
            }
        }

        let mut final_state = AtomState {
            amplitudes: psi,
            time: self.end_time,
        };
        final_state.normalize();
        Ok(TrajectoryOutput {
            final_state,
            jumps,
            samples,
        })
    }

    fn jump<R: Rng + ?Sized>(&self, psi: &StateVector, t: f64, rng: &mut R) -> (JumpRecord, StateVector) {
        let weights: Vec<f64> = self.channels.iter().map(|c| c.weight(psi)).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        for (k, &w) in weights.iter().enumerate() {
            if w > 0.0 && u < w {
                pick = k;
                break;
            }
            u -= w;
        }
        let channel = &self.channels[pick];
        let &(from, to, _) = channel
            .transitions
            .iter()
            .max_by(|a, b| {
                (psi[a.0] * a.2)
                    .norm_sqr()
                    .total_cmp(&(psi[b.0] * b.2).norm_sqr())
            })
            .expect("channel has transitions");
        let mut post = channel.apply(psi);
        let n = post.norm();
        post /= Complex64::new(n, 0.0);
        let record = JumpRecord {
            t_jump: t,
            q: channel.q,
            upper: Sublevel::from_index(from).expect("index in range"),
            lower: Sublevel::from_index(to).expect("index in range"),
            destination: channel.destination,
        };
        (record, post)
    }
}

/// Diagonal phase factors for the per-run energy offsets, one per ladder level.
struct Phases {
    offsets: [f64; N_LEVELS],
    ladder: Vec<StateVector>,
}

impl Phases {
    fn new(offsets: [f64; N_LEVELS], steps: &[f64]) -> Self {
        let ladder = steps
            .iter()
            .map(|&h| StateVector::from_fn(|i, _| Complex64::from_polar(1.0, -offsets[i] * h)))
            .collect();
        Self { offsets, ladder }
    }
}

/// Evolves ψ from `t` toward `t_end`, stopping at the first finest-level
/// step after which ‖ψ‖² drops below `threshold`. Returns whether the
/// threshold was crossed.
fn advance(
    prop: &Propagator,
    phases: Option<&Phases>,
    psi: &mut StateVector,
    t: &mut f64,
    t_end: f64,
    threshold: f64,
) -> bool {
    let steps = prop.steps();
    let finest = steps.len() - 1;
    let mut level = 0;
    // Set once a step at some level has been seen to cross: the crossing
    // then lies inside the next step at the current level.
    let mut bracketed = false;
    loop {
        let h = steps[level];
        if *t + h > t_end + TIME_EPS {
            if level == finest {
                break;
            }
            level += 1;
            continue;
        }
        let mut candidate = *psi;
        prop.step(level, &mut candidate);
        let crossed = candidate.norm_squared() < threshold;
        if crossed && level < finest {
            bracketed = true;
            level += 1;
            continue;
        }
        if let Some(ph) = phases {
            for i in 0..N_LEVELS {
                candidate[i] *= ph.ladder[level][i];
            }
        }
        *psi = candidate;
        *t += h;
        if crossed {
            return true;
        }
        if bracketed && level < finest {
            level += 1;
        }
    }
    let rest = t_end - *t;
    if rest > TIME_EPS {
        prop.evolve_exact(rest, psi);
        if let Some(ph) = phases {
            for i in 0..N_LEVELS {
                psi[i] *= Complex64::from_polar(1.0, -ph.offsets[i] * rest);
            }
        }
        *t = t_end;
        return psi.norm_squared() < threshold;
    }
    *t = t.max(t_end);
    false
}

/// Single trajectory from t = 0 to the end of the drive window.
pub fn propagate_trajectory<R: Rng + ?Sized>(
    initial: &AtomState,
    scheme: &LevelScheme,
    drive: &DriveField,
    rng: &mut R,
    dt_max: f64,
) -> Result<(AtomState, Vec<JumpRecord>)> {
    let engine = Engine::new(scheme, drive, dt_max, 0.0)?;
    let out = engine.run(initial, rng, &RunOptions::default(), |_, _| None)?;
    Ok((out.final_state, out.jumps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::Branching;
    use crate::polarization::{decompose_drive, NamedPolarization, Polarization};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn drive(pol: NamedPolarization) -> DriveField {
        DriveField {
            rabi_peak: 2.0 * PI * 9.0,
            detuning: 0.0,
            decomposition: decompose_drive(&Polarization::named(pol)).unwrap(),
            window: (0.0, 3.0),
        }
    }

    #[test]
    fn no_decay_means_no_jumps() {
        let scheme = LevelScheme {
            linewidth_p32: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (state, jumps) = propagate_trajectory(
                &AtomState::basis(Sublevel::d(-3)),
                &scheme,
                &drive(NamedPolarization::R),
                &mut rng,
                1e-4,
            )
            .unwrap();
            assert!(jumps.is_empty());
            assert!((state.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_plus_first_s_jump_lands_on_lower_s_pair() {
        let scheme = LevelScheme::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let engine = Engine::new(&scheme, &drive(NamedPolarization::R), 3e-4, 0.0).unwrap();
        let mut seen = 0;
        for _ in 0..300 {
            let out = engine
                .run(&AtomState::basis(Sublevel::d(-3)), &mut rng, &RunOptions::default(), |_, _| None)
                .unwrap();
            if let Some(first) = out.jumps.first() {
                if first.destination == Manifold::S12 {
                    seen += 1;
                    assert_eq!(first.upper, Sublevel::p(-1));
                    match first.q {
                        0 => assert_eq!(first.lower, Sublevel::s(-1)),
                        -1 => assert_eq!(first.lower, Sublevel::s(1)),
                        q => panic!("unexpected channel {q}"),
                    }
                }
            }
        }
        assert!(seen > 200);
    }

    #[test]
    fn norm_never_increases_between_jumps() {
        let scheme = LevelScheme::default();
        let d = drive(NamedPolarization::D);
        let engine = Engine::new(&scheme, &d, 3e-4, 0.2).unwrap();
        let times: Vec<f64> = (1..=40).map(|k| k as f64 * 0.08).collect();
        let mut init = StateVector::zeros();
        init[Sublevel::d(-3).index()] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        init[Sublevel::d(3).index()] = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
        let init = AtomState::from_amplitudes(init);
        // With the threshold at 0 no jump ever fires, exposing the raw decay.
        struct Zero;
        impl rand::RngCore for Zero {
            fn next_u32(&mut self) -> u32 {
                0
            }
            fn next_u64(&mut self) -> u64 {
                0
            }
            fn fill_bytes(&mut self, dst: &mut [u8]) {
                dst.fill(0)
            }
        }
        let prop = Propagator::new(&effective_hamiltonian(&scheme, &d), 1.0, 3e-4);
        let mut psi = init.amplitudes;
        let mut last = 1.0;
        for _ in 0..2000 {
            prop.step(prop.steps().len() - 1, &mut psi);
            let n = psi.norm_squared();
            assert!(n <= last + 1e-12);
            last = n;
        }
        let out = engine
            .run(&init, &mut Zero, &RunOptions { sample_times: &times, ..Default::default() }, |_, _| None)
            .unwrap();
        assert!(out.jumps.is_empty());
        assert!((out.final_state.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dt_too_coarse_is_rejected() {
        let scheme = LevelScheme::default();
        assert!(Engine::new(&scheme, &drive(NamedPolarization::H), 1e-3, 0.0).is_err());
        let unnormalized = AtomState::from_amplitudes(StateVector::zeros());
        let engine = Engine::new(&scheme, &drive(NamedPolarization::H), 3e-4, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(engine
            .run(&unnormalized, &mut rng, &RunOptions::default(), |_, _| None)
            .is_err());
    }

    #[test]
    fn zero_probability_channels_are_never_sampled() {
        let scheme = LevelScheme {
            branching: Branching {
                to_s12: 0.94,
                to_d52: 0.0,
                to_sink: 0.06,
            },
            ..Default::default()
        };
        let engine = Engine::new(&scheme, &drive(NamedPolarization::H), 3e-4, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let out = engine
                .run(&AtomState::basis(Sublevel::d(-3)), &mut rng, &RunOptions::default(), |_, _| None)
                .unwrap();
            assert!(out.jumps.iter().all(|j| j.destination != Manifold::D52));
            // Every jump leaves from a populated P₃/₂ sublevel.
            assert!(out.jumps.iter().all(|j| j.upper.manifold == Manifold::P32));
        }
    }
}
