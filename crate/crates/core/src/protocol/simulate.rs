use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use super::prepare::{prepare, storage_pair};
use super::readout::{bright_probability, s_truth, to_rf_frame, ReadoutModel};
use super::streams::{stream, Purpose};
use super::{Herald, HeraldOrigin, ReadoutBasis, RunOutcome, Variant};
use crate::atom::{all_sublevels, LevelScheme, Manifold, N_LEVELS};
use crate::config::Config;
use crate::dynamics::{
    conditional_state_after_jump, AtomState, DetectedMode, DriveField, Engine, RunOptions,
};
use crate::error::Result;
use crate::polarization::{collection_projection, decompose_drive, Polarization};

/// Everything needed to execute runs for one variant and input polarization.
#[derive(Debug, Clone)]
pub struct Simulator {
    variant: Variant,
    config: Config,
    scheme: LevelScheme,
    drive: DriveField,
    engine: Engine,
    readout: ReadoutModel,
    /// Detection probability of an S₁/₂-bound photon per q = −1, 0, +1.
    detect: [f64; 3],
    /// Chance that a detected photon of channel q arrived in the ẑ mode.
    parallel_share: [f64; 3],
    modes: [DetectedMode; 2],
    dark_rate_per_us: f64,
}

impl Simulator {
    pub fn new(config: &Config, variant: Variant, input: &Polarization) -> Result<Self> {
        config.validate()?;
        let scheme = config.scheme();
        let drive = DriveField {
            rabi_peak: 2.0 * PI * config.drive.rabi_mhz,
            detuning: 2.0 * PI * config.drive.detuning_mhz,
            decomposition: decompose_drive(input)?,
            window: (0.0, config.sequence.absorb_window_us),
        };
        let engine = Engine::new(&scheme, &drive, config.drive.dt_max_us, config.drive.settle_us)?;

        let polarizer = config.polarizer(variant);
        let eta = config.chain.efficiency() * config.chain.efficiency_reference.pattern_factor();
        let mut detect = [0.0; 3];
        let mut parallel_share = [0.0; 3];
        let mut parallel = [num_complex::Complex64::new(0.0, 0.0); 3];
        let mut perpendicular = parallel;
        for (k, q) in (-1..=1).enumerate() {
            let w = collection_projection(q, polarizer)?;
            let total = w.parallel.norm_sqr() + w.perpendicular.norm_sqr();
            detect[k] = total * eta;
            parallel_share[k] = if total > 0.0 { w.parallel.norm_sqr() / total } else { 0.0 };
            parallel[k] = w.parallel;
            perpendicular[k] = w.perpendicular;
        }
        Ok(Self {
            variant,
            config: config.clone(),
            scheme,
            drive,
            engine,
            readout: ReadoutModel::from_sequence(&config.sequence),
            detect,
            parallel_share,
            modes: [
                DetectedMode { weights: parallel },
                DetectedMode {
                    weights: perpendicular,
                },
            ],
            dark_rate_per_us: config.chain.dark_rate_hz * 1e-6,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn readout_model(&self) -> &ReadoutModel {
        &self.readout
    }

    /// Detection probability of a 393 nm photon emitted on channel q.
    pub fn detection_probability(&self, q: i32) -> f64 {
        self.detect[(q + 1) as usize]
    }

    fn window(&self) -> f64 {
        self.drive.window.1
    }

    /// Executes one cycle. All randomness comes from the run's own streams.
    pub fn run_once(
        &self,
        run_id: u64,
        polarization: usize,
        basis: ReadoutBasis,
        master_seed: u64,
    ) -> Result<RunOutcome> {
        let mut det_rng = stream(master_seed, run_id, Purpose::Detection);
        let mut dark_rng = stream(master_seed, run_id, Purpose::Dark);
        let u_first: f64 = det_rng.random();
        let t_dark = if self.dark_rate_per_us > 0.0 {
            Exp::new(self.dark_rate_per_us).expect("positive rate").sample(&mut dark_rng)
        } else {
            f64::INFINITY
        };
        let mut outcome = RunOutcome {
            run_id,
            variant: self.variant,
            polarization,
            herald: None,
            basis,
            readout_bit: None,
            truth: None,
        };
        // At most one photon per run reaches S₁/₂, since S₁/₂ is never driven.
        // If its detection draw fails for every channel and no dark count
        // falls in the window, the run cannot be heralded and the dynamics
        // need not be computed.
        let p_max = self.detect.iter().copied().fold(0.0, f64::max);
        if u_first >= p_max && t_dark > self.window() {
            return Ok(outcome);
        }

        let mut prep_rng = stream(master_seed, run_id, Purpose::Preparation);
        let prepared = prepare(self.variant, &self.config.sequence, &mut prep_rng);
        let noise = &self.config.noise;
        let delta_b = if noise.b_field_sigma_g > 0.0 {
            noise.b_field_sigma_g * prep_rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let jitter = if noise.drive_amplitude_jitter > 0.0 {
            noise.drive_amplitude_jitter * prep_rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };

        let mut initial = prepared.state;
        let offsets = (delta_b != 0.0).then(|| self.field_offsets(delta_b));
        if let Some(off) = &offsets {
            let dwell = self.config.sequence.shelved_dwell_us();
            for i in Manifold::D52.indices() {
                initial.amplitudes[i] *= num_complex::Complex64::from_polar(1.0, -off[i] * dwell);
            }
        }

        let jittered;
        let engine = if jitter != 0.0 {
            let drive = DriveField {
                rabi_peak: (self.drive.rabi_peak * (1.0 + jitter)).max(0.0),
                ..self.drive
            };
            jittered = Engine::new(
                &self.scheme,
                &drive,
                self.config.drive.dt_max_us,
                self.config.drive.settle_us,
            )?;
            &jittered
        } else {
            &self.engine
        };

        let mut dyn_rng = stream(master_seed, run_id, Purpose::Dynamics);
        let mut first_draw = Some(u_first);
        let mut t_photon: Option<f64> = None;
        let window = self.window();
        let channels = engine.channels();
        let opts = RunOptions {
            energy_offsets: offsets,
            sample_times: &[],
        };
        let out = engine.run(&initial, &mut dyn_rng, &opts, |record, pre| {
            if record.destination != Manifold::S12 || record.t_jump > window {
                return None;
            }
            let u = first_draw.take().unwrap_or_else(|| det_rng.random());
            let k = (record.q + 1) as usize;
            if u >= self.detect[k] {
                return None;
            }
            let mode = if det_rng.random::<f64>() < self.parallel_share[k] {
                &self.modes[0]
            } else {
                &self.modes[1]
            };
            t_photon.get_or_insert(record.t_jump);
            let pre_state = AtomState::from_amplitudes(*pre);
            conditional_state_after_jump(record, &pre_state, mode, channels).map(|s| s.amplitudes)
        })?;

        let t_herald = t_photon.unwrap_or(f64::INFINITY).min(t_dark);
        if t_herald > window {
            return Ok(outcome);
        }
        let origin = if t_photon.is_some_and(|t| t <= t_dark) {
            HeraldOrigin::Photon
        } else {
            HeraldOrigin::DarkCount
        };
        outcome.herald = Some(Herald {
            t_detect_ns: (t_herald * 1e3).floor() as u32,
            origin,
        });

        let rf = to_rf_frame(&out.final_state, &self.scheme, engine.end_time())?;
        let p_bright = bright_probability(&rf, basis, storage_pair(self.variant).1)?;
        let mut ro_rng = stream(master_seed, run_id, Purpose::Readout);
        let bright = ro_rng.random::<f64>() < p_bright;
        outcome.readout_bit = Some(self.readout.detect(bright, &mut ro_rng).0);
        outcome.truth = Some(s_truth(&rf));
        Ok(outcome)
    }

    /// Zeeman energy offsets (rad/μs) produced by a field error δB.
    fn field_offsets(&self, delta_b: f64) -> [f64; N_LEVELS] {
        let unit = self.scheme.constants.larmor_unit(delta_b);
        let mut off = [0.0; N_LEVELS];
        for level in all_sublevels() {
            if let Some(g) = self.scheme.g_factor(level.manifold) {
                off[level.index()] = g * level.m() * unit;
            }
        }
        off
    }
}
