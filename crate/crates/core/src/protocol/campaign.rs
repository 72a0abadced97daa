use std::io::Write;

use rayon::prelude::*;

use super::{InputPolarization, ReadoutBasis, RunOutcome, Simulator, Variant};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::eventlog::{EventLog, LogHeader, LogWriter};

/// Runs are executed and written in blocks of this many.
const CHUNK: u64 = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub variant: Variant,
    pub polarizations: Vec<InputPolarization>,
    pub n_runs: u64,
    pub master_seed: u64,
    /// Z is always scheduled first, then one superposition basis per phase.
    pub rf_phases: Vec<f64>,
}

impl CampaignSpec {
    pub fn from_config(config: &Config) -> Result<Self> {
        let c = &config.campaign;
        Ok(Self {
            variant: c.scheme,
            polarizations: c
                .polarizations
                .iter()
                .map(|p| InputPolarization::parse(p))
                .collect::<Result<_>>()?,
            n_runs: c.runs,
            master_seed: c.seed,
            rf_phases: c.rf_phases_rad.clone(),
        })
    }

    pub fn bases(&self) -> Vec<ReadoutBasis> {
        std::iter::once(ReadoutBasis::Z)
            .chain(
                self.rf_phases
                    .iter()
                    .map(|&rf_phase| ReadoutBasis::Superposition { rf_phase }),
            )
            .collect()
    }
}

/// Polarization index and read-out basis of a run: polarizations cycle
/// fastest, bases advance once per full polarization cycle.
pub fn schedule(run_id: u64, n_polarizations: usize, bases: &[ReadoutBasis]) -> (usize, ReadoutBasis) {
    let n = n_polarizations as u64;
    let pol = (run_id % n) as usize;
    let basis = bases[((run_id / n) % bases.len() as u64) as usize];
    (pol, basis)
}

/// Executes every run of the campaign and returns the log. When `sink` is
/// given, the full text log (every run, heralded or not) is written to it in
/// run order. The result does not depend on the number of worker threads.
pub fn run_campaign(
    spec: &CampaignSpec,
    config: &Config,
    mut sink: Option<&mut dyn Write>,
) -> Result<EventLog> {
    if spec.n_runs == 0 {
        return Err(Error::config("campaign.runs", "must be >= 1"));
    }
    if spec.polarizations.is_empty() {
        return Err(Error::config("campaign.polarizations", "must not be empty"));
    }
    let sims: Vec<Simulator> = spec
        .polarizations
        .iter()
        .map(|p| Simulator::new(config, spec.variant, &p.polarization))
        .collect::<Result<_>>()?;
    let bases = spec.bases();
    let header = LogHeader::new(spec, config);
    let mut log = EventLog::empty(header.clone());
    let mut writer = match sink.as_deref_mut() {
        Some(w) => Some(LogWriter::new(w, &header)?),
        None => None,
    };

    let mut start = 0;
    while start < spec.n_runs {
        let end = (start + CHUNK).min(spec.n_runs);
        let outcomes: Vec<RunOutcome> = (start..end)
            .into_par_iter()
            .map(|id| {
                let (pol, basis) = schedule(id, sims.len(), &bases);
                sims[pol].run_once(id, pol, basis, spec.master_seed)
            })
            .collect::<Result<_>>()?;
        for o in &outcomes {
            if let Some(w) = writer.as_mut() {
                w.write(o)?;
            }
            log.push(o);
        }
        start = end;
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkCalibration {
    pub dark_rate_hz: f64,
    /// Photon-heralding probability per run within the window, without dark counts.
    pub photon_herald_probability: f64,
    pub pilot_runs: u64,
}

/// Picks the detector dark-count rate for which the configured fraction of
/// heralds inside `window_ns` are dark counts, using a pilot campaign without
/// dark counts.
pub fn calibrate_dark_rate(
    config: &Config,
    spec: &CampaignSpec,
    window_ns: u32,
) -> Result<DarkCalibration> {
    let pilot = run_campaign(spec, &config.without_dark_counts(), None)?;
    let heralds = pilot
        .heralds
        .iter()
        .filter(|e| e.t_detect_ns <= window_ns)
        .count();
    if heralds == 0 {
        return Err(Error::analysis("pilot campaign produced no heralds"));
    }
    let p = heralds as f64 / spec.n_runs as f64;
    let f = config.noise.dark_count_fraction_target;
    let d = f * p / (1.0 - f);
    let window_us = f64::from(window_ns) * 1e-3;
    let rate_per_us = -(1.0 - d).ln() / window_us;
    Ok(DarkCalibration {
        dark_rate_hz: rate_per_us * 1e6,
        photon_herald_probability: p,
        pilot_runs: spec.n_runs,
    })
}
