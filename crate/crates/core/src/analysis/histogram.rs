use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::eventlog::{EventLog, HeraldedEvent};
use crate::protocol::{ReadoutBasis, ReadoutBit};

pub const BIN_WIDTH_NS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFilter {
    Any,
    Z,
    Superposition,
}

impl BasisFilter {
    pub fn accepts(self, basis: &ReadoutBasis) -> bool {
        matches!(
            (self, basis),
            (BasisFilter::Any, _)
                | (BasisFilter::Z, ReadoutBasis::Z)
                | (BasisFilter::Superposition, ReadoutBasis::Superposition { .. })
        )
    }
}

/// Heralded events of one polarization and basis class.
pub fn select(log: &EventLog, polarization: usize, basis: BasisFilter) -> impl Iterator<Item = &HeraldedEvent> {
    log.heralds
        .iter()
        .filter(move |e| e.polarization == polarization && basis.accepts(&e.basis))
}

/// Arrival-time histograms split by read-out outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalHistogram {
    pub bin_width_ns: u32,
    /// Outcome |+1/2⟩ (dark).
    pub counts_plus: Vec<u64>,
    /// Outcome |−1/2⟩ (bright).
    pub counts_minus: Vec<u64>,
    /// Number of runs behind the histogram, for normalization.
    pub runs: u64,
}

impl ConditionalHistogram {
    pub fn unconditional(&self) -> Vec<u64> {
        self.counts_plus
            .iter()
            .zip(&self.counts_minus)
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn bin_start_ns(&self, bin: usize) -> u32 {
        bin as u32 * self.bin_width_ns
    }

    pub fn total(&self) -> u64 {
        self.counts_plus.iter().sum::<u64>() + self.counts_minus.iter().sum::<u64>()
    }

    /// (minus, plus) counts with t_detect < window_ns.
    pub fn counts_within(&self, window_ns: u32) -> (u64, u64) {
        let bins = (window_ns.div_ceil(self.bin_width_ns) as usize).min(self.counts_plus.len());
        (
            self.counts_minus[..bins].iter().sum(),
            self.counts_plus[..bins].iter().sum(),
        )
    }
}

/// 2 ns binning of the selected heralds over the absorb window.
pub fn build_histograms(log: &EventLog, polarization: usize, basis: BasisFilter) -> ConditionalHistogram {
    let window_ns = (log.header.config.sequence.absorb_window_us * 1e3).round() as u32;
    let n_bins = (window_ns / BIN_WIDTH_NS + 1) as usize;
    let mut h = ConditionalHistogram {
        bin_width_ns: BIN_WIDTH_NS,
        counts_plus: vec![0; n_bins],
        counts_minus: vec![0; n_bins],
        runs: log.runs_per_polarization.get(polarization).copied().unwrap_or(0),
    };
    for e in select(log, polarization, basis) {
        let bin = ((e.t_detect_ns / BIN_WIDTH_NS) as usize).min(n_bins - 1);
        match e.bit {
            ReadoutBit::Dark => h.counts_plus[bin] += 1,
            ReadoutBit::Bright => h.counts_minus[bin] += 1,
        }
    }
    h
}

/// A value with its one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn binomial(successes: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::analysis("no events in the selection"));
        }
        let p = successes as f64 / trials as f64;
        Ok(Self {
            value: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        })
    }
}

/// Fraction of Z-basis heralds (t_detect ≤ window) that read the `target`
/// state, with its binomial standard error.
pub fn state_fidelity_circular(log: &EventLog, polarization: usize, window_ns: u32, target: ReadoutBit) -> Result<Estimate> {
    let (mut good, mut all) = (0u64, 0u64);
    for e in select(log, polarization, BasisFilter::Z).filter(|e| e.t_detect_ns <= window_ns) {
        all += 1;
        if e.bit == target {
            good += 1;
        }
    }
    Estimate::binomial(good, all)
        .map_err(|_| Error::analysis(format!("no Z-basis heralds within {window_ns} ns")))
}

/// (2π·t/T) mod 2π.
pub fn reduced_phase(t_ns: f64, period_ns: f64) -> Result<f64> {
    if !(period_ns > 0.0) {
        return Err(Error::domain(format!("period must be positive, got {period_ns}")));
    }
    Ok((TAU * t_ns / period_ns).rem_euclid(TAU))
}

/// Heralding probability per run within the window, over the given polarizations.
pub fn herald_probability(log: &EventLog, polarizations: &[usize], window_ns: u32) -> Estimate {
    let runs: u64 = polarizations.iter().map(|&p| log.runs_per_polarization[p]).sum();
    let n = log
        .heralds
        .iter()
        .filter(|e| polarizations.contains(&e.polarization) && e.t_detect_ns <= window_ns)
        .count() as u64;
    Estimate::binomial(n, runs.max(1)).expect("non-zero trials")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn reduced_phase_examples() {
        assert_eq!(reduced_phase(0.0, 160.0).unwrap(), 0.0);
        assert_abs_diff_eq!(reduced_phase(160.0, 160.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(reduced_phase(40.0, 160.0).unwrap(), PI / 2.0, epsilon = 1e-12);
        assert!(reduced_phase(10.0, 0.0).is_err());
        assert!(reduced_phase(10.0, -1.0).is_err());
    }

    #[test]
    fn all_correct_is_unit_fidelity() {
        let e = Estimate::binomial(10, 10).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert!(Estimate::binomial(0, 0).is_err());
    }
}
