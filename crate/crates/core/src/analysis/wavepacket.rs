use serde::Serialize;

use super::histogram::{build_histograms, BasisFilter, ConditionalHistogram};
use crate::error::{Error, Result};
use crate::eventlog::EventLog;

/// Bins averaged when locating the histogram peak.
const PEAK_SMOOTHING_BINS: usize = 5;
/// Trailing fraction of the window used to estimate the flat background.
const BACKGROUND_TAIL: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WavePacketShape {
    pub label: String,
    /// Time at which the background-subtracted cumulative count reaches 1 − 1/e.
    pub duration_ns: f64,
    /// Smoothed peak of the unconditional histogram, heralds per run per bin.
    pub peak_per_run: f64,
    pub peak_stderr: f64,
    pub peak_time_ns: f64,
    pub background_per_bin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WavePacketReport {
    pub circular: WavePacketShape,
    pub linear: WavePacketShape,
    pub duration_ratio: f64,
    /// Peak difference in units of its combined standard error.
    pub peak_difference_sigma: f64,
}

/// Compares the unconditional wave packets of a circular and a linear input
/// recorded at equal drive power.
pub fn wave_packet_shape_checks(log: &EventLog, circular: usize, linear: usize) -> Result<WavePacketReport> {
    let c = shape(log, circular)?;
    let l = shape(log, linear)?;
    let combined = c.peak_stderr.hypot(l.peak_stderr);
    Ok(WavePacketReport {
        duration_ratio: l.duration_ns / c.duration_ns,
        peak_difference_sigma: if combined > 0.0 {
            (c.peak_per_run - l.peak_per_run).abs() / combined
        } else {
            0.0
        },
        circular: c,
        linear: l,
    })
}

fn shape(log: &EventLog, polarization: usize) -> Result<WavePacketShape> {
    let label = log.header.polarizations[polarization].clone();
    let hist: ConditionalHistogram = build_histograms(log, polarization, BasisFilter::Any);
    let counts = hist.unconditional();
    let n = counts.len();
    if hist.total() == 0 || hist.runs == 0 {
        return Err(Error::analysis(format!("no heralds for polarization {label}")));
    }
    let tail = ((n as f64 * BACKGROUND_TAIL) as usize).max(1);
    let background = counts[n - tail..].iter().sum::<u64>() as f64 / tail as f64;

    let signal: Vec<f64> = counts.iter().map(|&c| c as f64 - background).collect();
    let total: f64 = signal[..n - tail].iter().sum();
    if total <= 0.0 {
        return Err(Error::analysis(format!("wave packet of {label} is indistinguishable from background")));
    }
    let width = f64::from(hist.bin_width_ns);
    let target = (1.0 - (-1.0f64).exp()) * total;
    let mut acc = 0.0;
    let mut duration_ns = (n - tail) as f64 * width;
    for (i, &s) in signal[..n - tail].iter().enumerate() {
        if acc + s >= target && s > 0.0 {
            duration_ns = (i as f64 + (target - acc) / s) * width;
            break;
        }
        acc += s;
    }

    let k = PEAK_SMOOTHING_BINS.min(n);
    let (mut best, mut best_i) = (0u64, 0usize);
    for i in 0..=n - k {
        let s: u64 = counts[i..i + k].iter().sum();
        if s > best {
            best = s;
            best_i = i;
        }
    }
    let runs = hist.runs as f64;
    Ok(WavePacketShape {
        label,
        duration_ns,
        peak_per_run: best as f64 / k as f64 / runs,
        peak_stderr: (best as f64).sqrt() / k as f64 / runs,
        peak_time_ns: (best_i as f64 + 0.5 * k as f64) * width,
        background_per_bin: background,
    })
}
