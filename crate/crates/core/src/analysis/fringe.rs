use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::histogram::{reduced_phase, select, BasisFilter};
use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::protocol::ReadoutBit;

/// Superposition-basis observation: analysis angle and whether the ion read
/// |+1/2⟩ (dark).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEvent {
    pub theta: f64,
    pub plus: bool,
}

/// Analysis angle of each superposition-basis herald: the reduced phase of
/// the detection time plus the RF pulse phase. Times are taken at the bin
/// centre of the 1 ns time tag.
pub fn phase_events(log: &EventLog, polarization: usize, window_ns: u32, period_ns: f64) -> Result<Vec<PhaseEvent>> {
    select(log, polarization, BasisFilter::Superposition)
        .filter(|e| e.t_detect_ns <= window_ns)
        .map(|e| {
            let phi = reduced_phase(f64::from(e.t_detect_ns) + 0.5, period_ns)?;
            Ok(PhaseEvent {
                theta: (phi + e.basis.rf_phase()).rem_euclid(TAU),
                plus: e.bit == ReadoutBit::Dark,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseBin {
    pub center: f64,
    pub events: u64,
    pub plus: u64,
}

impl PhaseBin {
    pub fn probability_plus(&self) -> f64 {
        if self.events == 0 {
            f64::NAN
        } else {
            self.plus as f64 / self.events as f64
        }
    }
}

/// p(φ) = mean + (V/2)·sin(φ − φ₀) fitted to P(+1/2) per phase bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeFit {
    /// Clamped to [0, 1].
    pub visibility: f64,
    pub visibility_raw: f64,
    pub visibility_stderr: f64,
    /// In [0, 2π).
    pub phase_offset: f64,
    pub phase_offset_stderr: f64,
    pub mean: f64,
    /// Covariance of (mean, a, b) with p = mean + a·sin φ + b·cos φ.
    pub covariance: [[f64; 3]; 3],
    pub chi2: f64,
    pub dof: usize,
    pub n_events: u64,
    pub bins: Vec<PhaseBin>,
}

impl FringeFit {
    pub fn fidelity(&self) -> f64 {
        0.5 * (1.0 + self.visibility)
    }

    pub fn fidelity_stderr(&self) -> f64 {
        0.5 * self.visibility_stderr
    }

    /// Equatorial Bloch components implied by the fit, (x, y) = V·(cos φ₀, sin φ₀),
    /// with their standard errors.
    pub fn bloch_xy(&self) -> ([f64; 2], [f64; 2]) {
        let (a, b) = self.sin_cos_coefficients();
        (
            [2.0 * a, -2.0 * b],
            [2.0 * self.covariance[1][1].sqrt(), 2.0 * self.covariance[2][2].sqrt()],
        )
    }

    fn sin_cos_coefficients(&self) -> (f64, f64) {
        let half = 0.5 * self.visibility_raw;
        (half * self.phase_offset.cos(), -half * self.phase_offset.sin())
    }
}

const REWEIGHT_ITERATIONS: usize = 4;

/// Binned, binomially weighted least-squares fringe fit. The sin/cos
/// regressors of a bin are the averages over its events, so the bin width
/// does not attenuate the fitted visibility.
pub fn fit_phase_events(events: &[PhaseEvent], n_bins: usize, min_events_per_bin: u64) -> Result<FringeFit> {
    if n_bins < 4 {
        return Err(Error::analysis(format!("need at least 4 phase bins, got {n_bins}")));
    }
    let width = TAU / n_bins as f64;
    let mut n = vec![0u64; n_bins];
    let mut k = vec![0u64; n_bins];
    let mut s = vec![0.0; n_bins];
    let mut c = vec![0.0; n_bins];
    for e in events {
        let b = ((e.theta / width) as usize).min(n_bins - 1);
        n[b] += 1;
        k[b] += u64::from(e.plus);
        s[b] += e.theta.sin();
        c[b] += e.theta.cos();
    }
    if let Some((b, &count)) = n.iter().enumerate().find(|(_, &count)| count < min_events_per_bin) {
        return Err(Error::analysis(format!(
            "phase bin {b} holds {count} events, fewer than the required {min_events_per_bin}"
        )));
    }
    let used: Vec<usize> = (0..n_bins).filter(|&b| n[b] > 0).collect();
    if used.len() < 4 {
        return Err(Error::analysis(format!(
            "only {} non-empty phase bins; fringe fit needs 4",
            used.len()
        )));
    }
    let rows: Vec<(Vector3<f64>, f64, f64)> = used
        .iter()
        .map(|&b| {
            let nb = n[b] as f64;
            (Vector3::new(1.0, s[b] / nb, c[b] / nb), k[b] as f64 / nb, nb)
        })
        .collect();

    let mut model: Vec<f64> = vec![0.5; rows.len()];
    let mut beta = Vector3::zeros();
    let mut cov = Matrix3::zeros();
    for _ in 0..REWEIGHT_ITERATIONS {
        let mut xtwx = Matrix3::zeros();
        let mut xtwy = Vector3::zeros();
        for ((x, y, nb), p) in rows.iter().zip(&model) {
            let w = nb / variance(*p, *nb);
            xtwx += x * x.transpose() * w;
            xtwy += x * (w * y);
        }
        cov = xtwx
            .try_inverse()
            .ok_or_else(|| Error::analysis("fringe design matrix is singular"))?;
        beta = cov * xtwy;
        for ((x, _, _), p) in rows.iter().zip(model.iter_mut()) {
            *p = x.dot(&beta);
        }
    }
    let chi2 = rows
        .iter()
        .zip(&model)
        .map(|((_, y, nb), p)| (y - p).powi(2) * nb / variance(*p, *nb))
        .sum();

    let (a, b) = (beta[1], beta[2]);
    let amp = a.hypot(b);
    let v_raw = 2.0 * amp;
    let (v_se, phi_se) = if amp > 0.0 {
        let (ga, gb) = (a / amp, b / amp);
        let var_amp = ga * ga * cov[(1, 1)] + gb * gb * cov[(2, 2)] + 2.0 * ga * gb * cov[(1, 2)];
        let (ha, hb) = (b / (amp * amp), -a / (amp * amp));
        let var_phi = ha * ha * cov[(1, 1)] + hb * hb * cov[(2, 2)] + 2.0 * ha * hb * cov[(1, 2)];
        (2.0 * var_amp.max(0.0).sqrt(), var_phi.max(0.0).sqrt())
    } else {
        (2.0 * cov[(1, 1)].max(cov[(2, 2)]).sqrt(), f64::INFINITY)
    };
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }
    Ok(FringeFit {
        visibility: v_raw.clamp(0.0, 1.0),
        visibility_raw: v_raw,
        visibility_stderr: v_se,
        phase_offset: (-b).atan2(a).rem_euclid(TAU),
        phase_offset_stderr: phi_se,
        mean: beta[0],
        covariance,
        chi2,
        dof: rows.len() - 3,
        n_events: n.iter().sum(),
        bins: (0..n_bins)
            .map(|i| PhaseBin {
                center: (i as f64 + 0.5) * width,
                events: n[i],
                plus: k[i],
            })
            .collect(),
    })
}

/// Binomial variance of a bin mean, floored so that bins at p = 0 or 1 keep
/// a finite weight.
fn variance(p: f64, n: f64) -> f64 {
    let floor = 1.0 / (n + 2.0);
    let p = p.clamp(floor, 1.0 - floor);
    p * (1.0 - p)
}

pub fn fit_fringes(
    log: &EventLog,
    polarization: usize,
    window_ns: u32,
    period_ns: f64,
    n_bins: usize,
    min_events_per_bin: u64,
) -> Result<FringeFit> {
    let events = phase_events(log, polarization, window_ns, period_ns)?;
    if events.is_empty() {
        return Err(Error::analysis(format!(
            "no superposition-basis heralds for polarization {} within {window_ns} ns",
            log.header.polarizations.get(polarization).map_or("?", String::as_str)
        )));
    }
    fit_phase_events(&events, n_bins, min_events_per_bin)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodFit {
    pub period_ns: f64,
    /// Residual sum of squares at the optimum, summed over polarizations.
    pub rss: f64,
    /// (period, residual sum of squares) on the coarse scan grid.
    pub scan: Vec<(f64, f64)>,
}

/// Finds the fringe period that minimizes the unbinned least-squares residual
/// of the sinusoid model, summed over the given polarizations.
pub fn fit_period(
    log: &EventLog,
    polarizations: &[usize],
    window_ns: u32,
    range_ns: (f64, f64),
    step_ns: f64,
) -> Result<PeriodFit> {
    let (lo, hi) = range_ns;
    if !(lo > 0.0 && hi > lo && step_ns > 0.0) {
        return Err(Error::domain(format!("bad period scan {lo}..{hi} step {step_ns}")));
    }
    let samples: Vec<Vec<(f64, f64, f64)>> = polarizations
        .iter()
        .map(|&p| {
            select(log, p, BasisFilter::Superposition)
                .filter(|e| e.t_detect_ns <= window_ns)
                .map(|e| {
                    (
                        f64::from(e.t_detect_ns) + 0.5,
                        e.basis.rf_phase(),
                        if e.bit == ReadoutBit::Dark { 1.0 } else { 0.0 },
                    )
                })
                .collect()
        })
        .collect();
    if samples.iter().map(Vec::len).sum::<usize>() < 8 {
        return Err(Error::analysis("too few superposition-basis heralds to fit the period"));
    }
    let rss_at = |period: f64| -> f64 { samples.iter().map(|ev| sinusoid_rss(ev, period)).sum() };

    let steps = ((hi - lo) / step_ns).floor() as usize;
    let scan: Vec<(f64, f64)> = (0..=steps)
        .map(|i| {
            let t = lo + i as f64 * step_ns;
            (t, rss_at(t))
        })
        .collect();
    let best = scan
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .expect("non-empty scan");

    // Golden-section refinement between the neighbouring grid points.
    let mut a = scan[best.saturating_sub(1)].0;
    let mut b = scan[(best + 1).min(scan.len() - 1)].0;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (rss_at(x1), rss_at(x2));
    while b - a > 1e-4 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = rss_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = rss_at(x2);
        }
    }
    let period_ns = 0.5 * (a + b);
    Ok(PeriodFit {
        period_ns,
        rss: rss_at(period_ns),
        scan,
    })
}

/// Residual of the unweighted fit y ≈ c + a·sin θ + b·cos θ.
fn sinusoid_rss(events: &[(f64, f64, f64)], period: f64) -> f64 {
    if events.is_empty() {
        return 0.0;
    }
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    let mut yy = 0.0;
    for &(t, rf, y) in events {
        let theta = TAU * t / period + rf;
        let x = Vector3::new(1.0, theta.sin(), theta.cos());
        xtx += x * x.transpose();
        xty += x * y;
        yy += y * y;
    }
    match xtx.try_inverse() {
        Some(inv) => yy - xty.dot(&(inv * xty)),
        None => yy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn synthetic(n: usize, v: f64, phi0: f64) -> Vec<PhaseEvent> {
        // Deterministic quasi-uniform phases with exact expected fractions.
        (0..n)
            .map(|i| {
                let theta = TAU * ((i as f64 * 0.618_033_988_749_895) % 1.0);
                let p = 0.5 + 0.5 * v * (theta - phi0).sin();
                let u = (i as f64 * 0.754_877_666_246_693) % 1.0;
                PhaseEvent { theta, plus: u < p }
            })
            .collect()
    }

    #[test]
    fn recovers_phase_offset() {
        let fit = fit_phase_events(&synthetic(20000, 0.8, 1.0), 16, 1).unwrap();
        assert_abs_diff_eq!(fit.visibility, 0.8, epsilon = 0.03);
        assert_abs_diff_eq!(fit.phase_offset, 1.0, epsilon = 0.03);
        assert!(fit.visibility_stderr > 0.0);
    }

    #[test]
    fn too_few_events_per_bin_is_refused() {
        let err = fit_phase_events(&synthetic(40, 0.8, 1.0), 16, 5).unwrap_err();
        assert!(err.to_string().contains("fewer than the required 5"), "{err}");
    }

    #[test]
    fn bloch_components_follow_offset() {
        let fit = fit_phase_events(&synthetic(20000, 1.0, 0.0), 16, 1).unwrap();
        let (xy, _) = fit.bloch_xy();
        assert_abs_diff_eq!(xy[0], 1.0, epsilon = 0.04);
        assert_abs_diff_eq!(xy[1], 0.0, epsilon = 0.04);
    }
}
