use std::fmt::Write as _;

use serde::Serialize;

use super::fringe::{fit_fringes, fit_period, FringeFit, PeriodFit};
use super::histogram::{build_histograms, herald_probability, select, BasisFilter, Estimate};
use super::tomography::{
    fit_frame_rotation, process_tomography, rotate_z, two_design_average, ChiSummary, TomographyInput,
};
use super::wavepacket::{wave_packet_shape_checks, WavePacketReport};
use crate::atom::larmor_beat_period;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::polarization::NamedPolarization;
use crate::protocol::{InputPolarization, ReadoutBit, Variant};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisOptions {
    pub window_ns: u32,
    /// Fixed fringe period; fitted from the data when absent.
    pub period_ns: Option<f64>,
    pub phase_bins: usize,
    pub min_events_per_bin: u64,
    pub tradeoff_windows_ns: Vec<u32>,
}

impl AnalysisOptions {
    pub fn from_config(config: &Config) -> Self {
        Self {
            window_ns: config.campaign.window_ns,
            period_ns: None,
            phase_bins: config.campaign.fringe_bins,
            min_events_per_bin: config.campaign.min_events_per_bin,
            tradeoff_windows_ns: vec![50, 100, 150, 200, 300, 450, 600, 800, 1000, 1500, 2000, 3000],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityMethod {
    /// Fraction of Z-basis read-outs in the target state.
    CircularCounts,
    /// ½(1 + V) from the reduced-phase fringe.
    FringeVisibility,
    /// ½(1 + n·r) with the frame-aligned Bloch vector.
    BlochOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateResult {
    pub label: String,
    pub ideal_bloch: [f64; 3],
    /// Reconstructed Bloch vector in the aligned frame, when all three
    /// components could be estimated.
    pub bloch: Option<[f64; 3]>,
    pub bloch_stderr: Option<[f64; 3]>,
    pub fidelity: Option<Estimate>,
    pub method: FidelityMethod,
    pub z_events: u64,
    pub superposition_events: u64,
    pub fringe: Option<FringeFit>,
    /// Reason a fringe fit or Bloch estimate is missing.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseStep {
    pub from: String,
    pub to: String,
    /// φ₀(to) − φ₀(from), wrapped to (−π, π].
    pub delta_rad: f64,
    pub stderr_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TomographyResult {
    pub inputs: Vec<String>,
    pub chi: ChiSummary,
    pub process_fidelity: Estimate,
    /// Mean over the six cardinal states, when all were measured.
    pub average_state_fidelity: Option<Estimate>,
    /// (2·F_process + 1)/3.
    pub two_design_prediction: Estimate,
}

/// State estimates at one window length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSet {
    pub window_ns: u32,
    /// Rotation about z mapping ideal inputs onto measured outputs.
    pub frame_rotation_rad: Option<f64>,
    pub states: Vec<StateResult>,
    pub tomography: Option<TomographyResult>,
    pub tomography_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodResult {
    pub period_ns: f64,
    pub nominal_ns: f64,
    pub fitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub window_ns: u32,
    pub herald_probability: f64,
    pub process_fidelity: Option<f64>,
    pub average_state_fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub variant: Variant,
    pub total_runs: u64,
    pub window_ns: u32,
    pub heralding_probability: Estimate,
    pub larmor_period: PeriodResult,
    #[serde(skip)]
    pub period_scan: Option<PeriodFit>,
    pub states: StateSet,
    /// Fringe offsets between consecutive inputs in the order V, D, H, A.
    pub phase_steps: Vec<PhaseStep>,
    pub tradeoff: Vec<TradeoffPoint>,
    pub wave_packet: Option<WavePacketReport>,
    pub wave_packet_note: Option<String>,
}

fn named_index(log: &EventLog, name: NamedPolarization) -> Option<usize> {
    log.header
        .polarizations
        .iter()
        .position(|l| InputPolarization::parse(l).ok().and_then(|p| p.as_named()) == Some(name))
}

fn ideal_bloch(label: &str) -> Result<[f64; 3]> {
    Ok(InputPolarization::parse(label)?.polarization.stokes())
}

fn nominal_period_ns(log: &EventLog) -> Result<f64> {
    let scheme = log.header.config.scheme();
    Ok(larmor_beat_period(&scheme, log.header.variant.d_pair())? * 1e3)
}

fn is_linear(n: [f64; 3]) -> bool {
    n[2].abs() < 0.5
}

/// Per-state estimates, frame alignment and process tomography at one window.
pub fn state_set(log: &EventLog, window_ns: u32, period_ns: f64, opts: &AnalysisOptions) -> Result<StateSet> {
    struct Raw {
        z: Option<(f64, f64, u64, u64)>,
        xy: Option<([f64; 2], [f64; 2])>,
    }
    let labels = &log.header.polarizations;
    let mut states = Vec::with_capacity(labels.len());
    let mut raws = Vec::with_capacity(labels.len());
    for (p, label) in labels.iter().enumerate() {
        let ideal = ideal_bloch(label)?;
        let (mut bright, mut z_events) = (0u64, 0u64);
        for e in select(log, p, BasisFilter::Z).filter(|e| e.t_detect_ns <= window_ns) {
            z_events += 1;
            bright += u64::from(e.bit == ReadoutBit::Bright);
        }
        let superposition_events = select(log, p, BasisFilter::Superposition)
            .filter(|e| e.t_detect_ns <= window_ns)
            .count() as u64;
        let z = (z_events > 0).then(|| {
            let pb = bright as f64 / z_events as f64;
            (2.0 * pb - 1.0, 2.0 * (pb * (1.0 - pb) / z_events as f64).sqrt(), bright, z_events)
        });
        let (fringe, note) = if superposition_events == 0 {
            (None, Some("no superposition-basis heralds".to_string()))
        } else {
            match fit_fringes(log, p, window_ns, period_ns, opts.phase_bins, opts.min_events_per_bin) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        raws.push(Raw {
            z,
            xy: fringe.as_ref().map(FringeFit::bloch_xy),
        });
        states.push(StateResult {
            label: label.clone(),
            ideal_bloch: ideal,
            bloch: None,
            bloch_stderr: None,
            fidelity: None,
            method: FidelityMethod::BlochOverlap,
            z_events,
            superposition_events,
            fringe,
            note,
        });
    }

    let linear_pairs: Vec<TomographyInput> = states
        .iter()
        .zip(&raws)
        .filter(|(s, _)| is_linear(s.ideal_bloch))
        .filter_map(|(s, r)| {
            r.xy.map(|(xy, _)| TomographyInput {
                input: s.ideal_bloch,
                output: [xy[0], xy[1], 0.0],
            })
        })
        .collect();
    let frame_rotation_rad = (!linear_pairs.is_empty()).then(|| fit_frame_rotation(&linear_pairs));
    let align = frame_rotation_rad.unwrap_or(0.0);

    for (s, r) in states.iter_mut().zip(&raws) {
        if let (Some((z, zse, _, _)), Some((xy, xyse))) = (r.z, r.xy) {
            s.bloch = Some(rotate_z([xy[0], xy[1], z], -align));
            // The rotation mixes x and y; quote the larger error for both.
            let e = xyse[0].max(xyse[1]);
            s.bloch_stderr = Some([e, e, zse]);
        }
        let named = InputPolarization::parse(&s.label)?.as_named();
        match named {
            Some(n) if n.is_circular() => {
                s.method = FidelityMethod::CircularCounts;
                if let Some((_, _, bright, all)) = r.z {
                    let target_bright = s.ideal_bloch[2] > 0.0;
                    let good = if target_bright { bright } else { all - bright };
                    s.fidelity = Some(Estimate::binomial(good, all)?);
                }
            }
            Some(_) => {
                s.method = FidelityMethod::FringeVisibility;
                s.fidelity = s.fringe.as_ref().map(|f| Estimate {
                    value: f.fidelity(),
                    stderr: f.fidelity_stderr(),
                });
            }
            None => {
                s.fidelity = s.bloch.zip(s.bloch_stderr).map(|(b, e)| {
                    let n = s.ideal_bloch;
                    Estimate {
                        value: super::tomography::pure_state_fidelity(n, b),
                        stderr: 0.5 * (0..3).map(|i| (n[i] * e[i]).powi(2)).sum::<f64>().sqrt(),
                    }
                });
            }
        }
    }

    let (tomography, tomography_note) = match tomography(log, &states) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(StateSet {
        window_ns,
        frame_rotation_rad,
        states,
        tomography,
        tomography_note,
    })
}

/// χ from the H, V, D, R estimates; the average fidelity uses all six.
fn tomography(log: &EventLog, states: &[StateResult]) -> Result<TomographyResult> {
    use NamedPolarization::*;
    let chosen = [H, V, D, R];
    let mut inputs = Vec::new();
    let mut errors = Vec::new();
    for name in chosen {
        let idx = named_index(log, name)
            .ok_or_else(|| Error::analysis(format!("tomography needs input {name}, which is not in the log")))?;
        let s = &states[idx];
        let (b, e) = s.bloch.zip(s.bloch_stderr).ok_or_else(|| {
            Error::analysis(format!(
                "no Bloch vector for {name}: {}",
                s.note.as_deref().unwrap_or("missing Z-basis heralds")
            ))
        })?;
        inputs.push(TomographyInput {
            input: s.ideal_bloch,
            output: b,
        });
        errors.push(e);
    }
    let chi = process_tomography(&inputs)?;
    let f = chi.process_fidelity();

    // Linear error propagation by central differences in each output component.
    let mut var = 0.0;
    for k in 0..inputs.len() {
        for c in 0..3 {
            let h = 1e-6;
            let mut plus = inputs.clone();
            let mut minus = inputs.clone();
            plus[k].output[c] += h;
            minus[k].output[c] -= h;
            let d = (process_tomography(&plus)?.process_fidelity() - process_tomography(&minus)?.process_fidelity())
                / (2.0 * h);
            var += (d * errors[k][c]).powi(2);
        }
    }
    let process_fidelity = Estimate {
        value: f,
        stderr: var.sqrt(),
    };

    let six: Option<Vec<Estimate>> = NamedPolarization::ALL
        .iter()
        .map(|&n| named_index(log, n).and_then(|i| states[i].fidelity))
        .collect();
    let average_state_fidelity = six.map(|v| Estimate {
        value: v.iter().map(|e| e.value).sum::<f64>() / v.len() as f64,
        stderr: v.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / v.len() as f64,
    });
    Ok(TomographyResult {
        inputs: chosen.iter().map(ToString::to_string).collect(),
        chi: chi.summary(),
        two_design_prediction: Estimate {
            value: two_design_average(f),
            stderr: 2.0 / 3.0 * process_fidelity.stderr,
        },
        process_fidelity,
        average_state_fidelity,
    })
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

fn phase_steps(log: &EventLog, set: &StateSet) -> Vec<PhaseStep> {
    use NamedPolarization::*;
    let fits: Vec<Option<(&str, &FringeFit)>> = [V, D, H, A]
        .iter()
        .map(|&n| {
            named_index(log, n).and_then(|i| set.states[i].fringe.as_ref().map(|f| (set.states[i].label.as_str(), f)))
        })
        .collect();
    fits.windows(2)
        .filter_map(|w| {
            let ((la, fa), (lb, fb)) = (w[0]?, w[1]?);
            Some(PhaseStep {
                from: la.to_string(),
                to: lb.to_string(),
                delta_rad: wrap(fb.phase_offset - fa.phase_offset),
                stderr_rad: fa.phase_offset_stderr.hypot(fb.phase_offset_stderr),
            })
        })
        .collect()
}

/// Heralding probability and fidelities for each window length, with the
/// fringe period held fixed.
pub fn tradeoff_curve(log: &EventLog, windows_ns: &[u32], period_ns: f64, opts: &AnalysisOptions) -> Vec<TradeoffPoint> {
    let all: Vec<usize> = (0..log.header.polarizations.len()).collect();
    windows_ns
        .iter()
        .map(|&w| {
            let set = state_set(log, w, period_ns, opts).ok();
            let tomo = set.as_ref().and_then(|s| s.tomography.as_ref());
            TradeoffPoint {
                window_ns: w,
                herald_probability: herald_probability(log, &all, w).value,
                process_fidelity: tomo.map(|t| t.process_fidelity.value),
                average_state_fidelity: tomo.and_then(|t| t.average_state_fidelity.map(|e| e.value)),
            }
        })
        .collect()
}

/// Full analysis of a campaign log.
pub fn analyze(log: &EventLog, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    if log.total_runs() == 0 {
        return Err(Error::analysis("event log contains no runs"));
    }
    if log.heralds.is_empty() {
        return Err(Error::analysis("event log contains no heralded runs"));
    }
    let nominal_ns = nominal_period_ns(log)?;
    let linear: Vec<usize> = (0..log.header.polarizations.len())
        .filter(|&p| ideal_bloch(&log.header.polarizations[p]).is_ok_and(is_linear))
        .collect();
    let (larmor_period, period_scan) = match opts.period_ns {
        Some(t) => (
            PeriodResult {
                period_ns: t,
                nominal_ns,
                fitted: false,
            },
            None,
        ),
        None => match fit_period(log, &linear, opts.window_ns, (0.6 * nominal_ns, 1.6 * nominal_ns), nominal_ns / 640.0) {
            Ok(fit) => (
                PeriodResult {
                    period_ns: fit.period_ns,
                    nominal_ns,
                    fitted: true,
                },
                Some(fit),
            ),
            Err(_) => (
                PeriodResult {
                    period_ns: nominal_ns,
                    nominal_ns,
                    fitted: false,
                },
                None,
            ),
        },
    };
    let period = larmor_period.period_ns;
    let states = state_set(log, opts.window_ns, period, opts)?;
    let all: Vec<usize> = (0..log.header.polarizations.len()).collect();

    let circular = named_index(log, NamedPolarization::R).or_else(|| named_index(log, NamedPolarization::L));
    let lin = linear.first().copied();
    let (wave_packet, wave_packet_note) = match (circular, lin) {
        (Some(c), Some(l)) => match wave_packet_shape_checks(log, c, l) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        },
        _ => (None, Some("needs one circular and one linear input".to_string())),
    };
    Ok(AnalysisReport {
        variant: log.header.variant,
        total_runs: log.total_runs(),
        window_ns: opts.window_ns,
        heralding_probability: herald_probability(log, &all, opts.window_ns),
        phase_steps: phase_steps(log, &states),
        larmor_period,
        period_scan,
        states,
        tradeoff: tradeoff_curve(log, &opts.tradeoff_windows_ns, period, opts),
        wave_packet,
        wave_packet_note,
    })
}

/// label, basis, t_ns, counts_plus, counts_minus.
pub fn histogram_csv(log: &EventLog) -> String {
    let mut out = String::from("polarization,basis,t_ns,counts_plus,counts_minus\n");
    for (p, label) in log.header.polarizations.iter().enumerate() {
        for (basis, name) in [(BasisFilter::Z, "Z"), (BasisFilter::Superposition, "X")] {
            let h = build_histograms(log, p, basis);
            for (i, (a, b)) in h.counts_plus.iter().zip(&h.counts_minus).enumerate() {
                let _ = writeln!(out, "{label},{name},{},{a},{b}", h.bin_start_ns(i));
            }
        }
    }
    out
}

/// label, phase, events, plus, p_plus, model.
pub fn fringe_csv(set: &StateSet) -> String {
    let mut out = String::from("polarization,phase_rad,events,plus,p_plus,model\n");
    for s in &set.states {
        if let Some(f) = &s.fringe {
            for b in &f.bins {
                let model = f.mean + 0.5 * f.visibility_raw * (b.center - f.phase_offset).sin();
                let _ = writeln!(
                    out,
                    "{},{:.6},{},{},{:.6},{:.6}",
                    s.label,
                    b.center,
                    b.events,
                    b.plus,
                    b.probability_plus(),
                    model
                );
            }
        }
    }
    out
}

pub fn tradeoff_csv(points: &[TradeoffPoint]) -> String {
    let mut out = String::from("window_ns,herald_probability,process_fidelity,average_state_fidelity\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for p in points {
        let _ = writeln!(
            out,
            "{},{:.8},{},{}",
            p.window_ns,
            p.herald_probability,
            opt(p.process_fidelity),
            opt(p.average_state_fidelity)
        );
    }
    out
}
