//! Driven, decaying 13-level dynamics: the non-Hermitian effective Hamiltonian,
//! the collapse channels out of P₃/₂, quantum-jump trajectories and the
//! density-matrix oracle used to validate them.

mod master;
mod propagator;
mod trajectory;

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use crate::atom::{
    all_sublevels, transition_amplitude, zeeman_shift, LevelScheme, Manifold, Sublevel, N_LEVELS,
};
use crate::error::{Error, Result};
use crate::polarization::DriveDecomposition;

pub use master::{master_equation_oracle, OracleSample};
pub use propagator::Propagator;
pub use trajectory::{propagate_trajectory, Engine, RunOptions, TrajectoryOutput};

pub type StateVector = SVector<Complex64, N_LEVELS>;
pub type Operator = SMatrix<Complex64, N_LEVELS, N_LEVELS>;

/// Largest allowed Γ·dt for the jump-time resolution.
pub const MAX_GAMMA_DT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct AtomState {
    pub amplitudes: StateVector,
    /// μs
    pub time: f64,
}

impl AtomState {
    pub fn basis(level: Sublevel) -> Self {
        let mut amplitudes = StateVector::zeros();
        amplitudes[level.index()] = Complex64::new(1.0, 0.0);
        Self {
            amplitudes,
            time: 0.0,
        }
    }

    pub fn from_amplitudes(amplitudes: StateVector) -> Self {
        Self {
            amplitudes,
            time: 0.0,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() < 1e-9
    }

    pub fn population(&self, level: Sublevel) -> f64 {
        self.amplitudes[level.index()].norm_sqr() / self.norm_sqr()
    }

    pub fn manifold_population(&self, manifold: Manifold) -> f64 {
        let n = self.norm_sqr();
        manifold
            .indices()
            .map(|i| self.amplitudes[i].norm_sqr())
            .sum::<f64>()
            / n
    }

    pub fn populations(&self) -> [f64; N_LEVELS] {
        let n = self.norm_sqr();
        std::array::from_fn(|i| self.amplitudes[i].norm_sqr() / n)
    }

    pub fn normalize(&mut self) {
        let n = self.amplitudes.norm();
        if n > 0.0 {
            self.amplitudes /= Complex64::new(n, 0.0);
        }
    }
}

/// Rectangular classical 854 nm drive on D₅/₂–P₃/₂.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveField {
    /// Ω in rad/μs.
    pub rabi_peak: f64,
    /// Laser minus zero-field line centre, rad/μs.
    pub detuning: f64,
    pub decomposition: DriveDecomposition,
    /// (t_on, t_off) in μs.
    pub window: (f64, f64),
}

impl DriveField {
    pub fn validate(&self) -> Result<()> {
        let (on, off) = self.window;
        if !(on < off) || on < 0.0 {
            return Err(Error::config("drive.window", "need 0 <= t_on < t_off"));
        }
        if !(self.rabi_peak >= 0.0 && self.rabi_peak.is_finite()) {
            return Err(Error::config("drive.rabi_mhz", "must be finite and >= 0"));
        }
        if !self.detuning.is_finite() {
            return Err(Error::config("drive.detuning_mhz", "must be finite"));
        }
        Ok(())
    }

    pub fn is_on(&self, t: f64) -> bool {
        t >= self.window.0 && t < self.window.1
    }
}

/// Non-Hermitian H_eff = H_Zeeman + H_drive − iΓ/2 Σ|P⟩⟨P| in the frame
/// rotating at the drive frequency (ħ = 1, rad/μs).
pub fn effective_hamiltonian(scheme: &LevelScheme, drive: &DriveField) -> Operator {
    let mut h = free_hamiltonian(scheme, drive.detuning);
    for upper in Manifold::P32.sublevels() {
        for lower in Manifold::D52.sublevels() {
            let q = (upper.two_m - lower.two_m) / 2;
            if !(-1..=1).contains(&q) {
                continue;
            }
            let cg = transition_amplitude(lower, upper, q).unwrap_or(0.0);
            let coupling = drive.decomposition.component(q) * (0.5 * drive.rabi_peak * cg);
            if coupling.norm() == 0.0 {
                continue;
            }
            h[(upper.index(), lower.index())] += coupling;
            h[(lower.index(), upper.index())] += coupling.conj();
        }
    }
    h
}

/// H_eff with the drive switched off. The detuning only shifts the P₃/₂
/// reference energy, which is unobservable without the drive.
pub fn free_hamiltonian(scheme: &LevelScheme, detuning: f64) -> Operator {
    let mut h = Operator::zeros();
    let half_gamma = 0.5 * scheme.linewidth_p32;
    for level in all_sublevels() {
        let i = level.index();
        h[(i, i)] = match level.manifold {
            Manifold::Sink => Complex64::new(0.0, 0.0),
            Manifold::P32 => Complex64::new(
                zeeman_shift(level, scheme).unwrap_or(0.0) - detuning,
                -half_gamma,
            ),
            _ => Complex64::new(zeeman_shift(level, scheme).unwrap_or(0.0), 0.0),
        };
    }
    h
}

/// One spontaneous-emission channel out of P₃/₂: a rank-1 spherical
/// component `q` into a given lower manifold (or the sink).
#[derive(Debug, Clone, PartialEq)]
pub struct JumpChannel {
    pub destination: Manifold,
    /// m_upper − m_lower; 0 for sink channels.
    pub q: i32,
    /// Γ·branching, rad/μs.
    pub rate: f64,
    /// (upper index, lower index, Clebsch–Gordan amplitude).
    pub transitions: Vec<(usize, usize, f64)>,
}

impl JumpChannel {
    /// L·ψ without the √rate prefactor.
    pub fn apply(&self, psi: &StateVector) -> StateVector {
        let mut out = StateVector::zeros();
        for &(from, to, amp) in &self.transitions {
            out[to] += psi[from] * amp;
        }
        out
    }

    /// rate·‖Lψ‖².
    pub fn weight(&self, psi: &StateVector) -> f64 {
        if self.rate == 0.0 {
            return 0.0;
        }
        self.rate * self.apply(psi).norm_squared()
    }
}

/// All collapse channels: S₁/₂ and D₅/₂ for q ∈ {−1, 0, +1}, then one sink
/// channel per P₃/₂ sublevel.
pub fn jump_channels(scheme: &LevelScheme) -> Vec<JumpChannel> {
    let gamma = scheme.linewidth_p32;
    let mut channels = Vec::new();
    for dest in [Manifold::S12, Manifold::D52] {
        for q in [-1, 0, 1] {
            let transitions = Manifold::P32
                .sublevels()
                .filter_map(|upper| {
                    let lower = Sublevel::new(dest, upper.two_m - 2 * q).ok()?;
                    let cg = transition_amplitude(lower, upper, q).ok()?;
                    (cg != 0.0).then_some((upper.index(), lower.index(), cg))
                })
                .collect();
            channels.push(JumpChannel {
                destination: dest,
                q,
                rate: gamma * scheme.branching.to(dest),
                transitions,
            });
        }
    }
    for upper in Manifold::P32.sublevels() {
        channels.push(JumpChannel {
            destination: Manifold::Sink,
            q: 0,
            rate: gamma * scheme.branching.to_sink,
            transitions: vec![(upper.index(), Sublevel::SINK.index(), 1.0)],
        });
    }
    channels
}

/// One quantum jump of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    pub t_jump: f64,
    pub q: i32,
    /// Dominant contributing P₃/₂ sublevel.
    pub upper: Sublevel,
    /// Dominant fed lower sublevel.
    pub lower: Sublevel,
    pub destination: Manifold,
}

/// Complex detector-mode weight for each emission component q ∈ {−1, 0, +1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedMode {
    pub weights: [Complex64; 3],
}

impl DetectedMode {
    pub fn weight(&self, q: i32) -> Complex64 {
        self.weights[(q + 1) as usize]
    }
}

/// State of the atom given that the 393 nm photon of `record` was detected in
/// `mode`: the renormalized coherent sum Σ_q w_q L_q ψ over the S₁/₂ channels.
/// Returns `None` when the jump fed D₅/₂ or the sink (no herald).
pub fn conditional_state_after_jump(
    record: &JumpRecord,
    pre_jump: &AtomState,
    mode: &DetectedMode,
    channels: &[JumpChannel],
) -> Option<AtomState> {
    if record.destination != Manifold::S12 {
        return None;
    }
    let mut out = StateVector::zeros();
    for ch in channels.iter().filter(|c| c.destination == Manifold::S12) {
        let w = mode.weight(ch.q);
        if w.norm() == 0.0 {
            continue;
        }
        out += ch.apply(&pre_jump.amplitudes) * w;
    }
    let norm = out.norm();
    if norm == 0.0 {
        return None;
    }
    out /= Complex64::new(norm, 0.0);
    Some(AtomState {
        amplitudes: out,
        time: record.t_jump,
    })
}
