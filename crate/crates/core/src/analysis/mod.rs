//! Event-log analysis: arrival-time histograms, reduced-phase fringes, state
//! and process tomography, the window trade-off and wave-packet checks.
//!
//! Everything here reads only the measurement part of an [`EventLog`]
//! (`heralds` and the run counts), never the simulator diagnostics.

mod fringe;
mod histogram;
mod report;
mod tomography;
mod wavepacket;

pub use fringe::{fit_fringes, fit_period, fit_phase_events, phase_events, FringeFit, PeriodFit, PhaseBin, PhaseEvent};
pub use histogram::{
    build_histograms, herald_probability, reduced_phase, select, state_fidelity_circular, BasisFilter,
    ConditionalHistogram, Estimate, BIN_WIDTH_NS,
};
pub use report::{
    analyze, fringe_csv, histogram_csv, state_set, tradeoff_csv, tradeoff_curve, AnalysisOptions, AnalysisReport,
    FidelityMethod, PeriodResult, PhaseStep, StateResult, StateSet, TomographyResult, TradeoffPoint,
};
pub use tomography::{
    apply_chi, density_from_bloch, fit_frame_rotation, pauli, process_tomography, pure_state_fidelity, rotate_z,
    two_design_average, ChiMatrix, ChiSummary, TomographyInput,
};
pub use wavepacket::{wave_packet_shape_checks, WavePacketReport, WavePacketShape};
