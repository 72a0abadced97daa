use num_complex::Complex64;
use rand::Rng;

use super::{SequenceConfig, Variant};
use crate::atom::Sublevel;
use crate::dynamics::{AtomState, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedState {
    pub state: AtomState,
    /// Optical pumping left the ion in |S, +1/2⟩.
    pub pump_error: bool,
    pub pulse_errors: u32,
}

/// Target sublevels of |S, −1/2⟩ and |S, +1/2⟩ after shelving.
pub fn storage_pair(variant: Variant) -> (Sublevel, Sublevel) {
    match variant {
        Variant::A => (Sublevel::d(-3), Sublevel::d(3)),
        Variant::B => (Sublevel::d(-5), Sublevel::d(5)),
    }
}

/// Optical pumping, RF π/2 and the two shelving pulses. The qubit is tracked
/// as amplitudes on (|−1/2⟩, |+1/2⟩) and finally copied onto the storage pair.
pub fn prepare<R: Rng + ?Sized>(variant: Variant, config: &SequenceConfig, rng: &mut R) -> PreparedState {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let pump_error = rng.random::<f64>() >= config.pump_fidelity;
    let mut q = if pump_error { [zero, one] } else { [one, zero] };

    let e = Complex64::from_polar(1.0, config.rf_phase_rad);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    q = [(q[0] - e.conj() * q[1]) * s, (e * q[0] + q[1]) * s];

    let mut pulse_errors = 0;
    for _ in 0..3 {
        if config.pulse_error > 0.0 && rng.random::<f64>() < config.pulse_error {
            pulse_errors += 1;
            q = match rng.random_range(0..3) {
                0 => [q[1], q[0]],
                1 => [-Complex64::i() * q[1], Complex64::i() * q[0]],
                _ => [q[0], -q[1]],
            };
        }
    }

    let (lo, hi) = storage_pair(variant);
    let mut amplitudes = StateVector::zeros();
    amplitudes[lo.index()] = q[0];
    amplitudes[hi.index()] = q[1];
    PreparedState {
        state: AtomState::from_amplitudes(amplitudes),
        pump_error,
        pulse_errors,
    }
}
