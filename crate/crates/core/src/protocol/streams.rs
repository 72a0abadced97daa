//! Independent random streams per run and purpose.
//!
//! Every run owns one ChaCha8 keystream per purpose, selected by the stream
//! number `run_id · PURPOSES + purpose` under the master-seed key. Streams never
//! overlap, so the draws of one purpose cannot shift those of another, and a
//! run's randomness does not depend on which worker executes it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Quantum-jump thresholds and channel choices.
    Dynamics = 0,
    /// Whether an emitted photon reaches the detector.
    Detection = 1,
    Dark = 2,
    /// Optical pumping, pulse errors, field offset and drive jitter.
    Preparation = 3,
    Readout = 4,
}

const PURPOSES: u64 = 8;

pub fn stream(master_seed: u64, run_id: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_id.wrapping_mul(PURPOSES).wrapping_add(purpose as u64));
    rng
}
