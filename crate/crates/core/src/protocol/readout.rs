//! RF analysis pulse, shelving and threshold fluorescence detection.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{ReadoutBasis, ReadoutBit, SequenceConfig, Truth};
use crate::atom::{zeeman_shift, LevelScheme, Manifold, Sublevel};
use crate::dynamics::AtomState;
use crate::error::{Error, Result};

const MAX_THRESHOLD: u32 = 20;
/// Largest P₃/₂ population tolerated at read-out.
const P_TOLERANCE: f64 = 1e-6;

/// P(N ≤ k) for N ~ Poisson(mean).
pub fn poisson_cdf(k: u32, mean: f64) -> f64 {
    let mut term = (-mean).exp();
    let mut sum = term;
    for i in 1..=k {
        term *= mean / f64::from(i);
        sum += term;
    }
    sum.min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    /// Counts ≥ threshold read as bright.
    pub threshold: u32,
    /// P(counts < threshold | bright).
    pub bright_error: f64,
    /// P(counts ≥ threshold | dark).
    pub dark_error: f64,
}

impl ThresholdChoice {
    fn at(threshold: u32, bright_mean: f64, dark_mean: f64) -> Self {
        Self {
            threshold,
            bright_error: poisson_cdf(threshold - 1, bright_mean),
            dark_error: 1.0 - poisson_cdf(threshold - 1, dark_mean),
        }
    }

    pub fn mean_error(&self) -> f64 {
        0.5 * (self.bright_error + self.dark_error)
    }

    pub fn fidelity(&self) -> f64 {
        1.0 - self.mean_error()
    }
}

/// Error-minimizing threshold over 1..=20 for equal priors.
pub fn optimal_threshold(bright_mean: f64, dark_mean: f64) -> ThresholdChoice {
    (1..=MAX_THRESHOLD)
        .map(|t| ThresholdChoice::at(t, bright_mean, dark_mean))
        .min_by(|a, b| a.mean_error().total_cmp(&b.mean_error()))
        .expect("non-empty scan")
}

/// Fluorescence statistics of one detection interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutModel {
    pub bright_mean: f64,
    pub dark_mean: f64,
    pub choice: ThresholdChoice,
}

impl ReadoutModel {
    pub fn from_sequence(seq: &SequenceConfig) -> Self {
        let bright_mean = seq.bright_rate_hz * seq.readout_duration_us * 1e-6;
        let dark_mean = seq.background_rate_hz * seq.readout_duration_us * 1e-6;
        let choice = match seq.readout_threshold {
            Some(t) => ThresholdChoice::at(t.max(1), bright_mean, dark_mean),
            None => optimal_threshold(bright_mean, dark_mean),
        };
        Self {
            bright_mean,
            dark_mean,
            choice,
        }
    }

    pub fn detect<R: Rng + ?Sized>(&self, bright: bool, rng: &mut R) -> (ReadoutBit, u32) {
        let mean = if bright { self.bright_mean } else { self.dark_mean };
        let counts = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(rng) as u32
        } else {
            0
        };
        let bit = if counts >= self.choice.threshold {
            ReadoutBit::Bright
        } else {
            ReadoutBit::Dark
        };
        (bit, counts)
    }
}

/// Removes the nominal Larmor precession of S₁/₂ accumulated up to `t`, i.e.
/// expresses the state in the frame of the RF oscillator.
pub fn to_rf_frame(state: &AtomState, scheme: &LevelScheme, t: f64) -> Result<AtomState> {
    let mut out = state.clone();
    for level in Manifold::S12.sublevels() {
        let e = zeeman_shift(level, scheme)?;
        out.amplitudes[level.index()] *= Complex64::from_polar(1.0, e * t);
    }
    Ok(out)
}

/// Bloch vector and population of the S₁/₂ part, |−1/2⟩ at z = +1.
pub fn s_truth(state: &AtomState) -> Truth {
    let c0 = state.amplitudes[Sublevel::s(-1).index()];
    let c1 = state.amplitudes[Sublevel::s(1).index()];
    let pop = c0.norm_sqr() + c1.norm_sqr();
    let n = state.norm_sqr();
    let bloch = if pop > 0.0 {
        let c = c0.conj() * c1;
        [2.0 * c.re / pop, 2.0 * c.im / pop, (c0.norm_sqr() - c1.norm_sqr()) / pop]
    } else {
        [0.0; 3]
    };
    Truth {
        bloch,
        s_population: pop / n,
    }
}

/// Probability that shelving leaves the ion fluorescing. `state` must already
/// be in the RF frame. The analysis pulse is exp(−iπ/4 (cos φ σx + sin φ σy))
/// on (|−1/2⟩, |+1/2⟩); |+1/2⟩ is then shelved by a π pulse to `shelf`. The
/// same pulse returns population already in `shelf` to S₁/₂, where it
/// fluoresces. Other D₅/₂ population reads dark and the repumped sink reads
/// bright.
pub fn bright_probability(state: &AtomState, basis: ReadoutBasis, shelf: Sublevel) -> Result<f64> {
    let n = state.norm_sqr();
    let p_pop = state.manifold_population(Manifold::P32);
    if p_pop > P_TOLERANCE {
        return Err(Error::Sequencing(format!(
            "read-out with {p_pop:.2e} population left in P3/2"
        )));
    }
    let c0 = state.amplitudes[Sublevel::s(-1).index()];
    let c1 = state.amplitudes[Sublevel::s(1).index()];
    let s_bright = match basis {
        ReadoutBasis::Z => c0.norm_sqr(),
        ReadoutBasis::Superposition { rf_phase } => {
            let amp = (c0 - Complex64::i() * Complex64::from_polar(1.0, -rf_phase) * c1)
                * std::f64::consts::FRAC_1_SQRT_2;
            amp.norm_sqr()
        }
    };
    let sink = state.amplitudes[Sublevel::SINK.index()].norm_sqr();
    let returned = if shelf.manifold == Manifold::D52 {
        state.amplitudes[shelf.index()].norm_sqr()
    } else {
        0.0
    };
    Ok(((s_bright + sink + returned) / n).clamp(0.0, 1.0))
}

/// Projective shelving followed by thresholded photon counting.
pub fn readout<R: Rng + ?Sized>(
    state: &AtomState,
    basis: ReadoutBasis,
    shelf: Sublevel,
    model: &ReadoutModel,
    rng: &mut R,
) -> Result<ReadoutBit> {
    let p = bright_probability(state, basis, shelf)?;
    let bright = rng.random::<f64>() < p;
    Ok(model.detect(bright, rng).0)
}
