//! Polarization algebra for the 854 nm drive and the dipole geometry of the
//! 393 nm herald.
//!
//! Frame: quantization axis ẑ (along B and along the 854 nm beam), collection
//! axis x̂. The H polarization lies in the x–z plane, i.e. along x̂ for a beam
//! travelling along ẑ; V is along ŷ.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NamedPolarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl NamedPolarization {
    pub const ALL: [NamedPolarization; 6] = [
        NamedPolarization::H,
        NamedPolarization::V,
        NamedPolarization::D,
        NamedPolarization::A,
        NamedPolarization::R,
        NamedPolarization::L,
    ];

    pub fn is_circular(self) -> bool {
        matches!(self, NamedPolarization::R | NamedPolarization::L)
    }
}

impl fmt::Display for NamedPolarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for NamedPolarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "H" => Ok(Self::H),
            "V" => Ok(Self::V),
            "D" => Ok(Self::D),
            "A" => Ok(Self::A),
            "R" => Ok(Self::R),
            "L" => Ok(Self::L),
            other => Err(Error::domain(format!("unknown polarization name {other:?}"))),
        }
    }
}

/// Normalized Jones vector (E_H, E_V).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polarization {
    jones: [Complex64; 2],
}

impl Polarization {
    pub fn from_jones(h: Complex64, v: Complex64) -> Result<Self> {
        let norm = h.norm_sqr() + v.norm_sqr();
        if (norm.sqrt() - 1.0).abs() > NORM_TOL {
            return Err(Error::domain(format!(
                "Jones vector must be normalized, |E| = {}",
                norm.sqrt()
            )));
        }
        Ok(Self { jones: [h, v] })
    }

    /// Normalizes an arbitrary nonzero Jones vector.
    pub fn normalized(h: Complex64, v: Complex64) -> Result<Self> {
        let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::domain("zero or non-finite Jones vector"));
        }
        Ok(Self {
            jones: [h / norm, v / norm],
        })
    }

    /// Linear polarization at `angle` from H toward V.
    pub fn linear(angle: f64) -> Self {
        Self {
            jones: [Complex64::new(angle.cos(), 0.0), Complex64::new(angle.sin(), 0.0)],
        }
    }

    pub fn named(name: NamedPolarization) -> Self {
        let s = FRAC_1_SQRT_2;
        match name {
            NamedPolarization::H => Self::linear(0.0),
            NamedPolarization::V => Self::linear(PI / 2.0),
            NamedPolarization::D => Self::linear(PI / 4.0),
            NamedPolarization::A => Self::linear(-PI / 4.0),
            // R drives σ⁺ for a beam along +ẑ.
            NamedPolarization::R => Self {
                jones: [Complex64::new(s, 0.0), Complex64::new(0.0, s)],
            },
            NamedPolarization::L => Self {
                jones: [Complex64::new(s, 0.0), Complex64::new(0.0, -s)],
            },
        }
    }

    pub fn jones(&self) -> [Complex64; 2] {
        self.jones
    }

    /// Normalized Stokes vector (S₁, S₂, S₃); S₃ = +1 for R.
    pub fn stokes(&self) -> [f64; 3] {
        let [h, v] = self.jones;
        let cross = h.conj() * v;
        [h.norm_sqr() - v.norm_sqr(), 2.0 * cross.re, 2.0 * cross.im]
    }

    /// Pure state with the given Stokes direction; global phase chosen so E_H is real.
    pub fn from_stokes(s: [f64; 3]) -> Result<Self> {
        let len = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        if !(len > 0.0) {
            return Err(Error::domain("Stokes vector has zero length"));
        }
        let [s1, s2, s3] = [s[0] / len, s[1] / len, s[2] / len];
        let h = ((1.0 + s1) / 2.0).max(0.0).sqrt();
        let v_mag = ((1.0 - s1) / 2.0).max(0.0).sqrt();
        let v = if v_mag > 0.0 {
            Complex64::from_polar(v_mag, s3.atan2(s2))
        } else {
            Complex64::new(0.0, 0.0)
        };
        Self::normalized(Complex64::new(h, 0.0), v)
    }

    /// Overlap |⟨other|self⟩|².
    pub fn overlap(&self, other: &Polarization) -> f64 {
        let [a, b] = self.jones;
        let [c, d] = other.jones;
        (c.conj() * a + d.conj() * b).norm_sqr()
    }
}

/// Spherical components of the drive field for a beam along the quantization axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveDecomposition {
    pub a_plus: Complex64,
    pub a_minus: Complex64,
    pub a_pi: Complex64,
}

impl DriveDecomposition {
    pub fn component(&self, q: i32) -> Complex64 {
        match q {
            1 => self.a_plus,
            -1 => self.a_minus,
            0 => self.a_pi,
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a_plus.norm_sqr() + self.a_minus.norm_sqr() + self.a_pi.norm_sqr()
    }
}

/// σ±/π content of a drive polarization. Linear light at angle α gives
/// (a₊, a₋) = (e^{−iα}, e^{+iα})/√2, so H has zero relative phase.
pub fn decompose_drive(pol: &Polarization) -> Result<DriveDecomposition> {
    let [h, v] = pol.jones;
    let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::domain("drive polarization is not normalized"));
    }
    let i = Complex64::i();
    Ok(DriveDecomposition {
        a_plus: (h - i * v) * FRAC_1_SQRT_2,
        a_minus: (h + i * v) * FRAC_1_SQRT_2,
        a_pi: Complex64::new(0.0, 0.0),
    })
}

/// Cartesian components of the spherical unit vector for dipole component `q`,
/// convention d_± = (x̂ ± iŷ)/√2, d_0 = ẑ.
fn dipole_vector(q: i32) -> [Complex64; 3] {
    let s = FRAC_1_SQRT_2;
    match q {
        1 => [Complex64::new(s, 0.0), Complex64::new(0.0, s), Complex64::new(0.0, 0.0)],
        -1 => [Complex64::new(s, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, 0.0)],
        _ => [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    }
}

/// Emission pattern of one dipole channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmissionChannel {
    pub q: i32,
}

impl EmissionChannel {
    pub fn new(q: i32) -> Result<Self> {
        if !(-1..=1).contains(&q) {
            return Err(Error::domain(format!("q = {q} is not a dipole component")));
        }
        Ok(Self { q })
    }

    /// Probability per steradian of emission at polar angle θ (from ẑ).
    pub fn angular_density(&self, theta: f64) -> f64 {
        let n = [theta.sin(), 0.0, theta.cos()];
        let d = dipole_vector(self.q);
        let along: Complex64 = (0..3).map(|k| d[k] * n[k]).sum();
        let total: f64 = d.iter().map(|c| c.norm_sqr()).sum();
        3.0 / (8.0 * PI) * (total - along.norm_sqr())
    }
}

/// Far-field amplitude of one channel at the collection direction x̂, split into
/// the mode polarized along ẑ (transmitted by the π-filter) and along ŷ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeWeights {
    pub parallel: Complex64,
    pub perpendicular: Complex64,
}

impl ModeWeights {
    /// Emission probability per steradian reaching the detector.
    pub fn density(&self) -> f64 {
        3.0 / (8.0 * PI) * (self.parallel.norm_sqr() + self.perpendicular.norm_sqr())
    }
}

/// Linear polarizer in front of the collection fibre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizerSetting {
    pub enabled: bool,
    /// Power extinction ratio; infinite means no leakage of the ŷ mode.
    pub extinction_ratio: f64,
}

impl PolarizerSetting {
    pub const OFF: Self = Self {
        enabled: false,
        extinction_ratio: f64::INFINITY,
    };
    pub const IDEAL: Self = Self {
        enabled: true,
        extinction_ratio: f64::INFINITY,
    };

    fn perpendicular_amplitude(&self) -> f64 {
        if !self.enabled {
            1.0
        } else if self.extinction_ratio.is_infinite() {
            0.0
        } else {
            (1.0 / self.extinction_ratio).sqrt()
        }
    }
}

/// Projection of channel `q` onto the detector modes for collection
/// perpendicular to the quantization axis.
pub fn collection_projection(q: i32, polarizer: PolarizerSetting) -> Result<ModeWeights> {
    EmissionChannel::new(q)?;
    // Transverse part of d_q for n = x̂ is (0, d_y, d_z).
    let d = dipole_vector(q);
    Ok(ModeWeights {
        parallel: d[2],
        perpendicular: d[1] * polarizer.perpendicular_amplitude(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn circular_drives_single_sigma() {
        let r = decompose_drive(&Polarization::named(NamedPolarization::R)).unwrap();
        assert_abs_diff_eq!(r.a_plus.norm(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.a_minus.norm(), 0.0, epsilon = 1e-15);
        let l = decompose_drive(&Polarization::named(NamedPolarization::L)).unwrap();
        assert_abs_diff_eq!(l.a_plus.norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.a_minus.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn horizontal_is_equal_weight_zero_phase() {
        let h = decompose_drive(&Polarization::named(NamedPolarization::H)).unwrap();
        assert_abs_diff_eq!(h.a_plus.re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(h.a_minus.re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_eq!(h.a_pi, c(0.0, 0.0));
    }

    #[test]
    fn linear_angle_phases() {
        for alpha in [-1.0, 0.2, 0.7, 2.0] {
            let d = decompose_drive(&Polarization::linear(alpha)).unwrap();
            let ep = Complex64::from_polar(FRAC_1_SQRT_2, -alpha);
            let em = Complex64::from_polar(FRAC_1_SQRT_2, alpha);
            assert_abs_diff_eq!((d.a_plus - ep).norm(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!((d.a_minus - em).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn rejects_unnormalized() {
        assert!(Polarization::from_jones(c(1.0, 0.0), c(0.1, 0.0)).is_err());
        assert!(Polarization::normalized(c(0.0, 0.0), c(0.0, 0.0)).is_err());
    }

    #[test]
    fn vdha_relative_phases_step_by_quarter_turn() {
        let phase = |n| {
            let d = decompose_drive(&Polarization::named(n)).unwrap();
            (d.a_minus / d.a_plus).arg()
        };
        let seq = [
            NamedPolarization::V,
            NamedPolarization::D,
            NamedPolarization::H,
            NamedPolarization::A,
        ];
        for w in seq.windows(2) {
            let step = (phase(w[1]) - phase(w[0])).rem_euclid(2.0 * PI);
            assert_abs_diff_eq!(step, 1.5 * PI, epsilon = 1e-12);
        }
    }

    #[test]
    fn emission_densities_integrate_to_one() {
        // Simpson over θ, trivial in φ.
        let n = 2000;
        for q in -1..=1 {
            let ch = EmissionChannel::new(q).unwrap();
            let h = PI / n as f64;
            let mut acc = 0.0;
            for k in 0..=n {
                let th = k as f64 * h;
                let w = if k == 0 || k == n {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * ch.angular_density(th) * th.sin();
            }
            let total = acc * h / 3.0 * 2.0 * PI;
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
        let pi = EmissionChannel::new(0).unwrap();
        assert_abs_diff_eq!(pi.angular_density(PI / 2.0), 3.0 / (8.0 * PI), epsilon = 1e-15);
        let sigma = EmissionChannel::new(1).unwrap();
        assert_abs_diff_eq!(sigma.angular_density(PI / 2.0), 3.0 / (16.0 * PI), epsilon = 1e-15);
    }

    #[test]
    fn polarizer_passes_pi_blocks_sigma() {
        let pi = collection_projection(0, PolarizerSetting::IDEAL).unwrap();
        assert_eq!(pi.parallel, c(1.0, 0.0));
        for q in [-1, 1] {
            let w = collection_projection(q, PolarizerSetting::IDEAL).unwrap();
            assert_eq!(w.parallel.norm(), 0.0);
            assert_eq!(w.perpendicular.norm(), 0.0);
        }
        let leaky = PolarizerSetting {
            enabled: true,
            extinction_ratio: 100.0,
        };
        let w = collection_projection(1, leaky).unwrap();
        assert_abs_diff_eq!(w.perpendicular.norm_sqr(), 0.5 / 100.0, epsilon = 1e-15);
    }

    #[test]
    fn sigma_channels_share_transverse_mode_coherently() {
        let p = collection_projection(1, PolarizerSetting::OFF).unwrap();
        let m = collection_projection(-1, PolarizerSetting::OFF).unwrap();
        assert_abs_diff_eq!(p.perpendicular.norm(), m.perpendicular.norm(), epsilon = 1e-15);
        assert_abs_diff_eq!((p.perpendicular + m.perpendicular).norm(), 0.0, epsilon = 1e-15);
        // Density from the mode weights matches the radiation pattern at 90°.
        let ch = EmissionChannel::new(1).unwrap();
        assert_abs_diff_eq!(p.density(), ch.angular_density(PI / 2.0), epsilon = 1e-15);

        // Entangled ion-photon state (|+½⟩|σ⁺⟩ + e^{iφ}|−½⟩|σ⁻⟩)/√2 projected on
        // the common mode leaves a pure, balanced qubit: visibility 1.
        let phi = 0.83;
        let up = p.perpendicular * FRAC_1_SQRT_2;
        let down = m.perpendicular * Complex64::from_polar(FRAC_1_SQRT_2, phi);
        let norm = up.norm_sqr() + down.norm_sqr();
        let visibility = 2.0 * (up * down.conj()).norm() / norm;
        assert_abs_diff_eq!(visibility, 1.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn drive_decomposition_preserves_norm(
            a in -3.0f64..3.0, b in -3.0f64..3.0, c_ in -3.0f64..3.0, d in -3.0f64..3.0
        ) {
            prop_assume!(a * a + b * b + c_ * c_ + d * d > 1e-6);
            let pol = Polarization::normalized(c(a, b), c(c_, d)).unwrap();
            let dec = decompose_drive(&pol).unwrap();
            prop_assert!((dec.norm_sqr() - 1.0).abs() < 1e-12);
            prop_assert_eq!(dec.a_pi, c(0.0, 0.0));
        }

        #[test]
        fn stokes_round_trip_up_to_global_phase(
            a in -3.0f64..3.0, b in -3.0f64..3.0, c_ in -3.0f64..3.0, d in -3.0f64..3.0
        ) {
            prop_assume!(a * a + b * b + c_ * c_ + d * d > 1e-6);
            let pol = Polarization::normalized(c(a, b), c(c_, d)).unwrap();
            let back = Polarization::from_stokes(pol.stokes()).unwrap();
            prop_assert!((pol.overlap(&back) - 1.0).abs() < 1e-10);
        }
    }
}
