//! Level structure of ⁴⁰Ca⁺: the S₁/₂, D₅/₂ and P₃/₂ Zeeman manifolds plus a
//! terminal sink standing in for D₃/₂.
//!
//! Internal units: time in μs, angular frequencies in rad/μs (2π·MHz),
//! magnetic field in gauss. Half-integer quantum numbers are stored doubled.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of basis states: 2 + 6 + 4 + 1.
pub const N_LEVELS: usize = 13;

/// Bohr magneton over Planck's constant, CODATA 2018, in MHz/G.
pub const MU_B_OVER_H_MHZ_PER_G: f64 = 1.399_624_493_61;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Planck's constant in units where ħ = 1 (energies as rad/μs, times in μs).
    pub planck_h: f64,
    /// μB/h in MHz/G.
    pub bohr_magneton_over_h: f64,
}

impl PhysicalConstants {
    pub const SI_DERIVED: Self = Self {
        planck_h: 2.0 * PI,
        bohr_magneton_over_h: MU_B_OVER_H_MHZ_PER_G,
    };

    /// μB·B/ħ in rad/μs.
    pub fn larmor_unit(&self, field_gauss: f64) -> f64 {
        self.planck_h * self.bohr_magneton_over_h * field_gauss
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI_DERIVED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Manifold {
    S12,
    D52,
    P32,
    Sink,
}

impl Manifold {
    /// Doubled total angular momentum; `None` for the sink.
    pub fn two_j(self) -> Option<i32> {
        match self {
            Manifold::S12 => Some(1),
            Manifold::D52 => Some(5),
            Manifold::P32 => Some(3),
            Manifold::Sink => None,
        }
    }

    fn offset(self) -> usize {
        match self {
            Manifold::S12 => 0,
            Manifold::D52 => 2,
            Manifold::P32 => 8,
            Manifold::Sink => 12,
        }
    }

    pub fn sublevels(self) -> impl Iterator<Item = Sublevel> {
        let two_j = self.two_j();
        let range: Vec<Sublevel> = match two_j {
            Some(tj) => (0..=tj)
                .map(|k| Sublevel {
                    manifold: self,
                    two_m: -tj + 2 * k,
                })
                .collect(),
            None => vec![Sublevel::SINK],
        };
        range.into_iter()
    }

    /// Basis indices occupied by this manifold.
    pub fn indices(self) -> std::ops::Range<usize> {
        let len = self.two_j().map_or(1, |tj| (tj + 1) as usize);
        self.offset()..self.offset() + len
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Manifold::S12 => "S1/2",
            Manifold::D52 => "D5/2",
            Manifold::P32 => "P3/2",
            Manifold::Sink => "sink",
        };
        f.write_str(s)
    }
}

/// One Zeeman sublevel |manifold, m⟩, with `two_m = 2m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sublevel {
    pub manifold: Manifold,
    pub two_m: i32,
}

impl Sublevel {
    pub const SINK: Sublevel = Sublevel {
        manifold: Manifold::Sink,
        two_m: 0,
    };

    pub fn new(manifold: Manifold, two_m: i32) -> Result<Self> {
        match manifold.two_j() {
            None => Ok(Self::SINK),
            Some(tj) => {
                if two_m.abs() > tj || (tj - two_m) % 2 != 0 {
                    Err(Error::domain(format!(
                        "m = {two_m}/2 is not a sublevel of {manifold}"
                    )))
                } else {
                    Ok(Self { manifold, two_m })
                }
            }
        }
    }

    pub fn s(two_m: i32) -> Self {
        Self::new(Manifold::S12, two_m).expect("valid S1/2 sublevel")
    }

    pub fn d(two_m: i32) -> Self {
        Self::new(Manifold::D52, two_m).expect("valid D5/2 sublevel")
    }

    pub fn p(two_m: i32) -> Self {
        Self::new(Manifold::P32, two_m).expect("valid P3/2 sublevel")
    }

    pub fn m(&self) -> f64 {
        f64::from(self.two_m) / 2.0
    }

    /// Position in the 13-dimensional state vector.
    pub fn index(&self) -> usize {
        match self.manifold.two_j() {
            Some(tj) => self.manifold.offset() + ((self.two_m + tj) / 2) as usize,
            None => self.manifold.offset(),
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        all_sublevels().nth(index)
    }
}

impl fmt::Display for Sublevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.manifold == Manifold::Sink {
            return f.write_str("|sink>");
        }
        let sign = if self.two_m >= 0 { "+" } else { "-" };
        write!(f, "|{}, {}{}/2>", self.manifold, sign, self.two_m.abs())
    }
}

/// All 13 sublevels in basis order.
pub fn all_sublevels() -> impl Iterator<Item = Sublevel> {
    [Manifold::S12, Manifold::D52, Manifold::P32, Manifold::Sink]
        .into_iter()
        .flat_map(Manifold::sublevels)
}

/// Decay probabilities out of P₃/₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branching {
    pub to_s12: f64,
    pub to_d52: f64,
    /// Decay to D₃/₂, which never returns within one run.
    pub to_sink: f64,
}

impl Branching {
    pub fn to(&self, manifold: Manifold) -> f64 {
        match manifold {
            Manifold::S12 => self.to_s12,
            Manifold::D52 => self.to_d52,
            Manifold::Sink => self.to_sink,
            Manifold::P32 => 0.0,
        }
    }

    /// Removes the P₃/₂ → D₅/₂ channel and rescales the rest to unit sum.
    pub fn without_d52(&self) -> Self {
        let rest = self.to_s12 + self.to_sink;
        Self {
            to_s12: self.to_s12 / rest,
            to_d52: 0.0,
            to_sink: self.to_sink / rest,
        }
    }
}

impl Default for Branching {
    fn default() -> Self {
        Self {
            to_s12: 0.935,
            to_d52: 0.059,
            to_sink: 0.006,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GFactors {
    pub s12: f64,
    pub d52: f64,
    pub p32: f64,
}

impl Default for GFactors {
    fn default() -> Self {
        Self {
            s12: 2.0,
            d52: 6.0 / 5.0,
            p32: 4.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelScheme {
    pub constants: PhysicalConstants,
    pub g_factors: GFactors,
    pub branching: Branching,
    /// P₃/₂ decay rate Γ in rad/μs.
    pub linewidth_p32: f64,
    /// Static field in gauss.
    pub magnetic_field: f64,
}

impl Default for LevelScheme {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            g_factors: GFactors::default(),
            branching: Branching::default(),
            linewidth_p32: 2.0 * PI * 23.0,
            magnetic_field: 2.8,
        }
    }
}

impl LevelScheme {
    pub fn validate(&self) -> Result<()> {
        let b = &self.branching;
        let total = b.to_s12 + b.to_d52 + b.to_sink;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "levels.branching",
                format!("branching fractions sum to {total}, expected 1"),
            ));
        }
        if [b.to_s12, b.to_d52, b.to_sink].iter().any(|&p| p < 0.0) {
            return Err(Error::config("levels.branching", "negative branching fraction"));
        }
        let g = &self.g_factors;
        if !(g.s12 > 0.0 && g.d52 > 0.0 && g.p32 > 0.0) {
            return Err(Error::config("levels.g_factors", "g-factors must be positive"));
        }
        if !(self.linewidth_p32 >= 0.0 && self.linewidth_p32.is_finite()) {
            return Err(Error::config("levels.linewidth_mhz", "must be finite and >= 0"));
        }
        if !(self.magnetic_field >= 0.0 && self.magnetic_field.is_finite()) {
            return Err(Error::config("levels.magnetic_field_g", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn g_factor(&self, manifold: Manifold) -> Option<f64> {
        match manifold {
            Manifold::S12 => Some(self.g_factors.s12),
            Manifold::D52 => Some(self.g_factors.d52),
            Manifold::P32 => Some(self.g_factors.p32),
            Manifold::Sink => None,
        }
    }

    /// μB·B/ħ at the configured field, rad/μs.
    pub fn larmor_unit(&self) -> f64 {
        self.constants.larmor_unit(self.magnetic_field)
    }
}

/// Zeeman shift g·m·μB·B/ħ of a sublevel, rad/μs.
pub fn zeeman_shift(level: Sublevel, scheme: &LevelScheme) -> Result<f64> {
    let g = scheme
        .g_factor(level.manifold)
        .ok_or_else(|| Error::domain("the sink has no Zeeman shift"))?;
    if scheme.magnetic_field < 0.0 {
        return Err(Error::domain("magnetic field must be >= 0"));
    }
    Ok(g * level.m() * scheme.larmor_unit())
}

/// The D₅/₂ Zeeman pair holding the stored superposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DPair {
    /// |D, ±3/2⟩ (π-heralded variant).
    ThreeHalves,
    /// |D, ±5/2⟩ (σ-heralded variant).
    FiveHalves,
}

impl DPair {
    pub fn two_m(self) -> i32 {
        match self {
            DPair::ThreeHalves => 3,
            DPair::FiveHalves => 5,
        }
    }

    /// g_D·(m₊ − m₋) − g_S·(+½ − −½): the differential Larmor coefficient.
    pub fn beat_coefficient(self, scheme: &LevelScheme) -> f64 {
        let g = &scheme.g_factors;
        g.d52 * f64::from(self.two_m()) - g.s12
    }
}

/// Period of the phase beat between the D₅/₂ pair superposition and the
/// S₁/₂ qubit, in μs.
pub fn larmor_beat_period(scheme: &LevelScheme, pair: DPair) -> Result<f64> {
    if !(scheme.magnetic_field > 0.0) {
        return Err(Error::domain("Larmor beat period needs B > 0"));
    }
    let coefficient = pair.beat_coefficient(scheme).abs();
    if coefficient == 0.0 {
        return Err(Error::domain("degenerate Larmor frequencies"));
    }
    Ok(scheme.constants.planck_h / (coefficient * scheme.larmor_unit()))
}

/// ⟨j₁ m₁; 1 q | J M⟩ for J ∈ {j₁−1, j₁, j₁+1}, closed form (Condon–Shortley).
/// All angular momenta doubled.
pub fn clebsch_gordan_rank1(two_j1: i32, two_m1: i32, q: i32, two_j: i32, two_m: i32) -> f64 {
    if !(-1..=1).contains(&q) || two_m1 + 2 * q != two_m {
        return 0.0;
    }
    if two_m1.abs() > two_j1 || two_m.abs() > two_j || two_j < 0 {
        return 0.0;
    }
    let j1 = f64::from(two_j1) / 2.0;
    let m = f64::from(two_m) / 2.0;
    let d = two_j - two_j1;
    let v = match (d, q) {
        (2, 1) => ((j1 + m) * (j1 + m + 1.0) / ((2.0 * j1 + 1.0) * (2.0 * j1 + 2.0))).sqrt(),
        (2, 0) => ((j1 - m + 1.0) * (j1 + m + 1.0) / ((2.0 * j1 + 1.0) * (j1 + 1.0))).sqrt(),
        (2, -1) => ((j1 - m) * (j1 - m + 1.0) / ((2.0 * j1 + 1.0) * (2.0 * j1 + 2.0))).sqrt(),
        (0, 1) => -((j1 + m) * (j1 - m + 1.0) / (2.0 * j1 * (j1 + 1.0))).sqrt(),
        (0, 0) => m / (j1 * (j1 + 1.0)).sqrt(),
        (0, -1) => ((j1 - m) * (j1 + m + 1.0) / (2.0 * j1 * (j1 + 1.0))).sqrt(),
        (-2, 1) => ((j1 - m) * (j1 - m + 1.0) / (2.0 * j1 * (2.0 * j1 + 1.0))).sqrt(),
        (-2, 0) => -((j1 - m) * (j1 + m) / (j1 * (2.0 * j1 + 1.0))).sqrt(),
        (-2, -1) => ((j1 + m + 1.0) * (j1 + m) / (2.0 * j1 * (2.0 * j1 + 1.0))).sqrt(),
        _ => 0.0,
    };
    if v.is_nan() {
        0.0
    } else {
        v
    }
}

/// Dipole amplitude ⟨J_l m_l; 1 q | J_u m_u⟩ for S₁/₂–P₃/₂ and D₅/₂–P₃/₂.
pub fn transition_amplitude(lower: Sublevel, upper: Sublevel, q: i32) -> Result<f64> {
    let connected = upper.manifold == Manifold::P32
        && matches!(lower.manifold, Manifold::S12 | Manifold::D52);
    if !connected {
        return Err(Error::domain(format!(
            "no dipole transition between {lower} and {upper}"
        )));
    }
    if !(-1..=1).contains(&q) {
        return Err(Error::domain(format!("q = {q} is not a rank-1 component")));
    }
    let two_jl = lower.manifold.two_j().unwrap_or(0);
    let two_ju = upper.manifold.two_j().unwrap_or(0);
    Ok(clebsch_gordan_rank1(two_jl, lower.two_m, q, two_ju, upper.two_m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn basis_is_thirteen_and_round_trips() {
        let levels: Vec<_> = all_sublevels().collect();
        assert_eq!(levels.len(), N_LEVELS);
        for (i, l) in levels.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(Sublevel::from_index(i), Some(*l));
        }
    }

    #[test]
    fn rejects_out_of_range_m() {
        assert!(Sublevel::new(Manifold::S12, 3).is_err());
        assert!(Sublevel::new(Manifold::D52, 2).is_err());
        assert!(Sublevel::new(Manifold::P32, -5).is_err());
    }

    #[test]
    fn mu_b_over_h_matches_codata() {
        // 13.996 244 936 1 GHz/T
        let c = PhysicalConstants::default();
        assert_abs_diff_eq!(c.bohr_magneton_over_h, 1.399_624_493_61, epsilon = 1e-6);
    }

    #[test]
    fn zeeman_shift_examples() {
        let zero = LevelScheme {
            magnetic_field: 0.0,
            ..Default::default()
        };
        assert_eq!(zeeman_shift(Sublevel::s(1), &zero).unwrap(), 0.0);

        let scheme = LevelScheme::default();
        let split = zeeman_shift(Sublevel::s(1), &scheme).unwrap()
            - zeeman_shift(Sublevel::s(-1), &scheme).unwrap();
        assert_abs_diff_eq!(split / (2.0 * PI), 7.84, epsilon = 0.005);

        let d = zeeman_shift(Sublevel::d(3), &scheme).unwrap() / (2.0 * PI);
        assert_abs_diff_eq!(d, 7.054, epsilon = 5e-4);

        assert!(zeeman_shift(Sublevel::SINK, &scheme).is_err());
    }

    #[test]
    fn zeeman_shift_odd_in_m_and_linear_in_b() {
        for b in [0.1, 0.5, 1.0, 2.8, 7.0] {
            let scheme = LevelScheme {
                magnetic_field: b,
                ..Default::default()
            };
            let unit = LevelScheme {
                magnetic_field: 1.0,
                ..Default::default()
            };
            for level in all_sublevels().filter(|l| l.manifold != Manifold::Sink) {
                let mirrored = Sublevel {
                    two_m: -level.two_m,
                    ..level
                };
                let w = zeeman_shift(level, &scheme).unwrap();
                assert_abs_diff_eq!(w, -zeeman_shift(mirrored, &scheme).unwrap(), epsilon = 1e-12);
                assert_abs_diff_eq!(w, b * zeeman_shift(level, &unit).unwrap(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn beat_periods() {
        let scheme = LevelScheme::default();
        let t32 = larmor_beat_period(&scheme, DPair::ThreeHalves).unwrap() * 1e3;
        assert!((159.0..=161.0).contains(&t32), "{t32}");
        let half = LevelScheme {
            magnetic_field: 1.4,
            ..scheme
        };
        let t_half = larmor_beat_period(&half, DPair::ThreeHalves).unwrap() * 1e3;
        assert_abs_diff_eq!(t_half, 2.0 * t32, epsilon = 1e-9);
        let t52 = larmor_beat_period(&scheme, DPair::FiveHalves).unwrap() * 1e3;
        assert_abs_diff_eq!(t52, 63.8, epsilon = 0.05);
        assert_abs_diff_eq!(DPair::ThreeHalves.beat_coefficient(&scheme), 1.6, epsilon = 1e-12);

        let zero = LevelScheme {
            magnetic_field: 0.0,
            ..scheme
        };
        assert!(larmor_beat_period(&zero, DPair::ThreeHalves).is_err());
    }

    #[test]
    fn sigma_plus_channel_from_d_minus_three_halves() {
        let a = transition_amplitude(Sublevel::d(-3), Sublevel::p(-1), 1).unwrap();
        assert!(a.abs() > 0.1);
        for q in -1..=1 {
            assert_eq!(transition_amplitude(Sublevel::d(-3), Sublevel::p(3), q).unwrap(), 0.0);
        }
        assert!(transition_amplitude(Sublevel::s(1), Sublevel::d(1), 0).is_err());
        assert!(transition_amplitude(Sublevel::p(1), Sublevel::p(1), 0).is_err());
    }

    #[test]
    fn completeness_per_upper_state() {
        for lower in [Manifold::S12, Manifold::D52] {
            for upper in Manifold::P32.sublevels() {
                let total: f64 = lower
                    .sublevels()
                    .flat_map(|l| (-1..=1).map(move |q| (l, q)))
                    .map(|(l, q)| transition_amplitude(l, upper, q).unwrap().powi(2))
                    .sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn branching_validation() {
        let mut scheme = LevelScheme::default();
        scheme.validate().unwrap();
        scheme.branching.to_d52 = 0.07;
        assert!(scheme.validate().is_err());
        let b = Branching::default().without_d52();
        assert_abs_diff_eq!(b.to_s12 + b.to_sink, 1.0, epsilon = 1e-15);
        assert_eq!(b.to_d52, 0.0);
    }
}
