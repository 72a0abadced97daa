//! Run configuration, loaded from TOML with sections [levels], [drive],
//! [chain], [noise], [sequence] and [campaign]. Every field has a default, so
//! an empty file is a valid configuration.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atom::{Branching, GFactors, LevelScheme, PhysicalConstants};
use crate::error::{Error, Result};
use crate::polarization::PolarizerSetting;
use crate::protocol::{DetectionChain, NoiseConfig, SequenceConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Levels {
    pub magnetic_field_g: f64,
    /// Γ/2π of P₃/₂ in MHz.
    pub linewidth_mhz: f64,
    pub branching_s12: f64,
    pub branching_d52: f64,
    pub branching_sink: f64,
    pub g_s12: f64,
    pub g_d52: f64,
    pub g_p32: f64,
}

impl Default for Levels {
    fn default() -> Self {
        let b = Branching::default();
        let g = GFactors::default();
        Self {
            magnetic_field_g: 2.8,
            linewidth_mhz: 23.0,
            branching_s12: b.to_s12,
            branching_d52: b.to_d52,
            branching_sink: b.to_sink,
            g_s12: g.s12,
            g_d52: g.d52,
            g_p32: g.p32,
        }
    }
}

impl Levels {
    pub fn scheme(&self) -> LevelScheme {
        LevelScheme {
            constants: PhysicalConstants::default(),
            g_factors: GFactors {
                s12: self.g_s12,
                d52: self.g_d52,
                p32: self.g_p32,
            },
            branching: Branching {
                to_s12: self.branching_s12,
                to_d52: self.branching_d52,
                to_sink: self.branching_sink,
            },
            linewidth_p32: 2.0 * PI * self.linewidth_mhz,
            magnetic_field: self.magnetic_field_g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Drive {
    /// Ω/2π in MHz.
    pub rabi_mhz: f64,
    /// Δ/2π in MHz.
    pub detuning_mhz: f64,
    /// Finest propagation step, μs; bounds the jump-time resolution.
    pub dt_max_us: f64,
    /// Free evolution after the drive window so that P₃/₂ empties before read-out.
    pub settle_us: f64,
}

impl Default for Drive {
    fn default() -> Self {
        Self {
            rabi_mhz: DEFAULT_RABI_MHZ,
            detuning_mhz: 0.0,
            dt_max_us: 3.0e-4,
            settle_us: 0.5,
        }
    }
}

/// Peak Rabi frequency of the 854 nm drive (reduced-matrix-element units).
pub const DEFAULT_RABI_MHZ: f64 = 9.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Campaign {
    pub scheme: Variant,
    /// Named states or `jones:h_re,h_im,v_re,v_im`.
    pub polarizations: Vec<String>,
    pub runs: u64,
    pub seed: u64,
    /// Acceptance window for analysis, ns.
    pub window_ns: u32,
    /// RF analysis phases for the superposition bases; Z is always scheduled.
    pub rf_phases_rad: Vec<f64>,
    pub fringe_bins: usize,
    pub min_events_per_bin: u64,
}

impl Default for Campaign {
    fn default() -> Self {
        Self {
            scheme: Variant::A,
            polarizations: ["H", "V", "D", "A", "R", "L"].map(String::from).to_vec(),
            runs: 100_000,
            seed: 1,
            window_ns: 450,
            rf_phases_rad: vec![0.0, PI / 2.0],
            fringe_bins: 16,
            min_events_per_bin: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub levels: Levels,
    pub drive: Drive,
    pub chain: DetectionChain,
    pub noise: NoiseConfig,
    pub sequence: SequenceConfig,
    pub campaign: Campaign,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| {
            Error::config("toml", e.message().to_string() + &span_hint(text, e.span()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            context: "reading config",
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Canonical byte representation covering every parameter.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn scheme(&self) -> LevelScheme {
        self.levels.scheme()
    }

    pub fn polarizer(&self, variant: Variant) -> PolarizerSetting {
        let enabled = self.chain.polarizer.unwrap_or(variant == Variant::A);
        PolarizerSetting {
            enabled,
            extinction_ratio: self.chain.extinction_ratio.unwrap_or(f64::INFINITY),
        }
    }

    /// Same configuration with the D₅/₂ decay branch removed and the rest
    /// renormalized.
    pub fn without_reexcitation(&self) -> Self {
        let b = self.scheme().branching.without_d52();
        let mut out = self.clone();
        out.levels.branching_s12 = b.to_s12;
        out.levels.branching_d52 = b.to_d52;
        out.levels.branching_sink = b.to_sink;
        out
    }

    pub fn without_dark_counts(&self) -> Self {
        let mut out = self.clone();
        out.chain.dark_rate_hz = 0.0;
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme().validate()?;
        let d = &self.drive;
        positive("drive.rabi_mhz", d.rabi_mhz, true)?;
        finite("drive.detuning_mhz", d.detuning_mhz)?;
        positive("drive.dt_max_us", d.dt_max_us, false)?;
        positive("drive.settle_us", d.settle_us, true)?;
        self.chain.validate()?;
        self.noise.validate()?;
        self.sequence.validate()?;
        let c = &self.campaign;
        if c.polarizations.is_empty() {
            return Err(Error::config("campaign.polarizations", "must not be empty"));
        }
        for p in &c.polarizations {
            crate::protocol::InputPolarization::parse(p)
                .map_err(|e| Error::config("campaign.polarizations", e.to_string()))?;
        }
        if c.runs == 0 {
            return Err(Error::config("campaign.runs", "must be >= 1"));
        }
        if f64::from(c.window_ns) > self.sequence.absorb_window_us * 1e3 {
            return Err(Error::config("campaign.window_ns", "exceeds the absorb window"));
        }
        if c.rf_phases_rad.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("campaign.rf_phases_rad", "must be finite"));
        }
        if c.fringe_bins < 3 {
            return Err(Error::config("campaign.fringe_bins", "need at least 3 bins"));
        }
        Ok(())
    }
}

pub(crate) fn positive(field: &str, value: f64, allow_zero: bool) -> Result<()> {
    let ok = value.is_finite() && (value > 0.0 || (allow_zero && value == 0.0));
    if ok {
        Ok(())
    } else if allow_zero {
        Err(Error::config(field, format!("must be finite and >= 0, got {value}")))
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn finite(field: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, "must be finite"))
    }
}

pub(crate) fn probability(field: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in [0, 1], got {value}")))
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
