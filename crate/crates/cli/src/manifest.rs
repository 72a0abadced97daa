use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use herald_core::config::Config;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything needed to reproduce a simulated event log. Two manifests with
/// the same `config_sha256` describe byte-identical logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the canonical JSON form of the effective configuration,
    /// overrides and seed included.
    pub config_sha256: String,
    pub master_seed: u64,
    pub runs: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub log_path: PathBuf,
    pub log_sha256: String,
    pub heralds: usize,
    /// Set when the dark-count rate was calibrated before the campaign.
    pub calibrated_dark_rate_hz: Option<f64>,
}

pub fn config_hash(config: &Config) -> String {
    hex::encode(Sha256::digest(config.canonical_json().as_bytes()))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
