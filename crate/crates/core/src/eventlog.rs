//! Event-log file format.
//!
//! ```text
//! HTLOG 1
//! {"variant":"A","polarizations":["H",...],...}      header, one JSON line
//! <run_id>\t<variant>\t<pol>\t<heralded>\t<t_ns>\t<basis>\t<rf_phase>\t<bit>\t|\t<origin>\t<x>\t<y>\t<z>\t<s_pop>
//! ```
//!
//! One tab-separated record per run, in run order. Fields left of the `|`
//! column are the measurement record: `heralded` is `0` or `1`, `t_ns` the
//! herald time in whole nanoseconds after the drive turns on, `basis` is `Z`
//! or `X` (an RF π/2 analysis pulse with phase `rf_phase`, printed with six
//! decimals and restored from the header on reading), and `bit` is `bright` or `dark`. Unheralded runs carry `-` for
//! `t_ns` and `bit`. Fields right of `|` are simulator diagnostics: the herald
//! origin (`photon` or `dark`), the Bloch vector of the S₁/₂ part before
//! read-out and its population, each with six decimals, or `-`. The reader
//! keeps the diagnostics in a separate table so that analysis code cannot
//! consume them by accident.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::protocol::{
    CampaignSpec, HeraldOrigin, ReadoutBasis, ReadoutBit, RunOutcome, Truth, Variant,
};

pub const MAGIC: &str = "HTLOG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub variant: Variant,
    pub polarizations: Vec<String>,
    pub rf_phases: Vec<f64>,
    pub n_runs: u64,
    pub master_seed: u64,
    pub config: Config,
}

impl LogHeader {
    pub fn new(spec: &CampaignSpec, config: &Config) -> Self {
        Self {
            variant: spec.variant,
            polarizations: spec.polarizations.iter().map(|p| p.label.clone()).collect(),
            rf_phases: spec.rf_phases.clone(),
            n_runs: spec.n_runs,
            master_seed: spec.master_seed,
            config: config.clone(),
        }
    }

    pub fn polarization_index(&self, label: &str) -> Option<usize> {
        self.polarizations.iter().position(|p| p == label)
    }
}

/// A heralded run as seen by the analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldedEvent {
    pub run_id: u64,
    pub polarization: usize,
    pub t_detect_ns: u32,
    pub basis: ReadoutBasis,
    pub bit: ReadoutBit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub run_id: u64,
    pub origin: HeraldOrigin,
    pub truth: Option<Truth>,
}

/// In-memory log: all heralded runs plus per-polarization run counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub runs_per_polarization: Vec<u64>,
    /// Ordered by run id.
    pub heralds: Vec<HeraldedEvent>,
    /// Parallel to `heralds`.
    pub diagnostics: Vec<Diagnostics>,
}

impl EventLog {
    pub fn empty(header: LogHeader) -> Self {
        let n = header.polarizations.len();
        Self {
            header,
            runs_per_polarization: vec![0; n],
            heralds: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn total_runs(&self) -> u64 {
        self.runs_per_polarization.iter().sum()
    }

    pub fn push(&mut self, o: &RunOutcome) {
        self.runs_per_polarization[o.polarization] += 1;
        if let (Some(h), Some(bit)) = (o.herald, o.readout_bit) {
            self.heralds.push(HeraldedEvent {
                run_id: o.run_id,
                polarization: o.polarization,
                t_detect_ns: h.t_detect_ns,
                basis: o.basis,
                bit,
            });
            self.diagnostics.push(Diagnostics {
                run_id: o.run_id,
                origin: h.origin,
                truth: o.truth,
            });
        }
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            context: "opening event log",
            path: path.to_path_buf(),
            source,
        })?;
        Self::read(BufReader::new(file)).map_err(|e| match e {
            Error::Io { context, source, .. } => Error::Io {
                context,
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut lines = reader.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((_, Err(source))) => Err(io_err(source)),
                None => Err(Error::Format {
                    line: 0,
                    message: format!("missing {what}"),
                }),
            }
        };
        let (_, magic) = next("magic line")?;
        let mut parts = magic.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(Error::Format {
                line: 1,
                message: "not an event log".into(),
            });
        }
        let version: u32 = parts.next().and_then(|v| v.parse().ok()).unwrap_or(0);
        if version != VERSION {
            return Err(Error::Format {
                line: 1,
                message: format!("unsupported version {version}, expected {VERSION}"),
            });
        }
        let (_, header_line) = next("header")?;
        let header: LogHeader = serde_json::from_str(&header_line).map_err(|e| Error::Format {
            line: 2,
            message: format!("header: {e}"),
        })?;
        let mut log = EventLog::empty(header);
        for (i, line) in lines {
            let line = line.map_err(io_err)?;
            if line.is_empty() {
                continue;
            }
            let outcome = parse_record(&line, &log.header).map_err(|message| Error::Format {
                line: i + 1,
                message,
            })?;
            log.push(&outcome);
        }
        if log.total_runs() != log.header.n_runs {
            return Err(Error::Format {
                line: 0,
                message: format!(
                    "log holds {} runs but the header announces {}",
                    log.total_runs(),
                    log.header.n_runs
                ),
            });
        }
        Ok(log)
    }
}

fn io_err(source: std::io::Error) -> Error {
    Error::Io {
        context: "reading event log",
        path: Default::default(),
        source,
    }
}

/// Streams records to a text sink.
pub struct LogWriter<'a> {
    out: BufWriter<&'a mut dyn Write>,
    labels: Vec<String>,
}

impl<'a> LogWriter<'a> {
    pub fn new(sink: &'a mut dyn Write, header: &LogHeader) -> Result<Self> {
        let mut out = BufWriter::new(sink);
        let json = serde_json::to_string(header).expect("header serializes");
        writeln!(out, "{MAGIC} {VERSION}\n{json}").map_err(write_err)?;
        Ok(Self {
            out,
            labels: header.polarizations.clone(),
        })
    }

    pub fn write(&mut self, o: &RunOutcome) -> Result<()> {
        let line = format_record(o, &self.labels[o.polarization]);
        self.out.write_all(line.as_bytes()).map_err(write_err)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(write_err)
    }
}

fn write_err(source: std::io::Error) -> Error {
    Error::Io {
        context: "writing event log",
        path: Default::default(),
        source,
    }
}

pub fn format_record(o: &RunOutcome, label: &str) -> String {
    let (basis, phase) = match o.basis {
        ReadoutBasis::Z => ("Z", 0.0),
        ReadoutBasis::Superposition { rf_phase } => ("X", rf_phase),
    };
    let (heralded, t, origin) = match o.herald {
        Some(h) => (
            "1",
            h.t_detect_ns.to_string(),
            match h.origin {
                HeraldOrigin::Photon => "photon",
                HeraldOrigin::DarkCount => "dark",
            },
        ),
        None => ("0", "-".to_string(), "-"),
    };
    let bit = match o.readout_bit {
        Some(ReadoutBit::Bright) => "bright",
        Some(ReadoutBit::Dark) => "dark",
        None => "-",
    };
    let truth = match o.truth {
        Some(tr) => format!(
            "{:.6}\t{:.6}\t{:.6}\t{:.6}",
            tr.bloch[0], tr.bloch[1], tr.bloch[2], tr.s_population
        ),
        None => "-\t-\t-\t-".to_string(),
    };
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t|\t{}\t{}\n",
        o.run_id, o.variant, label, heralded, t, basis, phase, bit, origin, truth
    )
}

fn parse_record(line: &str, header: &LogHeader) -> std::result::Result<RunOutcome, String> {
    let (record, diag) = line
        .split_once("\t|\t")
        .ok_or_else(|| "missing diagnostics separator".to_string())?;
    let f: Vec<&str> = record.split('\t').collect();
    if f.len() != 8 {
        return Err(format!("expected 8 record fields, found {}", f.len()));
    }
    let run_id: u64 = f[0].parse().map_err(|e| format!("run_id: {e}"))?;
    let variant: Variant = f[1].parse().map_err(|e: Error| e.to_string())?;
    if variant != header.variant {
        return Err(format!("variant {variant} differs from header"));
    }
    let polarization = header
        .polarization_index(f[2])
        .ok_or_else(|| format!("unknown polarization {:?}", f[2]))?;
    let rf_phase: f64 = f[6].parse().map_err(|e| format!("rf_phase: {e}"))?;
    let basis = match f[5] {
        "Z" => ReadoutBasis::Z,
        // The header holds the phases at full precision; the record only
        // needs to identify one of them.
        "X" => ReadoutBasis::Superposition {
            rf_phase: header
                .rf_phases
                .iter()
                .copied()
                .find(|p| (p - rf_phase).abs() <= 1e-6)
                .unwrap_or(rf_phase),
        },
        other => return Err(format!("unknown basis {other:?}")),
    };
    let d: Vec<&str> = diag.split('\t').collect();
    if d.len() != 5 {
        return Err(format!("expected 5 diagnostic fields, found {}", d.len()));
    }
    let mut outcome = RunOutcome {
        run_id,
        variant,
        polarization,
        herald: None,
        basis,
        readout_bit: None,
        truth: None,
    };
    match f[3] {
        "0" => {
            if f[4] != "-" || f[7] != "-" {
                return Err("unheralded run with a detection time or read-out".into());
            }
        }
        "1" => {
            let t_detect_ns: u32 = f[4].parse().map_err(|e| format!("t_detect_ns: {e}"))?;
            let bit = match f[7] {
                "bright" => ReadoutBit::Bright,
                "dark" => ReadoutBit::Dark,
                other => return Err(format!("unknown read-out bit {other:?}")),
            };
            let origin = match d[0] {
                "photon" => HeraldOrigin::Photon,
                "dark" => HeraldOrigin::DarkCount,
                other => return Err(format!("unknown herald origin {other:?}")),
            };
            outcome.herald = Some(crate::protocol::Herald { t_detect_ns, origin });
            outcome.readout_bit = Some(bit);
            if d[1] != "-" {
                let num = |s: &str| s.parse::<f64>().map_err(|e| format!("truth: {e}"));
                outcome.truth = Some(Truth {
                    bloch: [num(d[1])?, num(d[2])?, num(d[3])?],
                    s_population: num(d[4])?,
                });
            }
        }
        other => return Err(format!("heralded must be 0 or 1, got {other:?}")),
    }
    Ok(outcome)
}

/// Writes a campaign log to `path`, creating parent directories.
pub fn create_log_file(path: &Path) -> Result<File> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            context: "creating output directory",
            path: parent.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map_err(|source| Error::Io {
        context: "creating event log",
        path: path.to_path_buf(),
        source,
    })
}
