//! `herald`: simulate, analyze and validate heralded photon-to-atom transfer
//! campaigns.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use herald_core::analysis::{analyze, fringe_csv, histogram_csv, tradeoff_csv, AnalysisOptions};
use herald_core::config::Config;
use herald_core::eventlog::{create_log_file, EventLog};
use herald_core::protocol::{calibrate_dark_rate, run_campaign, CampaignSpec, Variant};
use herald_core::validate::run_validation;
use serde_json::Value;

use manifest::{config_hash, file_hash, unix_now, RunManifest};

const LOG_FILE: &str = "events.htlog";
const MANIFEST_FILE: &str = "manifest.json";
const RESULTS_FILE: &str = "results.json";

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_ANALYSIS: u8 = 4;
const EXIT_VALIDATION: u8 = 5;

#[derive(Parser)]
#[command(name = "herald", version, about = "Heralded photon-to-atom state transfer simulator")]
struct Cli {
    /// Worker threads; changes speed only, never output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write the event log and manifest.
    Simulate {
        #[command(flatten)]
        common: CampaignArgs,
        /// Choose the dark-count rate from a pilot run first.
        #[arg(long)]
        calibrate_dark: bool,
    },
    /// Analyze an event log.
    Analyze {
        /// Event log; defaults to OUT/events.htlog.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        window_ns: Option<u32>,
        /// Fixed fringe period instead of fitting it.
        #[arg(long)]
        period_ns: Option<f64>,
        /// Phase bins per fringe.
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Compare the simulator against its oracles.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        trajectories: usize,
    },
    /// Print a summary of OUT/results.json.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    window_ns: Option<u32>,
    /// A or B.
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated, e.g. H,V,D,A,R,L.
    #[arg(long)]
    polarizations: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| anyhow!(e))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<herald_core::Error>() {
            use herald_core::Error::*;
            return match err {
                Domain(_) | Config { .. } => EXIT_CONFIG,
                Io { .. } | Format { .. } => EXIT_IO,
                Analysis(_) => EXIT_ANALYSIS,
                Sequencing(_) => EXIT_OTHER,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_OTHER
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Simulate { common, calibrate_dark } => simulate(&common, calibrate_dark),
        Command::Analyze {
            log,
            out,
            window_ns,
            period_ns,
            bins,
        } => {
            let log = log.unwrap_or_else(|| out.join(LOG_FILE));
            analyze_cmd(&log, &out, window_ns, period_ns, bins)
        }
        Command::Validate {
            config,
            seed,
            trajectories,
        } => validate(config.as_deref(), seed, trajectories),
        Command::Report { out } => report(&out),
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn effective_config(args: &CampaignArgs) -> Result<Config> {
    let mut config = load_config(args.config.as_deref())?;
    let c = &mut config.campaign;
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(n) = args.runs {
        c.runs = n;
    }
    if let Some(w) = args.window_ns {
        c.window_ns = w;
    }
    if let Some(s) = &args.scheme {
        c.scheme = s.parse::<Variant>()?;
    }
    if let Some(p) = &args.polarizations {
        c.polarizations = p.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    config.validate()?;
    Ok(config)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn simulate(args: &CampaignArgs, calibrate_dark: bool) -> Result<u8> {
    let mut config = effective_config(args)?;
    let started_unix = unix_now();
    let spec = CampaignSpec::from_config(&config)?;
    let calibrated = if calibrate_dark {
        let cal = calibrate_dark_rate(&config, &spec, config.campaign.window_ns)?;
        config.chain.dark_rate_hz = cal.dark_rate_hz;
        eprintln!(
            "calibrated dark rate {:.2} Hz (photon heralds {:.4} % per run)",
            cal.dark_rate_hz,
            100.0 * cal.photon_herald_probability
        );
        Some(cal.dark_rate_hz)
    } else {
        None
    };

    let log_path = args.out.join(LOG_FILE);
    let mut file = create_log_file(&log_path)?;
    let log = run_campaign(&spec, &config, Some(&mut file))?;
    drop(file);

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: args.config.clone(),
        config_sha256: config_hash(&config),
        master_seed: config.campaign.seed,
        runs: config.campaign.runs,
        started_unix,
        finished_unix: unix_now(),
        log_sha256: file_hash(&log_path)?,
        log_path,
        heralds: log.heralds.len(),
        calibrated_dark_rate_hz: calibrated,
    };
    write_file(&args.out.join(MANIFEST_FILE), &serde_json::to_string_pretty(&manifest)?)?;
    println!(
        "{} runs, {} heralds -> {} (sha256 {})",
        manifest.runs,
        manifest.heralds,
        manifest.log_path.display(),
        manifest.log_sha256
    );
    Ok(0)
}

fn analyze_cmd(
    log_path: &Path,
    out: &Path,
    window_ns: Option<u32>,
    period_ns: Option<f64>,
    bins: Option<usize>,
) -> Result<u8> {
    let log = EventLog::read_path(log_path)?;
    let mut opts = AnalysisOptions::from_config(&log.header.config);
    if let Some(w) = window_ns {
        opts.window_ns = w;
    }
    if let Some(t) = period_ns {
        if !(t > 0.0 && t.is_finite()) {
            return Err(herald_core::Error::Config {
                field: "--period-ns".into(),
                message: "must be positive".into(),
            }
            .into());
        }
        opts.period_ns = Some(t);
    }
    if let Some(b) = bins {
        if b < 3 {
            return Err(herald_core::Error::Config {
                field: "--bins".into(),
                message: "must be >= 3".into(),
            }
            .into());
        }
        opts.phase_bins = b;
    }
    let report = analyze(&log, &opts)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_file(&out.join(RESULTS_FILE), &serde_json::to_string_pretty(&report)?)?;
    write_file(&out.join("histograms.csv"), &histogram_csv(&log))?;
    write_file(&out.join("fringes.csv"), &fringe_csv(&report.states))?;
    write_file(&out.join("tradeoff.csv"), &tradeoff_csv(&report.tradeoff))?;
    println!("wrote {}", out.join(RESULTS_FILE).display());
    Ok(0)
}

fn validate(config: Option<&Path>, seed: u64, trajectories: usize) -> Result<u8> {
    let config = load_config(config)?;
    let checks = run_validation(&config, trajectories.max(1), seed)?;
    let mut ok = true;
    for c in &checks {
        println!("{} {:<34} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(if ok { 0 } else { EXIT_VALIDATION })
}

fn pct(v: &Value) -> String {
    v.as_f64().map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x))
}

fn report(out: &Path) -> Result<u8> {
    let path = out.join(RESULTS_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let r: Value = serde_json::from_str(&text)?;
    println!("scheme {}  runs {}  window {} ns", r["variant"].as_str().unwrap_or("?"), r["total_runs"], r["window_ns"]);
    let h = &r["heralding_probability"];
    println!(
        "heralding probability {:.4} ± {:.4} %",
        100.0 * h["value"].as_f64().unwrap_or(f64::NAN),
        100.0 * h["stderr"].as_f64().unwrap_or(f64::NAN)
    );
    let period = &r["larmor_period"];
    println!(
        "Larmor period {:.2} ns ({}; nominal {:.2} ns)",
        period["period_ns"].as_f64().unwrap_or(f64::NAN),
        if period["fitted"].as_bool() == Some(true) { "fitted" } else { "fixed" },
        period["nominal_ns"].as_f64().unwrap_or(f64::NAN)
    );
    println!();
    println!("{:<12} {:>10} {:>8}  method", "input", "F (%)", "± (%)");
    for s in r["states"]["states"].as_array().into_iter().flatten() {
        println!(
            "{:<12} {:>10} {:>8}  {}",
            s["label"].as_str().unwrap_or("?"),
            pct(&s["fidelity"]["value"]),
            pct(&s["fidelity"]["stderr"]),
            s["method"].as_str().unwrap_or("")
        );
    }
    for st in r["phase_steps"].as_array().into_iter().flatten() {
        println!(
            "phase step {} -> {}: {:.3} ± {:.3} rad",
            st["from"].as_str().unwrap_or("?"),
            st["to"].as_str().unwrap_or("?"),
            st["delta_rad"].as_f64().unwrap_or(f64::NAN),
            st["stderr_rad"].as_f64().unwrap_or(f64::NAN)
        );
    }
    let tomo = &r["states"]["tomography"];
    if tomo.is_object() {
        println!(
            "process fidelity {} ± {} %, average state fidelity {} %, 2-design {} %",
            pct(&tomo["process_fidelity"]["value"]),
            pct(&tomo["process_fidelity"]["stderr"]),
            pct(&tomo["average_state_fidelity"]["value"]),
            pct(&tomo["two_design_prediction"]["value"])
        );
    } else if let Some(note) = r["states"]["tomography_note"].as_str() {
        println!("tomography: {note}");
    }
    let trade = r["tradeoff"].as_array();
    if let Some(points) = trade.filter(|p| !p.is_empty()) {
        println!();
        println!("{:>8} {:>10} {:>10} {:>10}", "window", "P_h (%)", "F_proc", "F_avg");
        for p in points {
            println!(
                "{:>8} {:>10.4} {:>10} {:>10}",
                p["window_ns"].as_u64().unwrap_or(0),
                100.0 * p["herald_probability"].as_f64().unwrap_or(f64::NAN),
                pct(&p["process_fidelity"]),
                pct(&p["average_state_fidelity"])
            );
        }
    }
    Ok(0)
}
