//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 certificate
//! search infeasible, 3 dynamics divergence.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    build_error_matrices, containment_report, estimate_disturbance_bounds, search_certificate, CertificateDocument,
    ContainmentReport, DisturbanceBounds, SearchConfig,
};
use crate::controller::ControllerGains;
use crate::log::SimLog;
use crate::scenario::{load_config, ScenarioConfig};
use crate::sim::{simulate_partial, RunStats};
use crate::{plot, Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Reserved; the dynamics are deterministic, but a malformed value is
/// rejected so scripts notice typos.
pub const SEED_VAR: &str = "SLUNGLOAD_SEED";

/// Default transient cutoff for bound estimation and containment (s).
pub const DEFAULT_CUTOFF: f64 = 5.0;

#[derive(Debug, Parser)]
#[command(name = "slungload", version, about = "Multi-quadrotor slung-load simulation and certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a closed-loop simulation and write log.csv and summary.json.
    Simulate {
        /// Scenario file (JSON). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Also write SVG figures and gnuplot .dat files.
        #[arg(long)]
        plots: bool,
        #[arg(long)]
        decimate: Option<usize>,
        /// Run every *.json in this directory; outputs go to <out>/<stem>/.
        #[arg(long, conflicts_with = "config")]
        batch: Option<PathBuf>,
    },
    /// Search for an attractive-ellipsoid certificate.
    Certify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Log used for disturbance bounds; unit bounds otherwise.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value = "certificate.json")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: f64,
    },
    /// Check a log against a certificate.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: f64,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = check_seed(std::env::var_os(SEED_VAR)) {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            duration,
            dt,
            plots,
            decimate,
            batch,
        } => {
            let overrides = Overrides {
                duration,
                dt,
                decimate,
                plots,
            };
            match batch {
                Some(dir) => cmd_batch(&dir, &out, &overrides),
                None => cmd_simulate(config.as_deref(), &out, &overrides),
            }
        }
        Command::Certify {
            config,
            log,
            out,
            cutoff,
        } => cmd_certify(config.as_deref(), log.as_deref(), &out, cutoff),
        Command::Analyze { log, cert, cutoff, out } => cmd_analyze(&log, &cert, cutoff, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn check_seed(value: Option<OsString>) -> Result<()> {
    let Some(v) = value else { return Ok(()) };
    let s = v.to_string_lossy();
    s.trim()
        .parse::<i64>()
        .map(|_| ())
        .map_err(|_| Error::config(SEED_VAR, format!("must be an integer, got `{s}`")))
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::DegenerateGeometry { .. }
        | Error::IllConditioned { .. }
        | Error::ConstraintDivergence { .. }
        | Error::NonFinite { .. }
        | Error::ThrustSingularity { .. }
        | Error::ZeroThrust => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Clone, Default)]
struct Overrides {
    duration: Option<f64>,
    dt: Option<f64>,
    decimate: Option<usize>,
    plots: bool,
}

fn read_document(path: Option<&Path>) -> Result<Value> {
    match path {
        None => Ok(json!({})),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config(p.display().to_string(), e.to_string()))?;
            serde_json::from_str(&text).map_err(|e| Error::config(p.display().to_string(), e.to_string()))
        }
    }
}

fn load_scenario(path: Option<&Path>, o: &Overrides) -> Result<ScenarioConfig> {
    let mut doc = read_document(path)?;
    let Some(map) = doc.as_object_mut() else {
        return Err(Error::config("", "configuration must be a JSON object"));
    };
    if let Some(d) = o.duration {
        map.insert("duration".into(), json!(d));
    }
    if let Some(dt) = o.dt {
        map.insert("dt".into(), json!(dt));
    }
    if o.decimate.is_some() || o.plots {
        let output = map.entry("output").or_insert_with(|| json!({}));
        let Some(output) = output.as_object_mut() else {
            return Err(Error::config("output", "must be an object"));
        };
        if let Some(k) = o.decimate {
            output.insert("decimate".into(), json!(k));
        }
        if o.plots {
            output.insert("plots".into(), json!(true));
        }
    }
    load_config(&doc)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub status: String,
    pub error: Option<String>,
    pub steps: usize,
    pub duration: f64,
    pub dt: f64,
    pub log_rows: usize,
    pub final_load_error: f64,
    pub max_load_error: f64,
    pub max_constraint_residual: f64,
    pub slack_samples: usize,
    pub bounds_cutoff: f64,
    pub disturbance_bounds: Option<DisturbanceBounds>,
    pub runtime_seconds: f64,
    pub config: Value,
}

fn cmd_simulate(config: Option<&Path>, out: &Path, o: &Overrides) -> Result<i32> {
    let cfg = load_scenario(config, o)?;
    let (code, message) = simulate_to_dir(&cfg, out)?;
    println!("{message}");
    Ok(code)
}

/// Runs `cfg` and writes its outputs into `out`. Returns the exit code and
/// a one-line status.
fn simulate_to_dir(cfg: &ScenarioConfig, out: &Path) -> Result<(i32, String)> {
    std::fs::create_dir_all(out)?;
    let initial = cfg.initial_state()?;
    let start = Instant::now();
    let run = simulate_partial(cfg, initial)?;
    let runtime = start.elapsed().as_secs_f64();

    let log = &run.outcome.log;
    log.write_csv(&out.join("log.csv"))?;
    let summary = summarize(cfg, log, &run.outcome.stats, run.error.as_ref(), runtime);
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    if cfg.output.plots {
        plot::write_figures(log, &out.join("plots"))?;
    }

    Ok(match run.error {
        None => (
            EXIT_OK,
            format!(
                "{}: {} steps, final |x_e| = {:.3e} m, max residual {:.3e} m",
                out.display(),
                summary.steps,
                summary.final_load_error,
                summary.max_constraint_residual
            ),
        ),
        Some(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            (code, format!("{}: stopped after {} steps", out.display(), summary.steps))
        }
    })
}

fn summarize(cfg: &ScenarioConfig, log: &SimLog, stats: &RunStats, error: Option<&Error>, runtime: f64) -> Summary {
    let last = log.records.last().map_or(0.0, |r| r.time);
    let bounds_cutoff = if last > DEFAULT_CUTOFF { DEFAULT_CUTOFF } else { 0.0 };
    Summary {
        status: if error.is_some() { "diverged" } else { "ok" }.into(),
        error: error.map(|e| e.to_string()),
        steps: stats.steps,
        duration: cfg.duration,
        dt: cfg.dt,
        log_rows: log.len(),
        final_load_error: stats.final_load_error,
        max_load_error: stats.max_load_error,
        max_constraint_residual: stats.max_constraint_residual,
        slack_samples: stats.slack_samples,
        bounds_cutoff,
        disturbance_bounds: estimate_disturbance_bounds(log, bounds_cutoff).ok(),
        runtime_seconds: runtime,
        config: cfg.to_json(),
    }
}

fn cmd_batch(dir: &Path, out: &Path, o: &Overrides) -> Result<i32> {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::config(dir.display().to_string(), e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        return Err(Error::config(dir.display().to_string(), "no *.json configurations found"));
    }
    let results: Vec<(PathBuf, Result<(i32, String)>)> = configs
        .par_iter()
        .map(|path| {
            let stem = path.file_stem().unwrap_or_default();
            let run = load_scenario(Some(path), o).and_then(|cfg| simulate_to_dir(&cfg, &out.join(stem)));
            (path.clone(), run)
        })
        .collect();

    let mut worst = EXIT_OK;
    for (path, r) in results {
        let code = match r {
            Ok((code, message)) => {
                println!("{message}");
                code
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                exit_code(&e)
            }
        };
        worst = worst.max(code);
    }
    Ok(worst)
}

/// certificate.json: the certificate itself plus the inputs it was built from.
#[derive(Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    #[serde(flatten)]
    pub certificate: CertificateDocument,
    pub feasible: bool,
    pub gains: ControllerGains,
    pub bounds: DisturbanceBounds,
    pub bounds_source: String,
    pub containment: Option<ContainmentReport>,
}

fn cmd_certify(config: Option<&Path>, log_path: Option<&Path>, out: &Path, cutoff: f64) -> Result<i32> {
    let cfg = load_scenario(config, &Overrides::default())?;
    let params = cfg.system_params()?;
    let gains = cfg.controller_gains();
    let matrices = build_error_matrices(&params, &gains)?;

    let log = log_path.map(SimLog::read_csv).transpose()?;
    let (bounds, source) = match (&log, log_path) {
        (Some(log), Some(p)) => {
            if log.vehicles != params.n() {
                return Err(Error::Dimension(format!(
                    "log has {} vehicles, configuration has {}",
                    log.vehicles,
                    params.n()
                )));
            }
            (estimate_disturbance_bounds(log, cutoff)?, format!("{} (t ≥ {cutoff} s)", p.display()))
        }
        _ => (DisturbanceBounds::uniform(params.n(), 1.0, 1.0, 1.0), "unit".to_string()),
    };

    let cert = search_certificate(&matrices, &bounds, &SearchConfig::default())?;
    let containment = log.as_ref().map(|l| containment_report(l, &cert, cutoff)).transpose()?;

    println!("certificate: feasible");
    println!("  alpha       = {:.6e} 1/s", cert.alpha);
    println!("  epsilon     = {:.6e}", cert.epsilon);
    println!("  beta        = {:.6e}", cert.beta);
    println!("  lambda_max  = {:.6e}", cert.lambda_max);
    println!("  radius β/α  = {:.6e}", cert.radius_sq);
    println!("  trace       = {:.6e}", cert.trace_metric);
    println!("  bounds      = {source}");
    if let Some(c) = &containment {
        println!("  containment = {:.2}% of {} samples after {cutoff} s", 100.0 * c.inside_fraction, c.samples);
    }

    let report = CertificateReport {
        certificate: cert.to_document(),
        feasible: cert.feasible(),
        gains,
        bounds,
        bounds_source: source,
        containment,
    };
    write_json(out, &report)?;
    Ok(EXIT_OK)
}

fn cmd_analyze(log_path: &Path, cert_path: &Path, cutoff: f64, out: Option<&Path>) -> Result<i32> {
    let log = SimLog::read_csv(log_path)?;
    let text = std::fs::read_to_string(cert_path)?;
    let doc: CertificateDocument = serde_json::from_str(&text)?;
    let cert = doc.into_certificate()?;
    let containment = containment_report(&log, &cert, cutoff)?;
    let bounds = estimate_disturbance_bounds(&log, cutoff)?;
    let report = json!({
        "log": log_path.display().to_string(),
        "certificate": cert_path.display().to_string(),
        "cutoff": cutoff,
        "containment_percent": 100.0 * containment.inside_fraction,
        "lyapunov_decrease_violation_percent": 100.0 * (1.0 - containment.decrease.satisfied_fraction),
        "disturbance_bounds": bounds,
        "containment": containment,
    });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    std::io::stdout().write_all(text.as_bytes())?;
    if let Some(p) = out {
        std::fs::write(p, &text)?;
    }
    Ok(EXIT_OK)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}
