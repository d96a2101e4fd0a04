//! Command-line front end. Every command writes CSV/JSON files into `--out` plus a
//! `manifest.json` echoing the full configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::allocator::{solve_scheme, AllocError, PowerAllocation, RobustConfig, Scheme};
use crate::montecarlo::{
    median, rate_cdf, rse_samples, sweep, ChannelKind, Cdf, ErrorKind, ErrorModel, CDF_POINTS,
};
use crate::scenario::Scenario;

pub const THREADS_ENV: &str = "VLPC_THREADS";

pub const RATE_CDF_HEADER: &str = "rate_mbps,cdf";
pub const SWEEP_HEADER: &str = "rate_mbps,scheme,sqrt_crlb_m,p_c_w,sum_p_p_w,status";
pub const POSITIONING_HEADER: &str = "rse_m,cdf";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vlpc", version, about = "Robust VLPC power allocation and Monte Carlo evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct Target {
    /// perfect (alias nonrobust), bernstein or cvar.
    #[arg(long, default_value = "bernstein")]
    scheme: Scheme,
    /// Rate threshold, e.g. 200Mbps or 2e8.
    #[arg(long, value_parser = parse_rate)]
    rate: f64,
    /// Outage probability.
    #[arg(long, default_value_t = 0.01)]
    pout: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one allocation program.
    Solve {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo rate CDF and outage of an allocation.
    Evaluate {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// los or los_diffuse.
        #[arg(long, default_value = "los")]
        channel: ChannelKind,
        /// gaussian, uniform_ellipse or two_point_mixture.
        #[arg(long, default_value = "gaussian")]
        error_model: ErrorKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// √CRLB, P_c and ΣP_p over a rate grid.
    Sweep {
        #[arg(long, default_value = "bernstein")]
        scheme: Scheme,
        #[arg(long, value_parser = parse_rate)]
        rate_min: f64,
        #[arg(long, value_parser = parse_rate)]
        rate_max: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 0.01)]
        pout: f64,
        #[command(flatten)]
        common: Common,
    },
    /// RSS triangulation error CDF under an allocation's pilot powers.
    Positioning {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Write the built-in scenario for 3 to 6 LEDs.
    Scenario {
        #[arg(long, default_value_t = 4)]
        leds: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses a rate in bit/s with an optional bps/kbps/Mbps/Gbps suffix.
pub fn parse_rate(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    let (num, scale) = [("gbps", 1e9), ("mbps", 1e6), ("kbps", 1e3), ("bps", 1.0)]
        .iter()
        .find_map(|&(suffix, scale)| lower.strip_suffix(suffix).map(|n| (n.trim().to_string(), scale)))
        .unwrap_or((lower.clone(), 1.0));
    let v: f64 = num.parse().map_err(|_| format!("invalid rate {t:?}"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("rate must be positive, got {t:?}"));
    }
    Ok(v * scale)
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Infeasible(String),
    Runtime(String),
}

impl From<AllocError> for Failure {
    fn from(e: AllocError) -> Self {
        match e {
            AllocError::Infeasible { .. } => Failure::Infeasible(e.to_string()),
            AllocError::Config(_) | AllocError::Scenario(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

/// Runs the CLI on `argv` (program name first) and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            EXIT_INFEASIBLE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INFEASIBLE
        }
    }
}

fn configure_threads() {
    let Some(v) = std::env::var_os(THREADS_ENV) else {
        return;
    };
    match v.to_str().and_then(|s| s.parse::<usize>().ok()) {
        Some(n) if n > 0 => {
            // Fails harmlessly when the global pool already exists.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring {THREADS_ENV}={v:?}"),
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let s = Scenario::from_path(&common.scenario).map_err(|e| Failure::Usage(e.to_string()))?;
    fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
    Ok(s)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<V: Serialize>(path: &Path, v: &V) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Failure::Runtime(e.to_string()))?;
    text.push('\n');
    write(path, &text)
}

fn manifest(
    common: &Common,
    s: &Scenario,
    command: &str,
    config: serde_json::Value,
    results: serde_json::Value,
    outputs: &[&str],
) -> Result<(), Failure> {
    let m = json!({
        "tool": "vlpc",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "scenario": s.to_file(),
        "results": results,
        "outputs": outputs,
    });
    write_json(&common.out.join("manifest.json"), &m)
}

fn cdf_csv(header: &str, cdf: &Cdf, scale: f64) -> String {
    let mut out = String::with_capacity(cdf.values.len() * 24);
    out.push_str(header);
    out.push('\n');
    for (v, p) in cdf.values.iter().zip(&cdf.probs) {
        let _ = writeln!(out, "{},{}", v * scale, p);
    }
    out
}

fn robust_config(target: &Target) -> Result<RobustConfig, Failure> {
    let cfg = RobustConfig::new(target.rate, target.pout);
    cfg.validate()?;
    Ok(cfg)
}

fn allocate(s: &Scenario, target: &Target) -> Result<PowerAllocation, Failure> {
    let cfg = robust_config(target)?;
    let alloc = solve_scheme(s, target.scheme, &cfg)?;
    if let Some(w) = alloc.warning {
        eprintln!("warning: SCA stopped early ({w:?})");
    }
    Ok(alloc)
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Solve { target, common } => {
            let s = load(&common)?;
            let alloc = allocate(&s, &target)?;
            write_json(&common.out.join("allocation.json"), &alloc)?;
            manifest(
                &common,
                &s,
                "solve",
                json!({ "target": target }),
                json!({ "sqrt_crlb_m": alloc.sqrt_crlb(), "p_c_w": alloc.p_c, "sum_p_p_w": alloc.sum_p_p() }),
                &["allocation.json"],
            )
        }
        Command::Evaluate {
            target,
            n,
            channel,
            error_model,
            seed,
            common,
        } => {
            let s = load(&common)?;
            let alloc = allocate(&s, &target)?;
            let model = ErrorModel::for_allocation(&s, &alloc, error_model)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let r = rate_cdf(&s, &alloc, &model, n, channel, seed, target.rate)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            write(&common.out.join("rate_cdf.csv"), &cdf_csv(RATE_CDF_HEADER, &r.cdf, 1e-6))?;
            write_json(&common.out.join("allocation.json"), &alloc)?;
            manifest(
                &common,
                &s,
                "evaluate",
                json!({
                    "target": target,
                    "n": n,
                    "channel": channel.to_string(),
                    "error_model": error_model.to_string(),
                    "seed": seed,
                    "cdf_points": CDF_POINTS,
                }),
                json!({ "outage": r.outage, "rate_threshold_bps": r.rate_threshold }),
                &["rate_cdf.csv", "allocation.json"],
            )
        }
        Command::Sweep {
            scheme,
            rate_min,
            rate_max,
            steps,
            pout,
            common,
        } => {
            if steps == 0 || rate_max < rate_min {
                return Err(Failure::Usage(
                    "sweep needs --steps ≥ 1 and --rate-max ≥ --rate-min".into(),
                ));
            }
            let s = load(&common)?;
            let cfg = RobustConfig::new(rate_min, pout);
            cfg.validate()?;
            let grid: Vec<f64> = if steps == 1 {
                vec![rate_min]
            } else {
                (0..steps)
                    .map(|k| rate_min + (rate_max - rate_min) * k as f64 / (steps - 1) as f64)
                    .collect()
            };
            let rows = sweep(&s, scheme, &grid, &cfg);
            let mut csv = String::from(SWEEP_HEADER);
            csv.push('\n');
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.rate_bps * 1e-6,
                    r.scheme,
                    r.sqrt_crlb_m,
                    r.p_c_w,
                    r.sum_p_p_w,
                    r.status.replace(',', ";")
                );
            }
            write(&common.out.join("sweep.csv"), &csv)?;
            let infeasible = rows.iter().filter(|r| r.status != "ok").count();
            manifest(
                &common,
                &s,
                "sweep",
                json!({
                    "scheme": scheme,
                    "rate_min_bps": rate_min,
                    "rate_max_bps": rate_max,
                    "steps": steps,
                    "pout": pout,
                }),
                json!({ "rows": rows.len(), "not_ok": infeasible }),
                &["sweep.csv"],
            )
        }
        Command::Positioning {
            target,
            n,
            seed,
            common,
        } => {
            let s = load(&common)?;
            let alloc = allocate(&s, &target)?;
            let r = rse_samples(&s, &alloc.p_p, n, seed);
            if r.failures > 0 {
                eprintln!("warning: {} of {n} trials could not be triangulated", r.failures);
            }
            let cdf = Cdf::from_samples(&r.rse, CDF_POINTS).map_err(|e| Failure::Runtime(e.to_string()))?;
            write(&common.out.join("positioning.csv"), &cdf_csv(POSITIONING_HEADER, &cdf, 1.0))?;
            manifest(
                &common,
                &s,
                "positioning",
                json!({ "target": target, "n": n, "seed": seed, "cdf_points": CDF_POINTS }),
                json!({
                    "median_rse_m": median(&r.rse),
                    "sqrt_crlb_m": alloc.sqrt_crlb(),
                    "failures": r.failures,
                }),
                &["positioning.csv"],
            )
        }
        Command::Scenario { leds, out } => {
            let s = Scenario::builtin(leds).map_err(|e| Failure::Usage(e.to_string()))?;
            let text = serde_json::to_string_pretty(&s.to_file()).map_err(|e| Failure::Runtime(e.to_string()))?;
            match out {
                Some(path) => write(&path, &format!("{text}\n")),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
    }
}
