//! `r2r`: run-to-run control experiments from the command line.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use r2r_core::harness::{run_protocol, Protocol, ProtocolOutcome, RunConfig};
use r2r_core::R2rError;
use serde_json::Value;

const TABLE1: &str = include_str!("../presets/table1.json");
const TABLE2: &str = include_str!("../presets/table2.json");
const FIGURE2: &str = include_str!("../presets/figure2.json");
const FIGURE5: &str = include_str!("../presets/figure5.json");
const THEORY: &str = include_str!("../presets/theory_check.json");

#[derive(Debug, Parser)]
#[command(
    name = "r2r",
    version,
    about = "Run-to-run process control experiments"
)]
struct Cli {
    /// Master seed; overrides the config's `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Artifact directory; falls back to the config, then `R2R_OUTPUT_DIR`.
    #[arg(long, short = 'o', global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one experiment (controller on a process) from a config file.
    Simulate {
        config: PathBuf,
        /// `key.path=value` overrides applied to the config.
        overrides: Vec<String>,
    },
    /// Run any protocol config file.
    Run {
        config: PathBuf,
        overrides: Vec<String>,
    },
    /// Model-based controller vs estimate-then-optimize on the linear CMP.
    Table1 { overrides: Vec<String> },
    /// Gradient controller vs no control on Wiener and Gamma degradation.
    Table2 { overrides: Vec<String> },
    /// Learning curves of the model-based controller vs EWMA.
    Figure2 { overrides: Vec<String> },
    /// Gradient controller vs harmonic-gain EWMA on the ARIMA process.
    Figure5 { overrides: Vec<String> },
    /// Ratio-distribution suite and estimator/bound Monte Carlo checks.
    TheoryCheck { overrides: Vec<String> },
    /// Print the version.
    Version,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<R2rError> for CliError {
    fn from(e: R2rError) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

/// Sets `a.b.c = value` in a JSON object; the value is parsed as JSON and
/// taken as a string otherwise.
fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    CliError::Config(format!("override key `{key}`: `{part}` is not an index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    CliError::Config(format!(
                        "override key `{key}`: index {idx} out of range ({len})"
                    ))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::Config(format!(
                    "override key `{key}`: `{part}` is not inside an object"
                )))
            }
        };
    }
    Ok(())
}

fn parse_config(text: &str, origin: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut doc: Value = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("{origin}: line {}: {e}", e.line())))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

fn read_config(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string(), overrides)
}

fn render_outcome(outcome: &ProtocolOutcome) -> String {
    let mut s = String::new();
    match outcome {
        ProtocolOutcome::Experiment { summary } => {
            let _ = writeln!(
                s,
                "mean MSE {:.4}  std MSE {:.4}  (n = {})",
                summary.mean_mse, summary.std_mse, summary.n
            );
        }
        ProtocolOutcome::Compare { report } => {
            for (label, b) in report.labels.iter().zip(&report.boxplots) {
                let _ = writeln!(
                    s,
                    "{label:>14}: median cost {:.3}  IQR [{:.3}, {:.3}]  outliers {}",
                    b.median, b.q1, b.q3, b.n_outliers
                );
            }
        }
        ProtocolOutcome::Table1 { rows } => {
            let _ = writeln!(
                s,
                "{:>5} {:>12} {:>12} {:>12} {:>12}",
                "N", "RL mean", "OAPE mean", "RL std", "OAPE std"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:>5} {:>12.2} {:>12.2} {:>12.2} {:>12.2}",
                    r.n, r.rl_mean, r.oape_mean, r.rl_std, r.oape_std
                );
            }
        }
        ProtocolOutcome::Table2 { rows } => {
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:>8}: no control {:.2} ({:.2})  controlled {:.2} ({:.2})  ratios {:.3} / {:.3}",
                    r.case,
                    r.baseline_mean,
                    r.baseline_std,
                    r.controlled_mean,
                    r.controlled_std,
                    r.mean_ratio,
                    r.std_ratio
                );
            }
        }
        ProtocolOutcome::TheoryCheck { report } => {
            for c in &report.theorem1.coordinates {
                let _ = writeln!(
                    s,
                    "rate {:>9}: slope {:.3} +- {:.3}, bias covers 0: {}",
                    c.name, c.slope, c.slope_se, c.bias_covers_zero
                );
            }
            let ok = report
                .theorem2
                .iter()
                .filter(|b| b.action_within_bound && b.output_within_bound)
                .count();
            let _ = writeln!(
                s,
                "bound checks within tolerance: {ok}/{}",
                report.theorem2.len()
            );
            for a in &report.approx {
                let _ = writeln!(
                    s,
                    "snr {:>4}: sup|F - F*| {:.3e} vs bound {:.3e} ({}), KS {:.2e}, pdf mass {:.8}",
                    a.snr,
                    a.sup_gap,
                    a.bound,
                    if a.within_bound { "within" } else { "EXCEEDED" },
                    a.ks_distance,
                    a.pdf_mass
                );
            }
        }
    }
    s
}

fn execute(
    mut cfg: RunConfig,
    cli: &Cli,
    name: &str,
    require_experiment: bool,
) -> Result<(), CliError> {
    if require_experiment && !matches!(cfg.protocol, Protocol::Experiment(_)) {
        return Err(CliError::Config(
            "simulate expects a config whose protocol kind is `experiment`".into(),
        ));
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.output_dir = cli
        .output_dir
        .clone()
        .or(cfg.output_dir.take())
        .or_else(|| std::env::var_os("R2R_OUTPUT_DIR").map(|d| PathBuf::from(d).join(name)))
        .or_else(|| Some(PathBuf::from("r2r-output").join(name)));
    let outcome = run_protocol(&cfg)?;
    let mut text = render_outcome(&outcome);
    if let Some(d) = &cfg.output_dir {
        let _ = writeln!(text, "artifacts: {}", d.display());
    }
    // a closed stdout (e.g. piped into `head`) must not abort a finished run
    let _ = io::stdout().write_all(text.as_bytes());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let preset = |text: &str, name: &str, overrides: &[String]| -> Result<(), CliError> {
        execute(
            parse_config(text, &format!("preset {name}"), overrides)?,
            cli,
            name,
            false,
        )
    };
    match &cli.command {
        Command::Simulate { config, overrides } => {
            execute(read_config(config, overrides)?, cli, "simulate", true)
        }
        Command::Run { config, overrides } => {
            execute(read_config(config, overrides)?, cli, "run", false)
        }
        Command::Table1 { overrides } => preset(TABLE1, "table1", overrides),
        Command::Table2 { overrides } => preset(TABLE2, "table2", overrides),
        Command::Figure2 { overrides } => preset(FIGURE2, "figure2", overrides),
        Command::Figure5 { overrides } => preset(FIGURE5, "figure5", overrides),
        Command::TheoryCheck { overrides } => preset(THEORY, "theory-check", overrides),
        Command::Version => {
            println!("r2r {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            error!("configuration error");
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
