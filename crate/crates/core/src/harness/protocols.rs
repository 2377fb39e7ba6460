use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{
    boxplot_header, boxplot_rows, fmt_float, run_experiment, write_json, ExperimentConfig,
    ExperimentOutcome,
};
use super::stats::{boxplot, BoxplotStats};
use crate::error::{R2rError, Result};
use crate::estimation::RatioMoments;
use crate::rng::derive_seed;
use crate::theory::{
    theorem1_rate_check, theorem2_bound_check, BoundReport, RateReport, RatioDistribution,
    Theorem1Config, Theorem2Config,
};

/// Paired comparison of several controllers on identical seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub labels: Vec<String>,
    /// `costs[k][r]`: mean evaluation cost of controller `k` in replication `r`.
    pub costs: Vec<Vec<f64>>,
    pub boxplots: Vec<BoxplotStats>,
    /// Per-controller median path cost for each path index (learning curves).
    pub median_by_path: Vec<Vec<f64>>,
}

fn same_protocol(a: &ExperimentConfig, b: &ExperimentConfig) -> Result<()> {
    if a.process.family() != b.process.family() {
        return Err(R2rError::Config(format!(
            "process families differ: {} vs {}",
            a.process.family(),
            b.process.family()
        )));
    }
    if a.y_star != b.y_star || a.master_seed != b.master_seed || a.replications != b.replications {
        return Err(R2rError::Config(
            "compared experiments must share y_star, master_seed and replications".into(),
        ));
    }
    Ok(())
}

pub fn compare_controllers(
    configs: &[ExperimentConfig],
) -> Result<(ComparisonReport, Vec<ExperimentOutcome>)> {
    let first = configs
        .first()
        .ok_or_else(|| R2rError::Config("nothing to compare".into()))?;
    for c in &configs[1..] {
        same_protocol(first, c)?;
    }
    let outcomes = configs
        .iter()
        .map(run_experiment)
        .collect::<Result<Vec<_>>>()?;
    let costs: Vec<Vec<f64>> = outcomes.iter().map(|o| o.replication_costs()).collect();
    let median_by_path = outcomes
        .iter()
        .map(|o| {
            let n = o.replications[0].path_costs.len();
            (0..n)
                .map(|p| {
                    let xs: Vec<f64> = o.replications.iter().map(|r| r.path_costs[p]).collect();
                    boxplot(&xs).median
                })
                .collect()
        })
        .collect();
    Ok((
        ComparisonReport {
            labels: outcomes.iter().map(|o| o.label.clone()).collect(),
            boxplots: costs.iter().map(|c| boxplot(c)).collect(),
            costs,
            median_by_path,
        },
        outcomes,
    ))
}

pub fn write_comparison(
    report: &ComparisonReport,
    outcomes: &[ExperimentOutcome],
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut s = String::from("replication");
    for l in &report.labels {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    for r in 0..report.costs[0].len() {
        let _ = write!(s, "{r}");
        for c in &report.costs {
            let _ = write!(s, ",{}", fmt_float(c[r]));
        }
        s.push('\n');
    }
    fs::write(dir.join("comparison.csv"), s)?;
    let mut b = boxplot_header().to_string();
    for o in outcomes {
        b.push_str(&boxplot_rows(o));
    }
    fs::write(dir.join("comparison_boxplot.csv"), b)?;
    write_json(&dir.join("comparison.json"), report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Config {
    pub rl: ExperimentConfig,
    pub oape: ExperimentConfig,
    pub n_grid: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub n: usize,
    pub rl_mean: f64,
    pub oape_mean: f64,
    pub rl_std: f64,
    pub oape_std: f64,
}

pub fn table1(
    cfg: &Table1Config,
    master_seed: u64,
    output_dir: Option<&Path>,
) -> Result<Vec<Table1Row>> {
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        let run = |base: &ExperimentConfig, tag: &str| -> Result<ExperimentOutcome> {
            let mut c = base.clone();
            c.n_learning_paths = n;
            c.master_seed = master_seed;
            c.output_dir = output_dir.map(|d| d.join(format!("{tag}_n{n}")));
            run_experiment(&c)
        };
        let rl = run(&cfg.rl, "rl")?;
        let oape = run(&cfg.oape, "oape")?;
        rows.push(Table1Row {
            n,
            rl_mean: rl.summary.mean_mse,
            oape_mean: oape.summary.mean_mse,
            rl_std: rl.summary.std_mse,
            oape_std: oape.summary.std_mse,
        });
    }
    if let Some(dir) = output_dir {
        fs::create_dir_all(dir)?;
        let mut s = String::from("n,rl_mean_mse,oape_mean_mse,rl_std_mse,oape_std_mse\n");
        for r in &rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.n,
                fmt_float(r.rl_mean),
                fmt_float(r.oape_mean),
                fmt_float(r.rl_std),
                fmt_float(r.oape_std)
            );
        }
        fs::write(dir.join("table1.csv"), s)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2Case {
    pub name: String,
    pub baseline: ExperimentConfig,
    pub controlled: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2Config {
    pub cases: Vec<Table2Case>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub case: String,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub controlled_mean: f64,
    pub controlled_std: f64,
    pub mean_ratio: f64,
    pub std_ratio: f64,
    /// Share of controlled periods with `|error ratio| < 0.1`.
    pub share_within_tenth: f64,
}

pub fn table2(
    cfg: &Table2Config,
    master_seed: u64,
    output_dir: Option<&Path>,
) -> Result<Vec<Table2Row>> {
    let mut rows = Vec::new();
    for case in &cfg.cases {
        let run = |base: &ExperimentConfig, tag: &str| -> Result<ExperimentOutcome> {
            let mut c = base.clone();
            c.master_seed = master_seed;
            c.output_dir = output_dir.map(|d| d.join(format!("{}_{tag}", case.name)));
            run_experiment(&c)
        };
        let base = run(&case.baseline, "baseline")?;
        let ctrl = run(&case.controlled, "controlled")?;
        let ratios: Vec<f64> = ctrl
            .evaluation_runs()
            .flat_map(|r| r.error_ratios.iter().flatten().copied())
            .collect();
        let within =
            ratios.iter().filter(|r| r.abs() < 0.1).count() as f64 / ratios.len().max(1) as f64;
        rows.push(Table2Row {
            case: case.name.clone(),
            baseline_mean: base.summary.mean_mse,
            baseline_std: base.summary.std_mse,
            controlled_mean: ctrl.summary.mean_mse,
            controlled_std: ctrl.summary.std_mse,
            mean_ratio: ctrl.summary.mean_mse / base.summary.mean_mse,
            std_ratio: ctrl.summary.std_mse / base.summary.std_mse,
            share_within_tenth: within,
        });
    }
    if let Some(dir) = output_dir {
        fs::create_dir_all(dir)?;
        let mut s = String::from(
            "case,baseline_mean_mse,baseline_std_mse,controlled_mean_mse,controlled_std_mse,mean_ratio,std_ratio\n",
        );
        for r in &rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.case,
                fmt_float(r.baseline_mean),
                fmt_float(r.baseline_std),
                fmt_float(r.controlled_mean),
                fmt_float(r.controlled_std),
                fmt_float(r.mean_ratio),
                fmt_float(r.std_ratio)
            );
        }
        fs::write(dir.join("table2.csv"), s)?;
    }
    Ok(rows)
}

fn default_trials() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryCheckConfig {
    pub theorem1: Theorem1Config,
    pub theorem1_n_grid: Vec<usize>,
    pub theorem1_replications: usize,
    pub theorem2_battery: Vec<Theorem2Config>,
    pub etas: Vec<f64>,
    #[serde(default = "default_trials")]
    pub theorem2_trials: usize,
    /// Denominator signal-to-noise ratios `mu2 / sigma2` for the
    /// normal-approximation sweep.
    pub approx_snr: Vec<f64>,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    /// Monte Carlo draws for the KS distance of each swept distribution.
    #[serde(default = "default_ks_draws")]
    pub ks_draws: usize,
}

fn default_ks_draws() -> usize {
    1_000_000
}

/// Slack allowed on top of the analytic approximation bound.
pub const APPROX_TOLERANCE: f64 = 1e-6;

fn default_grid() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxSweep {
    pub snr: f64,
    pub moments: RatioMoments,
    pub sup_gap: f64,
    pub bound: f64,
    /// `sup_gap <= bound + APPROX_TOLERANCE`.
    pub within_bound: bool,
    pub pdf_mass: f64,
    /// KS distance of `cdf` to `ks_draws` Monte Carlo draws.
    pub ks_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub theorem1: RateReport,
    pub theorem2: Vec<BoundReport>,
    pub approx: Vec<ApproxSweep>,
}

/// The moment set used for a given `mu2 / sigma2` in the sweep.
pub fn sweep_moments(snr: f64) -> Result<RatioMoments> {
    RatioMoments::from_correlation(2.0 * snr, snr, 1.0, 1.0, 0.3)
}

/// Evaluation grid: `n` points over the central 99.8% of the ratio's mass,
/// located by bisection on the CDF.
pub fn sweep_grid(dist: &RatioDistribution, n: usize) -> Vec<f64> {
    let m = dist.moments;
    let center = m.mu1 / m.mu2;
    let find = |p: f64| {
        let (mut lo, mut hi) = (center - 1.0, center + 1.0);
        while dist.cdf(lo) > p {
            lo = center - 2.0 * (center - lo);
        }
        while dist.cdf(hi) < p {
            hi = center + 2.0 * (hi - center);
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if dist.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let (a, b) = (find(0.001), find(0.999));
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn theory_check(
    cfg: &TheoryCheckConfig,
    seed: u64,
    output_dir: Option<&Path>,
) -> Result<TheoryReport> {
    let theorem1 = theorem1_rate_check(
        &cfg.theorem1,
        &cfg.theorem1_n_grid,
        cfg.theorem1_replications,
        derive_seed(seed, 0, "theorem1"),
    )?;
    let mut theorem2 = Vec::new();
    for (i, c) in cfg.theorem2_battery.iter().enumerate() {
        for &eta in &cfg.etas {
            theorem2.push(theorem2_bound_check(
                c,
                eta,
                cfg.theorem2_trials,
                derive_seed(seed, i as u64, "theorem2"),
            )?);
        }
    }
    let mut grid_csv = String::from("snr,u,cdf,cdf_normal_approx,pdf\n");
    let approx = cfg
        .approx_snr
        .iter()
        .enumerate()
        .map(|(i, &snr)| -> Result<ApproxSweep> {
            let moments = sweep_moments(snr)?;
            let dist = RatioDistribution::new(moments)?;
            let grid = sweep_grid(&dist, cfg.grid_points.max(2));
            let rows: Vec<(f64, f64, f64, f64)> = grid
                .par_iter()
                .map(|&u| (u, dist.cdf(u), dist.cdf_normal_approx(u), dist.pdf(u)))
                .collect();
            let sup_gap = rows.iter().map(|r| (r.1 - r.2).abs()).fold(0.0, f64::max);
            for r in &rows {
                let _ = writeln!(
                    grid_csv,
                    "{},{},{},{},{}",
                    fmt_float(snr),
                    fmt_float(r.0),
                    fmt_float(r.1),
                    fmt_float(r.2),
                    fmt_float(r.3)
                );
            }
            let bound = dist.approx_error_bound();
            Ok(ApproxSweep {
                snr,
                moments,
                sup_gap,
                bound,
                within_bound: sup_gap <= bound + APPROX_TOLERANCE,
                pdf_mass: dist.pdf_total_mass(),
                ks_distance: dist.ks_distance(cfg.ks_draws, derive_seed(seed, i as u64, "ks")),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = TheoryReport {
        theorem1,
        theorem2,
        approx,
    };
    if let Some(dir) = output_dir {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("theory_report.json"), &report)?;
        fs::write(dir.join("ratio_grid.csv"), grid_csv)?;
    }
    Ok(report)
}

/// One experiment protocol, as stored in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    Experiment(Box<ExperimentConfig>),
    Compare { experiments: Vec<ExperimentConfig> },
    Table1(Box<Table1Config>),
    Table2(Table2Config),
    TheoryCheck(Box<TheoryCheckConfig>),
}

/// Top-level config file: a protocol plus the seed and output location that
/// override those of any nested experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub description: Option<String>,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub protocol: Protocol,
}

/// Result of [`run_protocol`], serialized into `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolOutcome {
    Experiment { summary: super::SummaryStats },
    Compare { report: ComparisonReport },
    Table1 { rows: Vec<Table1Row> },
    Table2 { rows: Vec<Table2Row> },
    TheoryCheck { report: Box<TheoryReport> },
}

pub fn run_protocol(cfg: &RunConfig) -> Result<ProtocolOutcome> {
    let dir = cfg.output_dir.as_deref();
    let seed = cfg.master_seed;
    let outcome = match &cfg.protocol {
        Protocol::Experiment(e) => {
            let mut e = (**e).clone();
            e.master_seed = seed;
            e.output_dir = dir.map(Path::to_path_buf);
            ProtocolOutcome::Experiment {
                summary: run_experiment(&e)?.summary,
            }
        }
        Protocol::Compare { experiments } => {
            let configs: Vec<ExperimentConfig> = experiments
                .iter()
                .map(|e| {
                    let mut e = e.clone();
                    e.master_seed = seed;
                    e.output_dir = dir.map(|d| d.join(e.label()));
                    e
                })
                .collect();
            let (report, outcomes) = compare_controllers(&configs)?;
            if let Some(d) = dir {
                write_comparison(&report, &outcomes, d)?;
            }
            ProtocolOutcome::Compare { report }
        }
        Protocol::Table1(t) => ProtocolOutcome::Table1 {
            rows: table1(t, seed, dir)?,
        },
        Protocol::Table2(t) => ProtocolOutcome::Table2 {
            rows: table2(t, seed, dir)?,
        },
        Protocol::TheoryCheck(t) => ProtocolOutcome::TheoryCheck {
            report: Box::new(theory_check(t, seed, dir)?),
        },
    };
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
        if !matches!(cfg.protocol, Protocol::Experiment(_)) {
            write_json(
                &d.join("summary.json"),
                &serde_json::json!({
                    "master_seed": seed,
                    "description": cfg.description,
                    "outcome": outcome,
                }),
            )?;
        }
    }
    Ok(outcome)
}
