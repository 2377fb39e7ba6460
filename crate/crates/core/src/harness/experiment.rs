use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{error_ratio_series, mse, total_cost};
use super::stats::{boxplot, SummaryStats};
use crate::controllers::{build_controller, ControllerConfig, ControllerKind};
use crate::error::{R2rError, Result};
use crate::process_models::{simulate_path, ProcessConfig, SamplePath};
use crate::rng::derive_seed;

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name used for artifact directories and comparison columns.
    #[serde(default)]
    pub label: Option<String>,
    pub process: ProcessConfig,
    pub controller: ControllerKind,
    #[serde(default)]
    pub controller_config: ControllerConfig,
    /// Sample paths per replication: learning controllers are evaluated on
    /// path `N`; OAPE uses `N` randomly actioned paths for its single fit.
    #[serde(default = "one")]
    pub n_learning_paths: usize,
    /// Paths evaluated per replication, starting at path `N`.
    #[serde(default = "one")]
    pub evaluation_paths: usize,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub y_star: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            serde_json::to_value(self.controller)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_else(|| "experiment".into())
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(R2rError::invalid("replications", "must be >= 1"));
        }
        if self.n_learning_paths == 0 || self.evaluation_paths == 0 {
            return Err(R2rError::invalid("n_learning_paths", "paths must be >= 1"));
        }
        self.controller_config.validate()?;
        let model = self.process.build()?;
        if self.y_star.len() != model.output_dim() {
            return Err(R2rError::Dimension {
                what: "y_star",
                expected: model.output_dim(),
                got: self.y_star.len(),
            });
        }
        Ok(())
    }

    /// Paths simulated per replication.
    pub fn paths_per_replication(&self) -> usize {
        let warmup = match self.controller {
            ControllerKind::Oape => 0,
            _ => self.n_learning_paths - 1,
        };
        warmup + self.evaluation_paths
    }

    fn first_evaluated(&self) -> usize {
        self.paths_per_replication() - self.evaluation_paths
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub path: SamplePath,
    pub total_cost: f64,
    pub mse: f64,
    /// `error_ratios[j][t - 1]`; empty when a target coordinate is zero.
    pub error_ratios: Vec<Vec<f64>>,
    pub diagnostics: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    /// Cost of every path in order, learning paths included.
    pub path_costs: Vec<f64>,
    pub evaluation: Vec<RunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub label: String,
    pub master_seed: u64,
    pub summary: SummaryStats,
    pub replications: Vec<ReplicationResult>,
}

impl ExperimentOutcome {
    pub fn evaluation_runs(&self) -> impl Iterator<Item = &RunResult> {
        self.replications.iter().flat_map(|r| r.evaluation.iter())
    }

    /// Mean evaluation cost per replication.
    pub fn replication_costs(&self) -> Vec<f64> {
        self.replications
            .iter()
            .map(|r| {
                r.evaluation.iter().map(|e| e.total_cost).sum::<f64>() / r.evaluation.len() as f64
            })
            .collect()
    }
}

pub fn replication_seed(master: u64, replication: usize) -> u64 {
    derive_seed(master, replication as u64, "replication")
}

fn run_replication(cfg: &ExperimentConfig, replication: usize) -> Result<ReplicationResult> {
    let seed = replication_seed(cfg.master_seed, replication);
    let mut controller = build_controller(
        cfg.controller,
        &cfg.controller_config,
        &cfg.process,
        &cfg.y_star,
        cfg.n_learning_paths,
        derive_seed(seed, 0, "controller-build"),
    )?;
    let mut model = cfg.process.build()?;
    let n_paths = cfg.paths_per_replication();
    let first_eval = cfg.first_evaluated();
    let mut path_costs = Vec::with_capacity(n_paths);
    let mut evaluation = Vec::with_capacity(cfg.evaluation_paths);
    for i in 0..n_paths {
        let path = simulate_path(
            model.as_mut(),
            controller.as_mut(),
            derive_seed(seed, i as u64, "path"),
        )?;
        let cost = total_cost(&path, &cfg.y_star)?;
        path_costs.push(cost);
        if i >= first_eval {
            evaluation.push(RunResult {
                total_cost: cost,
                mse: mse(&path, &cfg.y_star)?,
                error_ratios: error_ratio_series(&path, &cfg.y_star).unwrap_or_default(),
                diagnostics: controller.diagnostics(),
                path,
            });
        }
    }
    Ok(ReplicationResult {
        replication,
        seed,
        path_costs,
        evaluation,
    })
}

/// Runs every replication (in parallel, reduced in index order) and writes
/// artifacts when `output_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    info!(
        "{}: {} replications x {} paths",
        cfg.label(),
        cfg.replications,
        cfg.paths_per_replication()
    );
    let replications = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<&RunResult> = replications
        .iter()
        .flat_map(|r| r.evaluation.iter())
        .collect();
    let mses: Vec<f64> = runs.iter().map(|r| r.mse).collect();
    let costs: Vec<f64> = runs.iter().map(|r| r.total_cost).collect();
    let outcome = ExperimentOutcome {
        label: cfg.label(),
        master_seed: cfg.master_seed,
        summary: SummaryStats::from_runs(&mses, &costs),
        replications,
    };
    if let Some(dir) = &cfg.output_dir {
        write_artifacts(cfg, &outcome, dir)?;
    }
    Ok(outcome)
}

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn paths_csv(cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> String {
    let model = cfg.process.build().expect("validated process");
    let (n, m) = (model.control_dim(), model.output_dim());
    let mut s = String::from("replication,path,t");
    for i in 1..=n {
        let _ = write!(s, ",u_{i}");
    }
    for j in 1..=m {
        let _ = write!(s, ",y_{j}");
    }
    s.push_str(",d\n");
    let first = cfg.first_evaluated();
    for rep in &outcome.replications {
        for (k, run) in rep.evaluation.iter().enumerate() {
            for r in &run.path.periods {
                let _ = write!(s, "{},{},{}", rep.replication, first + k + 1, r.t);
                for v in r.u.iter().chain(r.y.iter()) {
                    let _ = write!(s, ",{}", fmt_float(*v));
                }
                let d = r.d.map(fmt_float).unwrap_or_default();
                let _ = writeln!(s, ",{d}");
            }
        }
    }
    s
}

pub(crate) fn boxplot_header() -> &'static str {
    "label,path,q1,median,q3,whisker_low,whisker_high,n_outliers\n"
}

/// One boxplot row per path index, over replications.
pub(crate) fn boxplot_rows(outcome: &ExperimentOutcome) -> String {
    let n_paths = outcome
        .replications
        .first()
        .map_or(0, |r| r.path_costs.len());
    let mut s = String::new();
    for p in 0..n_paths {
        let costs: Vec<f64> = outcome
            .replications
            .iter()
            .map(|r| r.path_costs[p])
            .collect();
        let b = boxplot(&costs);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            outcome.label,
            p + 1,
            fmt_float(b.q1),
            fmt_float(b.median),
            fmt_float(b.q3),
            fmt_float(b.whisker_low),
            fmt_float(b.whisker_high),
            b.n_outliers
        );
    }
    s
}

fn learning_cost_csv(outcome: &ExperimentOutcome) -> String {
    let mut s = String::from("replication,path,total_cost\n");
    for rep in &outcome.replications {
        for (p, c) in rep.path_costs.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", rep.replication, p + 1, fmt_float(*c));
        }
    }
    s
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn write_artifacts(
    cfg: &ExperimentConfig,
    outcome: &ExperimentOutcome,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir.join("audit"))?;
    fs::write(dir.join("paths.csv"), paths_csv(cfg, outcome))?;
    fs::write(
        dir.join("boxplot.csv"),
        format!("{}{}", boxplot_header(), boxplot_rows(outcome)),
    )?;
    fs::write(dir.join("learning_cost.csv"), learning_cost_csv(outcome))?;
    let per_rep: Vec<serde_json::Value> = outcome
        .replications
        .iter()
        .map(|r| {
            serde_json::json!({
                "replication": r.replication,
                "seed": r.seed,
                "mse": r.evaluation.iter().map(|e| e.mse).collect::<Vec<_>>(),
                "total_cost": r.evaluation.iter().map(|e| e.total_cost).collect::<Vec<_>>(),
            })
        })
        .collect();
    // the artifact location is not an input; leaving it out keeps runs into
    // different directories byte-identical
    let recorded = ExperimentConfig {
        output_dir: None,
        ..cfg.clone()
    };
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({
            "label": outcome.label,
            "master_seed": outcome.master_seed,
            "summary": outcome.summary,
            "replications": per_rep,
            "config": recorded,
        }),
    )?;
    for rep in &outcome.replications {
        let audit: Vec<&serde_json::Value> =
            rep.evaluation.iter().map(|e| &e.diagnostics).collect();
        write_json(
            &dir.join("audit").join(format!("{}.json", rep.replication)),
            &audit,
        )?;
    }
    Ok(())
}
