//! Control policies behind one stateful [`Controller`] contract.
//!
//! A controller sees `y_{t-1}`, executes one or more runs for period `t`
//! through a [`PeriodProbe`], and keeps whatever it learned for the next
//! sample path. Nothing here ever reads an output before it was produced.

mod ewma;
mod model_based;
mod pgs;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{R2rError, Result};
use crate::process_models::{ControlVector, OutputVector, PeriodProbe, ProcessConfig, SamplePath};
use crate::rng::{stream, StreamRng};

pub use ewma::{EwmaController, GhrController, GhrParams};
pub use model_based::{
    oape_fit, optimize_action, rl_alg1_action_optimize, ActionSolution, ApproxFamily, ApproxModel,
    ModelBasedController, OapeController,
};
pub use pgs::{DivergencePolicy, OfflineStore, PgsController, PgsOptions};

pub trait Controller: Send {
    fn name(&self) -> &'static str;
    fn control_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Called before period 1 of every sample path; `seed` drives any
    /// exploration noise the controller uses on this path.
    fn begin_path(&mut self, y0: &OutputVector, seed: u64) -> Result<()>;

    /// Executes at least one run for period `t`; the last one is recorded.
    fn control_period(
        &mut self,
        t: usize,
        y_prev: &OutputVector,
        probe: &mut PeriodProbe,
    ) -> Result<()>;

    /// The recorded `(u_t, y_t)` of period `t`.
    fn observe(&mut self, _t: usize, _u: &ControlVector, _y: &OutputVector) -> Result<()> {
        Ok(())
    }

    fn end_path(&mut self, _path: &SamplePath) -> Result<()> {
        Ok(())
    }

    /// Per-path audit data (inner iterations, convergence flags, fits).
    fn diagnostics(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Constant action `u_init` (zero by default).
    NoControl,
    /// Mean-optimal action computed from the true process parameters.
    Oracle,
    Ewma,
    Ghr,
    /// Learn-by-doing: refit, re-optimize and re-execute within each period.
    ModelBased,
    /// Fit once on randomly actioned paths, then control with the frozen fit.
    Oape,
    Pgs,
}

/// Random actions used to generate passive (offline) data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomActionSpec {
    /// Per-coordinate mean; empty means zero.
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default = "one")]
    pub sd: f64,
}

impl Default for RandomActionSpec {
    fn default() -> Self {
        Self {
            center: Vec::new(),
            sd: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_threshold() -> f64 {
    1e-2
}
fn default_alpha() -> f64 {
    0.05
}
fn default_inner() -> usize {
    20
}
fn default_lambda() -> f64 {
    0.3
}
fn default_lower() -> f64 {
    -1e6
}
fn default_upper() -> f64 {
    1e6
}
fn default_true() -> bool {
    true
}

/// Hyperparameters shared by all controllers; each reads the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// Parameter-convergence threshold.
    #[serde(default = "default_threshold")]
    pub epsilon: f64,
    /// Action-convergence threshold.
    #[serde(default = "default_threshold")]
    pub eta: f64,
    #[serde(default = "default_alpha")]
    pub alpha_step: f64,
    #[serde(default = "default_inner")]
    pub max_inner_iters: usize,
    #[serde(default = "default_lambda")]
    pub lambda_ewma: f64,
    #[serde(default)]
    pub ghr_params: GhrParams,
    #[serde(default)]
    pub u_init: Option<Vec<f64>>,
    #[serde(default = "default_lower")]
    pub action_lower: f64,
    #[serde(default = "default_upper")]
    pub action_upper: f64,
    /// Standard deviation of exploration noise added to the warm-start run
    /// of each period (model-based controller only).
    #[serde(default)]
    pub probe_dither: f64,
    #[serde(default)]
    pub approx_family: ApproxFamily,
    /// Pool all periods into one dataset (time-independent model) instead of
    /// keeping one dataset per period.
    #[serde(default = "default_true")]
    pub pooled: bool,
    /// Include the period index as a regressor.
    #[serde(default = "default_true")]
    pub trend: bool,
    /// `|u|` above this triggers step halving in the gradient controller.
    #[serde(default = "default_upper")]
    pub guard_bound: f64,
    #[serde(default)]
    pub pgs: PgsOptions,
    #[serde(default)]
    pub random_actions: RandomActionSpec,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("epsilon", self.epsilon),
            ("eta", self.eta),
            ("alpha_step", self.alpha_step),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(R2rError::invalid(
                    key,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        if self.max_inner_iters == 0 {
            return Err(R2rError::invalid("max_inner_iters", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.lambda_ewma) {
            return Err(R2rError::invalid("lambda_ewma", "must lie in [0, 1]"));
        }
        if !(self.action_lower < self.action_upper) {
            return Err(R2rError::invalid(
                "action_lower",
                "must be below action_upper",
            ));
        }
        if !(self.probe_dither >= 0.0 && self.random_actions.sd >= 0.0) {
            return Err(R2rError::invalid("probe_dither", "must be >= 0"));
        }
        if !(self.guard_bound > 0.0) {
            return Err(R2rError::invalid("guard_bound", "must be > 0"));
        }
        Ok(())
    }

    pub(crate) fn initial_action(&self, dim: usize) -> Result<ControlVector> {
        match &self.u_init {
            None => Ok(ControlVector::zeros(dim)),
            Some(u) => {
                let u = ControlVector(u.clone());
                u.check_dim(dim)?;
                Ok(u)
            }
        }
    }

    pub(crate) fn clamp(&self, u: &mut [f64]) -> bool {
        let mut hit = false;
        for x in u.iter_mut() {
            let c = x.clamp(self.action_lower, self.action_upper);
            hit |= c != *x;
            *x = c;
        }
        hit
    }
}

/// Plant knowledge the benchmark controllers are allowed to use: intercept,
/// gain matrix, and a deterministic drift per period.
#[derive(Debug, Clone)]
pub(crate) struct KnownLinearPlant {
    pub intercept: DVector<f64>,
    pub gain: DMatrix<f64>,
    pub drift: DVector<f64>,
}

impl KnownLinearPlant {
    pub(crate) fn from_process(process: &ProcessConfig) -> Result<Self> {
        let scalar = |a: f64, b: f64, d: f64| KnownLinearPlant {
            intercept: DVector::from_element(1, a),
            gain: DMatrix::from_element(1, 1, b),
            drift: DVector::from_element(1, d),
        };
        Ok(match process {
            ProcessConfig::LinearCmp(p) => KnownLinearPlant {
                intercept: DVector::from_column_slice(&p.a),
                gain: p.gain(),
                drift: DVector::from_column_slice(&p.delta),
            },
            ProcessConfig::Arima(p) => scalar(p.a, p.b, 0.0),
            ProcessConfig::Wiener(p) => scalar(p.y0, p.control_gain, p.v),
            ProcessConfig::Gamma(p) => scalar(p.y0, p.control_gain, p.mean_increment()),
            ProcessConfig::QuadraticCmp(_) => {
                return Err(R2rError::Config(
                    "this controller needs a linear plant; quadratic_cmp is not linear".into(),
                ))
            }
        })
    }
}

/// Minimum-norm solution of `B u = r`; errors when `B` has no right inverse.
pub(crate) fn min_norm_solver(gain: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = gain.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > 1e-12 * smax)
        .count();
    if smax == 0.0 || rank < gain.nrows() {
        return Err(R2rError::Config(format!(
            "gain matrix ({}x{}) has rank {rank}, no right inverse",
            gain.nrows(),
            gain.ncols()
        )));
    }
    svd.pseudo_inverse(1e-12 * smax)
        .map_err(|e| R2rError::Config(format!("pseudo-inverse failed: {e}")))
}

pub(crate) fn single_run(probe: &mut PeriodProbe, u: &ControlVector) -> Result<OutputVector> {
    probe.execute(u)
}

/// Holds the action fixed at `u_init`.
#[derive(Debug, Clone)]
pub struct NullController {
    u: ControlVector,
    output_dim: usize,
}

impl NullController {
    pub fn new(u: ControlVector, output_dim: usize) -> Self {
        Self { u, output_dim }
    }
}

impl Controller for NullController {
    fn name(&self) -> &'static str {
        "no_control"
    }
    fn control_dim(&self) -> usize {
        self.u.len()
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn begin_path(&mut self, _y0: &OutputVector, _seed: u64) -> Result<()> {
        Ok(())
    }
    fn control_period(
        &mut self,
        _t: usize,
        _y_prev: &OutputVector,
        probe: &mut PeriodProbe,
    ) -> Result<()> {
        single_run(probe, &self.u).map(|_| ())
    }
}

/// Independent Gaussian actions, for generating passive data.
#[derive(Debug, Clone)]
pub struct RandomActionController {
    center: Vec<f64>,
    sd: f64,
    output_dim: usize,
    rng: StreamRng,
}

impl RandomActionController {
    pub fn new(spec: &RandomActionSpec, control_dim: usize, output_dim: usize) -> Result<Self> {
        let center = if spec.center.is_empty() {
            vec![0.0; control_dim]
        } else {
            spec.center.clone()
        };
        if center.len() != control_dim {
            return Err(R2rError::Dimension {
                what: "random action center",
                expected: control_dim,
                got: center.len(),
            });
        }
        Ok(Self {
            center,
            sd: spec.sd,
            output_dim,
            rng: stream(0),
        })
    }
}

impl Controller for RandomActionController {
    fn name(&self) -> &'static str {
        "random"
    }
    fn control_dim(&self) -> usize {
        self.center.len()
    }
    fn output_dim(&self) -> usize {
        self.output_dim
    }
    fn begin_path(&mut self, _y0: &OutputVector, seed: u64) -> Result<()> {
        self.rng = stream(seed);
        Ok(())
    }
    fn control_period(
        &mut self,
        _t: usize,
        _y_prev: &OutputVector,
        probe: &mut PeriodProbe,
    ) -> Result<()> {
        let u: Vec<f64> = self
            .center
            .iter()
            .map(|c| c + self.sd * self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        single_run(probe, &ControlVector(u)).map(|_| ())
    }
}

/// Mean-optimal action from the true parameters (no disturbance knowledge).
#[derive(Debug, Clone)]
pub struct OracleController {
    theta: DMatrix<f64>,
    family: ApproxFamily,
    y_star: Vec<f64>,
    config: ControllerConfig,
    control_dim: usize,
}

impl OracleController {
    pub fn new(process: &ProcessConfig, y_star: &[f64], config: &ControllerConfig) -> Result<Self> {
        let (theta, family, control_dim) = match process {
            ProcessConfig::QuadraticCmp(p) => {
                let mut th = DMatrix::zeros(11, 2);
                for i in 0..10 {
                    th[(i, 0)] = p.coeffs1[i];
                    th[(i, 1)] = p.coeffs2[i];
                }
                th[(10, 0)] = p.drift1;
                th[(10, 1)] = p.drift2;
                (th, ApproxFamily::Quadratic, 3)
            }
            other => {
                let k = KnownLinearPlant::from_process(other)?;
                let (m, n) = (k.gain.nrows(), k.gain.ncols());
                let mut th = DMatrix::zeros(n + 2, m);
                for j in 0..m {
                    th[(0, j)] = k.intercept[j];
                    for i in 0..n {
                        th[(1 + i, j)] = k.gain[(j, i)];
                    }
                    th[(n + 1, j)] = k.drift[j];
                }
                (th, ApproxFamily::Linear, n)
            }
        };
        if y_star.len() != theta.ncols() {
            return Err(R2rError::Dimension {
                what: "y_star",
                expected: theta.ncols(),
                got: y_star.len(),
            });
        }
        Ok(Self {
            theta,
            family,
            y_star: y_star.to_vec(),
            config: config.clone(),
            control_dim,
        })
    }
}

impl Controller for OracleController {
    fn name(&self) -> &'static str {
        "oracle"
    }
    fn control_dim(&self) -> usize {
        self.control_dim
    }
    fn output_dim(&self) -> usize {
        self.y_star.len()
    }
    fn begin_path(&mut self, _y0: &OutputVector, _seed: u64) -> Result<()> {
        Ok(())
    }
    fn control_period(
        &mut self,
        t: usize,
        _y_prev: &OutputVector,
        probe: &mut PeriodProbe,
    ) -> Result<()> {
        let model = ApproxModel {
            family: self.family,
            control_dim: self.control_dim,
            trend: true,
        };
        let warm = self.config.initial_action(self.control_dim)?;
        let sol = optimize_action(&self.theta, &model, &self.y_star, t, &warm, &self.config)?;
        single_run(probe, &sol.u).map(|_| ())
    }
}

/// Builds a controller for `process`. Learning controllers that need
/// passive data (OAPE, PGS) generate it here from `seed`.
pub fn build_controller(
    kind: ControllerKind,
    config: &ControllerConfig,
    process: &ProcessConfig,
    y_star: &[f64],
    n_learning_paths: usize,
    seed: u64,
) -> Result<Box<dyn Controller>> {
    config.validate()?;
    let model = process.build()?;
    let (n, m) = (model.control_dim(), model.output_dim());
    if y_star.len() != m {
        return Err(R2rError::Dimension {
            what: "y_star",
            expected: m,
            got: y_star.len(),
        });
    }
    Ok(match kind {
        ControllerKind::NoControl => Box::new(NullController::new(config.initial_action(n)?, m)),
        ControllerKind::Oracle => Box::new(OracleController::new(process, y_star, config)?),
        ControllerKind::Ewma => Box::new(EwmaController::new(process, y_star, config.lambda_ewma)?),
        ControllerKind::Ghr => Box::new(GhrController::new(process, y_star, config.ghr_params)?),
        ControllerKind::ModelBased => Box::new(ModelBasedController::new(
            config,
            y_star,
            n,
            process.horizon(),
        )?),
        ControllerKind::Oape => {
            let fit = oape_fit(process, config, n_learning_paths, seed)?;
            Box::new(OapeController::new(fit, config, y_star, n)?)
        }
        ControllerKind::Pgs => {
            let store = OfflineStore::generate(
                process,
                &config.random_actions,
                config.pgs.offline_paths,
                seed,
            )?;
            Box::new(PgsController::new(config, y_star, store)?)
        }
    })
}
