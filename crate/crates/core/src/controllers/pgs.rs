use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::{Controller, ControllerConfig, RandomActionController, RandomActionSpec};
use crate::error::{R2rError, Result};
use crate::estimation::{fit_pgs_params, PgsDistributionParams, VarianceForm};
use crate::process_models::{
    simulate_path, ControlVector, OutputVector, PeriodProbe, ProcessConfig, SamplePath,
};
use crate::rng::derive_seed;

fn default_offline_paths() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

/// Reaction to a period whose iterates stay outside the guard bound after
/// the last allowed step halving.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergencePolicy {
    /// Abort the run with a divergence error.
    #[default]
    Error,
    /// Abandon the period's iterates and re-execute its warm-start action.
    Rollback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgsOptions {
    #[serde(default)]
    pub variance_form: VarianceForm,
    /// Estimate a per-period drift in the output mean.
    #[serde(default)]
    pub fit_drift: bool,
    #[serde(default = "default_offline_paths")]
    pub offline_paths: usize,
    /// Refit the distribution on the grown store before every sample path.
    #[serde(default = "default_true")]
    pub refit_each_path: bool,
    #[serde(default)]
    pub on_divergence: DivergencePolicy,
}

impl Default for PgsOptions {
    fn default() -> Self {
        Self {
            variance_form: VarianceForm::default(),
            fit_drift: false,
            offline_paths: default_offline_paths(),
            refit_each_path: true,
            on_divergence: DivergencePolicy::Error,
        }
    }
}

/// Append-only store of sample paths, shared between controller instances.
#[derive(Debug, Clone, Default)]
pub struct OfflineStore {
    paths: Arc<RwLock<Vec<SamplePath>>>,
}

impl OfflineStore {
    pub fn new(paths: Vec<SamplePath>) -> Self {
        Self {
            paths: Arc::new(RwLock::new(paths)),
        }
    }

    /// `n_paths` randomly actioned sample paths of `process`.
    pub fn generate(
        process: &ProcessConfig,
        actions: &RandomActionSpec,
        n_paths: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut model = process.build()?;
        let mut policy =
            RandomActionController::new(actions, model.control_dim(), model.output_dim())?;
        let paths = (0..n_paths)
            .map(|i| {
                simulate_path(
                    model.as_mut(),
                    &mut policy,
                    derive_seed(seed, i as u64, "pgs-offline"),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(paths))
    }

    pub fn len(&self) -> usize {
        self.paths.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&self, path: SamplePath) {
        self.paths.write().expect("store lock").push(path);
    }

    /// Fits the output distribution on a consistent snapshot.
    pub fn fit(&self, options: &PgsOptions) -> Result<PgsDistributionParams> {
        let guard = self.paths.read().expect("store lock");
        fit_pgs_params(&guard, options.variance_form, options.fit_drift)
    }
}

#[derive(Debug, Clone, Serialize)]
struct PeriodAudit {
    t: usize,
    executions: usize,
    converged: bool,
    halvings: usize,
    rolled_back: bool,
}

/// Online policy-gradient search on a fitted normal output model.
///
/// Each step executes the current action, observes `y_t`, and moves along
/// `g = (y_t - y*)^2 d/du log p(y_t; u)`. A step that would leave
/// `|u| <= guard_bound` is retried with half the step size, at most five
/// times; past that the period either fails or rolls back to its warm start,
/// per [`DivergencePolicy`].
#[derive(Debug, Clone)]
pub struct PgsController {
    config: ControllerConfig,
    y_star: f64,
    store: OfflineStore,
    params: PgsDistributionParams,
    u_prev: f64,
    audit: Vec<PeriodAudit>,
}

const MAX_HALVINGS: usize = 5;

impl PgsController {
    pub fn new(config: &ControllerConfig, y_star: &[f64], store: OfflineStore) -> Result<Self> {
        config.validate()?;
        if y_star.len() != 1 {
            return Err(R2rError::Config(
                "the gradient controller needs a scalar process".into(),
            ));
        }
        let params = store.fit(&config.pgs)?;
        Ok(Self {
            u_prev: 0.0,
            config: config.clone(),
            y_star: y_star[0],
            store,
            params,
            audit: Vec::new(),
        })
    }

    pub fn params(&self) -> &PgsDistributionParams {
        &self.params
    }

    pub fn store(&self) -> &OfflineStore {
        &self.store
    }

    /// `(y - y*)^2 * beta (y - mu) / v(t)`.
    pub fn gradient(&self, y: f64, y_prev: f64, u: f64, u_prev: f64, t: usize) -> f64 {
        (y - self.y_star).powi(2) * self.params.score(y, y_prev, u, u_prev, t)
    }
}

impl Controller for PgsController {
    fn name(&self) -> &'static str {
        "pgs"
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }

    fn begin_path(&mut self, _y0: &OutputVector, _seed: u64) -> Result<()> {
        if self.config.pgs.refit_each_path {
            self.params = self.store.fit(&self.config.pgs)?;
        }
        self.u_prev = 0.0;
        self.audit.clear();
        Ok(())
    }

    fn control_period(
        &mut self,
        t: usize,
        y_prev: &OutputVector,
        probe: &mut PeriodProbe,
    ) -> Result<()> {
        let yp = y_prev[0];
        // u_0 = 0 is the reference action of every path
        let warm = if t == 1 {
            self.config.initial_action(1)?[0]
        } else {
            self.u_prev
        };
        let mut u = warm;
        let mut alpha = self.config.alpha_step;
        let mut audit = PeriodAudit {
            t,
            executions: 0,
            converged: false,
            halvings: 0,
            rolled_back: false,
        };
        'inner: for _ in 0..self.config.max_inner_iters {
            let y = probe.execute(&ControlVector::scalar(u))?[0];
            audit.executions += 1;
            let g = self.gradient(y, yp, u, self.u_prev, t);
            let mut next = u - alpha * g;
            log::trace!("period {t}: u {u:.4} y {y:.4} g {g:.4e} alpha {alpha:.3e}");
            while !(next.abs() <= self.config.guard_bound) {
                if audit.halvings == MAX_HALVINGS {
                    match self.config.pgs.on_divergence {
                        DivergencePolicy::Error => {
                            return Err(R2rError::Divergence {
                                t,
                                halvings: MAX_HALVINGS,
                            })
                        }
                        DivergencePolicy::Rollback => {
                            log::warn!(
                                "period {t}: iterates left the guard bound; rolling back to {warm}"
                            );
                            probe.execute(&ControlVector::scalar(warm))?;
                            audit.executions += 1;
                            audit.rolled_back = true;
                            break 'inner;
                        }
                    }
                }
                alpha *= 0.5;
                audit.halvings += 1;
                next = u - alpha * g;
            }
            if (next - u).abs() < self.config.eta {
                audit.converged = true;
                break;
            }
            u = next;
        }
        self.u_prev = probe.last().map(|(u, _)| u[0]).unwrap_or(u);
        self.audit.push(audit);
        Ok(())
    }

    fn end_path(&mut self, path: &SamplePath) -> Result<()> {
        self.store.push(path.clone());
        Ok(())
    }

    fn diagnostics(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.params,
            "store_size": self.store.len(),
            "periods": self.audit,
        })
    }
}
