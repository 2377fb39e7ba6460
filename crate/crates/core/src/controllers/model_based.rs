use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Controller, ControllerConfig, RandomActionController};
use crate::error::{R2rError, Result};
use crate::estimation::{GramAccumulator, LinearModelFit};
use crate::process_models::{
    simulate_path, ControlVector, OutputVector, PeriodProbe, ProcessConfig,
};
use crate::rng::{derive_seed, stream, StreamRng};

/// Form of the approximate process model, linear in its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxFamily {
    /// `[1, u_1..u_n] (+ t)`
    #[default]
    Linear,
    /// `[1, u_i, u_i^2, u_i u_j (i < j)] (+ t)`
    Quadratic,
}

/// Feature map of the approximate model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApproxModel {
    pub family: ApproxFamily,
    pub control_dim: usize,
    pub trend: bool,
}

impl ApproxModel {
    pub fn n_features(&self) -> usize {
        let n = self.control_dim;
        let base = match self.family {
            ApproxFamily::Linear => 1 + n,
            ApproxFamily::Quadratic => 1 + 2 * n + n * (n - 1) / 2,
        };
        base + usize::from(self.trend)
    }

    pub fn features(&self, u: &[f64], t: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_features());
        x.push(1.0);
        x.extend_from_slice(u);
        if self.family == ApproxFamily::Quadratic {
            x.extend(u.iter().map(|v| v * v));
            for i in 0..u.len() {
                for j in i + 1..u.len() {
                    x.push(u[i] * u[j]);
                }
            }
        }
        if self.trend {
            x.push(t as f64);
        }
        x
    }

    /// `d features / d u`, `n_features x control_dim`.
    fn feature_jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = self.control_dim;
        let mut d = DMatrix::zeros(self.n_features(), n);
        for i in 0..n {
            d[(1 + i, i)] = 1.0;
        }
        if self.family == ApproxFamily::Quadratic {
            for i in 0..n {
                d[(1 + n + i, i)] = 2.0 * u[i];
            }
            let mut row = 1 + 2 * n;
            for i in 0..n {
                for j in i + 1..n {
                    d[(row, i)] = u[j];
                    d[(row, j)] = u[i];
                    row += 1;
                }
            }
        }
        d
    }

    fn predict(&self, theta: &DMatrix<f64>, u: &[f64], t: usize) -> DVector<f64> {
        theta.transpose() * DVector::from_vec(self.features(u, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSolution {
    pub u: ControlVector,
    /// `||f_hat(u) - y*||^2`
    pub objective: f64,
    /// The solution sits on the action box.
    pub on_boundary: bool,
}

fn objective(
    theta: &DMatrix<f64>,
    model: &ApproxModel,
    y_star: &DVector<f64>,
    u: &[f64],
    t: usize,
) -> f64 {
    (model.predict(theta, u, t) - y_star).norm_squared()
}

/// Minimizes `||f_hat(u; theta) - y*||^2` over the action box.
///
/// Linear family: minimum-norm solve, clamped into the box. Quadratic family:
/// projected Levenberg-Marquardt from the warm start and a fixed grid of
/// starts; the lowest objective wins, ties go to the earliest start.
pub fn optimize_action(
    theta: &DMatrix<f64>,
    model: &ApproxModel,
    y_star: &[f64],
    t: usize,
    warm: &ControlVector,
    config: &ControllerConfig,
) -> Result<ActionSolution> {
    let n = model.control_dim;
    if theta.nrows() != model.n_features() || theta.ncols() != y_star.len() {
        return Err(R2rError::Dimension {
            what: "fit parameters",
            expected: model.n_features() * y_star.len(),
            got: theta.nrows() * theta.ncols(),
        });
    }
    warm.check_dim(n)?;
    let ys = DVector::from_column_slice(y_star);
    let mut sol = match model.family {
        ApproxFamily::Linear => {
            let gain = theta.rows(1, n).transpose();
            let base = model.predict(theta, &vec![0.0; n], t);
            let svd = gain.clone_owned().svd(true, true);
            let smax = svd.singular_values.max();
            let mut u = if smax > 0.0 {
                let pinv = svd
                    .pseudo_inverse(1e-12 * smax)
                    .map_err(|_| R2rError::Singular {
                        deficient: n,
                        columns: n,
                    })?;
                (pinv * (&ys - base)).as_slice().to_vec()
            } else {
                warm.0.clone()
            };
            let on_boundary = config.clamp(&mut u);
            ActionSolution {
                objective: objective(theta, model, &ys, &u, t),
                u: ControlVector(u),
                on_boundary,
            }
        }
        ApproxFamily::Quadratic => {
            let mut best: Option<ActionSolution> = None;
            for start in starts(warm, config) {
                let (u, f) = levenberg_marquardt(theta, model, &ys, t, start, config);
                if best.as_ref().is_none_or(|b| f < b.objective) {
                    best = Some(ActionSolution {
                        u: ControlVector(u),
                        objective: f,
                        on_boundary: false,
                    });
                }
            }
            best.expect("at least the warm start")
        }
    };
    let width = config.action_upper - config.action_lower;
    sol.on_boundary |= sol.u.iter().any(|x| {
        (x - config.action_lower).abs() <= 1e-9 * width
            || (config.action_upper - x).abs() <= 1e-9 * width
    });
    Ok(sol)
}

/// Warm start first, then the `{1/4, 1/2, 3/4}` grid over the box.
fn starts(warm: &ControlVector, config: &ControllerConfig) -> Vec<Vec<f64>> {
    let n = warm.len();
    let mut out = vec![warm.0.clone()];
    let (lo, w) = (
        config.action_lower,
        config.action_upper - config.action_lower,
    );
    let levels = [lo + 0.25 * w, lo + 0.5 * w, lo + 0.75 * w];
    if n <= 4 {
        for idx in 0..3usize.pow(n as u32) {
            let mut k = idx;
            out.push(
                (0..n)
                    .map(|_| {
                        let v = levels[k % 3];
                        k /= 3;
                        v
                    })
                    .collect(),
            );
        }
    } else {
        out.push(vec![levels[1]; n]);
    }
    out
}

fn levenberg_marquardt(
    theta: &DMatrix<f64>,
    model: &ApproxModel,
    ys: &DVector<f64>,
    t: usize,
    mut u: Vec<f64>,
    config: &ControllerConfig,
) -> (Vec<f64>, f64) {
    config.clamp(&mut u);
    let n = u.len();
    let eval = |u: &[f64]| -> (DVector<f64>, DMatrix<f64>) {
        let r = model.predict(theta, u, t) - ys;
        let jac = theta.transpose() * model.feature_jacobian(u);
        (r, jac)
    };
    let (mut r, mut jac) = eval(&u);
    let mut f = r.norm_squared();
    let jtj = jac.transpose() * &jac;
    let mut mu = 1e-3 * jtj.diagonal().max().max(1e-12);
    for _ in 0..100 {
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let a = jtj + DMatrix::identity(n, n) * mu;
        let Some(chol) = a.cholesky() else {
            mu *= 10.0;
            continue;
        };
        let delta = chol.solve(&(-grad));
        let mut cand: Vec<f64> = u.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        config.clamp(&mut cand);
        let (rc, jc) = eval(&cand);
        let fc = rc.norm_squared();
        if fc < f {
            let step: f64 = cand
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            u = cand;
            r = rc;
            jac = jc;
            let gain = f - fc;
            f = fc;
            mu = (mu / 3.0).max(1e-15);
            let scale = 1.0 + u.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if step < 1e-12 * scale || gain < 1e-15 * (1.0 + f) {
                break;
            }
        } else {
            mu *= 4.0;
            if mu > 1e15 {
                break;
            }
        }
    }
    (u, f)
}

/// [`optimize_action`] on a least-squares fit.
pub fn rl_alg1_action_optimize(
    fit: &LinearModelFit,
    model: &ApproxModel,
    y_star: &[f64],
    t: usize,
    warm: &ControlVector,
    config: &ControllerConfig,
) -> Result<ActionSolution> {
    optimize_action(&fit.theta_hat, model, y_star, t, warm, config)
}

#[derive(Debug, Clone, Serialize)]
struct PeriodAudit {
    t: usize,
    executions: usize,
    inner_iters: usize,
    converged: bool,
    explored: usize,
    on_boundary: bool,
    last_param_change: f64,
    last_action_change: f64,
}

/// Learn-by-doing controller: within each period, alternate refitting on all
/// executed runs, minimizing the fitted squared error, and executing the
/// minimizer, until both the parameters and the action settle.
#[derive(Debug, Clone)]
pub struct ModelBasedController {
    config: ControllerConfig,
    model: ApproxModel,
    y_star: Vec<f64>,
    /// One dataset when pooled, otherwise one per period.
    data: Vec<GramAccumulator>,
    u_prev: ControlVector,
    first_action: Option<ControlVector>,
    rng: StreamRng,
    audit: Vec<PeriodAudit>,
    last_fit: Option<LinearModelFit>,
}

impl ModelBasedController {
    pub fn new(
        config: &ControllerConfig,
        y_star: &[f64],
        control_dim: usize,
        horizon: usize,
    ) -> Result<Self> {
        config.validate()?;
        let model = ApproxModel {
            family: config.approx_family,
            control_dim,
            // the period index is constant inside a per-period dataset
            trend: config.trend && config.pooled,
        };
        let n_sets = if config.pooled { 1 } else { horizon };
        Ok(Self {
            model,
            y_star: y_star.to_vec(),
            data: vec![GramAccumulator::new(model.n_features(), y_star.len()); n_sets],
            u_prev: config.initial_action(control_dim)?,
            first_action: None,
            rng: stream(0),
            audit: Vec::new(),
            last_fit: None,
            config: config.clone(),
        })
    }

    pub fn approx_model(&self) -> ApproxModel {
        self.model
    }

    pub fn latest_fit(&self) -> Option<&LinearModelFit> {
        self.last_fit.as_ref()
    }

    pub fn n_samples(&self) -> usize {
        self.data.iter().map(|d| d.n_samples()).sum()
    }

    fn dataset(&mut self, t: usize) -> &mut GramAccumulator {
        let i = if self.config.pooled { 0 } else { t - 1 };
        &mut self.data[i]
    }

    fn record(&mut self, t: usize, u: &ControlVector, y: &OutputVector) {
        let x = self.model.features(u, t);
        self.dataset(t).push(&x, y);
    }

    fn dithered(&mut self, u: &ControlVector) -> ControlVector {
        let sd = self.config.probe_dither;
        let mut v: Vec<f64> = u
            .iter()
            .map(|x| x + sd * self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        self.config.clamp(&mut v);
        ControlVector(v)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

impl Controller for ModelBasedController {
    fn name(&self) -> &'static str {
        "model_based"
    }
    fn control_dim(&self) -> usize {
        self.model.control_dim
    }
    fn output_dim(&self) -> usize {
        self.y_star.len()
    }

    fn begin_path(&mut self, _y0: &OutputVector, seed: u64) -> Result<()> {
        self.rng = stream(seed);
        self.audit.clear();
        Ok(())
    }

    fn control_period(
        &mut self,
        t: usize,
        _y_prev: &OutputVector,
        probe: &mut PeriodProbe,
    ) -> Result<()> {
        let warm = if t == 1 {
            match &self.first_action {
                Some(u) => u.clone(),
                None => self.config.initial_action(self.model.control_dim)?,
            }
        } else {
            self.u_prev.clone()
        };
        let dither = self.config.probe_dither > 0.0;
        let mut u_k = if dither {
            self.dithered(&warm)
        } else {
            warm.clone()
        };
        let y = probe.execute(&u_k)?;
        self.record(t, &u_k, &y);

        let mut audit = PeriodAudit {
            t,
            executions: 1,
            inner_iters: 0,
            converged: false,
            explored: 0,
            on_boundary: false,
            last_param_change: f64::INFINITY,
            last_action_change: f64::INFINITY,
        };
        let mut theta_prev: Option<DMatrix<f64>> = None;
        for k in 1..=self.config.max_inner_iters {
            let fit = self.dataset(t).fit(true)?;
            let (next, d_theta) = if fit.ridge_applied && dither {
                // not identifiable yet: keep probing around the warm start
                audit.explored += 1;
                theta_prev = None;
                (self.dithered(&warm), f64::INFINITY)
            } else {
                let sol = optimize_action(
                    &fit.theta_hat,
                    &self.model,
                    &self.y_star,
                    t,
                    &u_k,
                    &self.config,
                )?;
                audit.on_boundary |= sol.on_boundary;
                let d = theta_prev
                    .as_ref()
                    .map_or(f64::INFINITY, |p| (&fit.theta_hat - p).norm());
                theta_prev = Some(fit.theta_hat.clone());
                self.last_fit = Some(fit);
                (sol.u, d)
            };
            let d_u = distance(&next, &u_k);
            let y = probe.execute(&next)?;
            self.record(t, &next, &y);
            u_k = next;
            audit.inner_iters = k;
            audit.executions += 1;
            audit.last_param_change = d_theta;
            audit.last_action_change = d_u;
            if d_theta < self.config.epsilon && d_u < self.config.eta {
                audit.converged = true;
                break;
            }
        }
        if !audit.converged {
            log::debug!(
                "period {t}: no convergence after {} inner iterations",
                audit.inner_iters
            );
        }
        if t == 1 {
            self.first_action = Some(u_k.clone());
        }
        self.u_prev = u_k;
        self.audit.push(audit);
        Ok(())
    }

    fn diagnostics(&self) -> serde_json::Value {
        serde_json::json!({
            "periods": self.audit,
            "n_samples": self.n_samples(),
            "theta_hat": self.last_fit.as_ref().map(|f| f.theta_hat.as_slice().to_vec()),
        })
    }
}

/// Least-squares fit on `n_paths` randomly actioned sample paths, pooling all
/// periods.
pub fn oape_fit(
    process: &ProcessConfig,
    config: &ControllerConfig,
    n_paths: usize,
    seed: u64,
) -> Result<LinearModelFit> {
    if n_paths == 0 {
        return Err(R2rError::invalid("n_learning_paths", "must be >= 1"));
    }
    let mut model = process.build()?;
    let approx = ApproxModel {
        family: config.approx_family,
        control_dim: model.control_dim(),
        trend: config.trend,
    };
    let mut policy = RandomActionController::new(
        &config.random_actions,
        model.control_dim(),
        model.output_dim(),
    )?;
    let mut acc = GramAccumulator::new(approx.n_features(), model.output_dim());
    for i in 0..n_paths {
        let path = simulate_path(
            model.as_mut(),
            &mut policy,
            derive_seed(seed, i as u64, "oape-offline"),
        )?;
        for r in &path.periods {
            acc.push(&approx.features(&r.u, r.t), &r.y);
        }
    }
    acc.fit(true)
}

/// Controls every period with one frozen fit.
#[derive(Debug, Clone)]
pub struct OapeController {
    theta: DMatrix<f64>,
    model: ApproxModel,
    y_star: Vec<f64>,
    config: ControllerConfig,
    u_prev: ControlVector,
    boundary_hits: usize,
}

impl OapeController {
    pub fn new(
        fit: LinearModelFit,
        config: &ControllerConfig,
        y_star: &[f64],
        control_dim: usize,
    ) -> Result<Self> {
        let model = ApproxModel {
            family: config.approx_family,
            control_dim,
            trend: config.trend,
        };
        if fit.n_params() != model.n_features() {
            return Err(R2rError::Dimension {
                what: "oape fit",
                expected: model.n_features(),
                got: fit.n_params(),
            });
        }
        Ok(Self {
            theta: fit.theta_hat,
            model,
            y_star: y_star.to_vec(),
            u_prev: config.initial_action(control_dim)?,
            config: config.clone(),
            boundary_hits: 0,
        })
    }
}

impl Controller for OapeController {
    fn name(&self) -> &'static str {
        "oape"
    }
    fn control_dim(&self) -> usize {
        self.model.control_dim
    }
    fn output_dim(&self) -> usize {
        self.y_star.len()
    }
    fn begin_path(&mut self, _y0: &OutputVector, _seed: u64) -> Result<()> {
        self.u_prev = self.config.initial_action(self.model.control_dim)?;
        self.boundary_hits = 0;
        Ok(())
    }
    fn control_period(
        &mut self,
        t: usize,
        _y_prev: &OutputVector,
        probe: &mut PeriodProbe,
    ) -> Result<()> {
        let sol = optimize_action(
            &self.theta,
            &self.model,
            &self.y_star,
            t,
            &self.u_prev,
            &self.config,
        )?;
        self.boundary_hits += usize::from(sol.on_boundary);
        probe.execute(&sol.u)?;
        self.u_prev = sol.u;
        Ok(())
    }
    fn diagnostics(&self) -> serde_json::Value {
        serde_json::json!({
            "theta_hat": self.theta.as_slice().to_vec(),
            "boundary_hits": self.boundary_hits,
        })
    }
}
