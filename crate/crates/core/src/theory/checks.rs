//! Monte Carlo checks of the estimator rate and the control-error bounds.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::normal::phi_cdf;
use super::{g_min, weighted_sample_mean};
use crate::error::{R2rError, Result};
use crate::estimation::{ratio_moments_from_design, GramAccumulator, RatioMoments};
use crate::process_models::{arima_disturbance_stream, ArimaProcessParams};
use crate::rng::{derive_seed, stream};

/// Scalar process `y = b u + gamma . k + e` re-estimated from a fixed offline
/// design `[U K]`, then controlled at the online features `k`.
///
/// `K` has an intercept column followed by `gamma.len() - 1` standard normal
/// covariates; `U = u* + action_offset + action_spread * N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem2Config {
    pub n_offline: usize,
    pub noise_sd: f64,
    pub b: f64,
    pub gamma: Vec<f64>,
    pub online_features: Vec<f64>,
    pub y_star: f64,
    pub action_offset: f64,
    pub action_spread: f64,
}

impl Theorem2Config {
    fn validate(&self) -> Result<()> {
        if self.gamma.is_empty() || self.gamma.len() != self.online_features.len() {
            return Err(R2rError::invalid(
                "gamma",
                "must be non-empty and match online_features",
            ));
        }
        if self.n_offline < self.gamma.len() + 2 {
            return Err(R2rError::invalid(
                "n_offline",
                "too few offline runs for the design",
            ));
        }
        if !(self.noise_sd > 0.0 && self.action_spread > 0.0) {
            return Err(R2rError::invalid("noise_sd/action_spread", "must be > 0"));
        }
        if self.b == 0.0 {
            return Err(R2rError::invalid("b", "must be nonzero"));
        }
        Ok(())
    }

    pub fn optimal_action(&self) -> f64 {
        let c: f64 = self
            .gamma
            .iter()
            .zip(&self.online_features)
            .map(|(g, k)| g * k)
            .sum();
        (self.y_star - c) / self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub eta: f64,
    pub bound_action: f64,
    pub bound_output: f64,
    pub empirical_freq_action: f64,
    pub empirical_freq_output: f64,
    pub n_trials: usize,
    pub moments: RatioMoments,
    pub optimal_action: f64,
    pub weighted_mean_action: f64,
    pub action_within_bound: bool,
    pub output_within_bound: bool,
}

/// `empirical <= bound + 3 se`, with the binomial standard error taken at the
/// bound itself. Vacuous bounds pass trivially.
fn within(freq: f64, bound: f64, n: usize) -> bool {
    if bound >= 1.0 {
        return true;
    }
    let p = bound.clamp(0.0, 1.0);
    freq <= bound + 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

struct Design {
    u: Vec<f64>,
    k: DMatrix<f64>,
}

fn draw_design(cfg: &Theorem2Config, seed: u64) -> Design {
    let mut rng = stream(derive_seed(seed, 0, "theorem2-design"));
    let n = cfg.n_offline;
    let m = cfg.gamma.len();
    let u_star = cfg.optimal_action();
    let u = (0..n)
        .map(|_| {
            u_star + cfg.action_offset + cfg.action_spread * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let k = DMatrix::from_fn(n, m, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.sample::<f64, _>(StandardNormal)
        }
    });
    Design { u, k }
}

/// Re-estimates the process `n_trials` times with fresh noise on the fixed
/// design and counts how often `|u_hat - u*| > eta` and
/// `|b (u_hat - u*)| > eta`, next to the analytic bounds
/// `g_min / (mu2 s2 eta)^2 + 2 Phi(-|mu2|/s2)` and
/// `g_min / (s2 eta)^2 + 2 Phi(-|mu2|/s2)` (times `s2^2` inside `g_min`).
pub fn theorem2_bound_check(
    cfg: &Theorem2Config,
    eta: f64,
    n_trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    cfg.validate()?;
    if !(eta > 0.0) || n_trials == 0 {
        return Err(R2rError::invalid("eta/n_trials", "must be positive"));
    }
    let design = draw_design(cfg, seed);
    let m = cfg.gamma.len();
    let moments = ratio_moments_from_design(
        &design.u,
        &design.k,
        &cfg.online_features,
        cfg.noise_sd * cfg.noise_sd,
        cfg.b,
        &cfg.gamma,
        cfg.y_star,
    )?;
    let u_star = cfg.optimal_action();
    let ubar = weighted_sample_mean(&cfg.online_features, &design.k, &design.u)?;

    // Gram of [U K] is shared across trials; only the responses change.
    let rows: Vec<Vec<f64>> = (0..cfg.n_offline)
        .map(|i| {
            let mut x = Vec::with_capacity(m + 1);
            x.push(design.u[i]);
            x.extend(design.k.row(i).iter());
            x
        })
        .collect();
    let means: Vec<f64> = rows
        .iter()
        .map(|x| {
            cfg.b * x[0]
                + cfg
                    .gamma
                    .iter()
                    .zip(&x[1..])
                    .map(|(g, k)| g * k)
                    .sum::<f64>()
        })
        .collect();

    let exceed: Vec<(bool, bool)> = (0..n_trials)
        .into_par_iter()
        .map(|trial| -> Result<(bool, bool)> {
            let mut rng = stream(derive_seed(seed, trial as u64, "theorem2-trial"));
            let mut acc = GramAccumulator::new(m + 1, 1);
            for (x, mu) in rows.iter().zip(&means) {
                let y = mu + cfg.noise_sd * rng.sample::<f64, _>(StandardNormal);
                acc.push(x, &[y]);
            }
            let fit = acc.fit(false)?;
            let theta = fit.coefficients(0);
            let c_hat: f64 = (0..m).map(|j| theta[j + 1] * cfg.online_features[j]).sum();
            let u_hat = (cfg.y_star - c_hat) / theta[0];
            let err = u_hat - u_star;
            let bad = !err.is_finite();
            Ok((bad || err.abs() > eta, bad || (cfg.b * err).abs() > eta))
        })
        .collect::<Result<_>>()?;

    let n = n_trials as f64;
    let freq_action = exceed.iter().filter(|e| e.0).count() as f64 / n;
    let freq_output = exceed.iter().filter(|e| e.1).count() as f64 / n;
    let s22 = moments.sigma2 * moments.sigma2;
    let numer = s22 * g_min(&moments);
    let tail = 2.0 * phi_cdf(-moments.mu2.abs() / moments.sigma2);
    let bound_action = numer / (moments.mu2 * moments.sigma2 * eta).powi(2) + tail;
    let bound_output = numer / (moments.sigma2 * eta).powi(2) + tail;
    Ok(BoundReport {
        eta,
        bound_action,
        bound_output,
        empirical_freq_action: freq_action,
        empirical_freq_output: freq_output,
        n_trials,
        moments,
        optimal_action: u_star,
        weighted_mean_action: ubar,
        action_within_bound: within(freq_action, bound_action, n_trials),
        output_within_bound: within(freq_output, bound_output, n_trials),
    })
}

/// Offline data for the scalar ARIMA process at one fixed period: each sample
/// path contributes `y_t = a + b u_t + d_t` with `u_t ~ N(action_mean, action_sd^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem1Config {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub theta: f64,
    /// Innovation standard deviation; zero gives noiseless data.
    pub sigma: f64,
    pub period: usize,
    pub action_mean: f64,
    pub action_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateRate {
    pub name: String,
    pub variances: Vec<f64>,
    pub mean_bias: Vec<f64>,
    pub bias_se: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    /// Every 3-standard-error bias interval contains zero.
    pub bias_covers_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub coordinates: Vec<CoordinateRate>,
}

fn one_estimate(cfg: &Theorem1Config, n_paths: usize, seed: u64) -> Result<[f64; 2]> {
    let mut acc = GramAccumulator::new(2, 1);
    let arima = ArimaProcessParams {
        a: cfg.a,
        b: cfg.b,
        phi: cfg.phi,
        theta: cfg.theta,
        sigma: cfg.sigma,
        horizon: cfg.period,
    };
    for path in 0..n_paths {
        let path_seed = derive_seed(seed, path as u64, "theorem1-path");
        let d = if cfg.sigma == 0.0 {
            0.0
        } else {
            arima_disturbance_stream(&arima, path_seed)?[cfg.period - 1]
        };
        let mut rng = stream(derive_seed(path_seed, 0, "theorem1-action"));
        let u = cfg.action_mean + cfg.action_sd * rng.sample::<f64, _>(StandardNormal);
        acc.push(&[1.0, u], &[cfg.a + cfg.b * u + d]);
    }
    let theta = acc.fit(false)?.coefficients(0);
    Ok([theta[0] - cfg.a, theta[1] - cfg.b])
}

fn sample_mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Ordinary least squares of `y` on `[1, x]`: slope and its standard error.
fn loglog_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let se = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, se)
}

/// Estimator error variance and bias over `replications` independent
/// offline datasets at each `N`, with a log-log slope per coordinate.
pub fn theorem1_rate_check(
    cfg: &Theorem1Config,
    n_grid: &[usize],
    replications: usize,
    seed: u64,
) -> Result<RateReport> {
    if cfg.period == 0 || !(cfg.sigma >= 0.0) || !(cfg.action_sd > 0.0) {
        return Err(R2rError::invalid(
            "theorem1",
            "period >= 1, sigma >= 0, action_sd > 0 required",
        ));
    }
    if replications < 2 || n_grid.iter().any(|&n| n < 3) {
        return Err(R2rError::invalid(
            "theorem1",
            "need >= 2 replications and N >= 3",
        ));
    }
    let mut errs: Vec<[Vec<f64>; 2]> = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let est: Vec<[f64; 2]> = (0..replications)
            .into_par_iter()
            .map(|r| {
                one_estimate(
                    cfg,
                    n,
                    derive_seed(seed, (gi * replications + r) as u64, "theorem1-rep"),
                )
            })
            .collect::<Result<_>>()?;
        errs.push([
            est.iter().map(|e| e[0]).collect(),
            est.iter().map(|e| e[1]).collect(),
        ]);
    }
    let log_n: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let coordinates = ["intercept", "gain"]
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let stats: Vec<(f64, f64)> = errs.iter().map(|e| sample_mean_var(&e[c])).collect();
            let variances: Vec<f64> = stats.iter().map(|s| s.1).collect();
            let mean_bias: Vec<f64> = stats.iter().map(|s| s.0).collect();
            let bias_se: Vec<f64> = stats
                .iter()
                .map(|s| (s.1 / replications as f64).sqrt())
                .collect();
            let (slope, slope_se) = if variances.iter().all(|v| *v > 0.0) {
                let log_v: Vec<f64> = variances.iter().map(|v| v.ln()).collect();
                loglog_slope(&log_n, &log_v)
            } else {
                (f64::NAN, f64::NAN)
            };
            let bias_covers_zero = mean_bias
                .iter()
                .zip(&bias_se)
                .all(|(m, se)| m.abs() <= 3.0 * se + 1e-12);
            CoordinateRate {
                name: name.to_string(),
                variances,
                mean_bias,
                bias_se,
                slope,
                slope_se,
                bias_covers_zero,
            }
        })
        .collect();
    Ok(RateReport {
        n_grid: n_grid.to_vec(),
        replications,
        coordinates,
    })
}
