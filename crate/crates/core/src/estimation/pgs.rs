use serde::{Deserialize, Serialize};

use crate::error::{R2rError, Result};
use crate::process_models::SamplePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceForm {
    /// `v(t) = gamma^2 t`
    #[default]
    TimeLinear,
    /// `v(t) = gamma^2`
    Constant,
}

/// Normal output model used by the policy-gradient controller:
/// `y_t | y_{t-1} ~ N(y_{t-1} + drift + beta (u_t - u_{t-1}), v(t))`.
///
/// `drift` is zero unless the fit was asked to estimate it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgsDistributionParams {
    pub beta: f64,
    pub gamma: f64,
    pub variance_form: VarianceForm,
    #[serde(default)]
    pub drift: f64,
}

impl PgsDistributionParams {
    pub fn variance(&self, t: usize) -> f64 {
        let g2 = self.gamma * self.gamma;
        match self.variance_form {
            VarianceForm::TimeLinear => g2 * t as f64,
            VarianceForm::Constant => g2,
        }
    }

    pub fn mean(&self, y_prev: f64, u: f64, u_prev: f64) -> f64 {
        y_prev + self.drift + self.beta * (u - u_prev)
    }

    pub fn log_density(&self, y: f64, y_prev: f64, u: f64, u_prev: f64, t: usize) -> f64 {
        let v = self.variance(t);
        let r = y - self.mean(y_prev, u, u_prev);
        -0.5 * (2.0 * std::f64::consts::PI * v).ln() - r * r / (2.0 * v)
    }

    /// `d/du log p(y; u) = beta (y - mu) / v(t)`.
    pub fn score(&self, y: f64, y_prev: f64, u: f64, u_prev: f64, t: usize) -> f64 {
        self.beta * (y - self.mean(y_prev, u, u_prev)) / self.variance(t)
    }
}

fn scalar(v: &[f64], what: &'static str) -> Result<f64> {
    if v.len() != 1 {
        return Err(R2rError::Dimension {
            what,
            expected: 1,
            got: v.len(),
        });
    }
    Ok(v[0])
}

/// `(t, y_t - y_{t-1}, u_t - u_{t-1}, y_t - y_0, u_t - u_0)` for every period,
/// with `u_0 = 0`.
fn increments(paths: &[SamplePath]) -> Result<Vec<[f64; 5]>> {
    let mut out = Vec::new();
    for path in paths {
        let y0 = scalar(&path.y0, "pgs output")?;
        let (mut y_prev, mut u_prev) = (y0, 0.0);
        for rec in &path.periods {
            let y = scalar(&rec.y, "pgs output")?;
            let u = scalar(&rec.u, "pgs action")?;
            out.push([rec.t as f64, y - y_prev, u - u_prev, y - y0, u]);
            y_prev = y;
            u_prev = u;
        }
    }
    Ok(out)
}

/// Estimates `beta` by least squares of `y_t - y_{t-1}` on `u_t - u_{t-1}`
/// (plus an intercept when `fit_drift`), then `gamma` by maximum likelihood on
/// the cumulative residuals `R_t = (y_t - y_0) - beta u_t - drift t`:
/// `gamma^2 = mean(R_t^2 / t)` for the time-linear form, `mean(R_t^2)` for
/// the constant form.
pub fn fit_pgs_params(
    paths: &[SamplePath],
    variance_form: VarianceForm,
    fit_drift: bool,
) -> Result<PgsDistributionParams> {
    if paths.len() < 2 {
        return Err(R2rError::DegenerateDesign(format!(
            "need at least 2 offline paths, got {}",
            paths.len()
        )));
    }
    if let Some(p) = paths.iter().find(|p| p.horizon() < 2) {
        return Err(R2rError::DegenerateDesign(format!(
            "offline path (seed {}) has fewer than 2 periods",
            p.seed
        )));
    }
    let rows = increments(paths)?;
    let n = rows.len() as f64;
    let (beta, drift) = if fit_drift {
        let mx = rows.iter().map(|r| r[2]).sum::<f64>() / n;
        let my = rows.iter().map(|r| r[1]).sum::<f64>() / n;
        let sxx: f64 = rows.iter().map(|r| (r[2] - mx).powi(2)).sum();
        let sxy: f64 = rows.iter().map(|r| (r[2] - mx) * (r[1] - my)).sum();
        if sxx <= 0.0 {
            return Err(R2rError::Unidentifiable(
                "all action increments are equal".into(),
            ));
        }
        let beta = sxy / sxx;
        (beta, my - beta * mx)
    } else {
        let sxx: f64 = rows.iter().map(|r| r[2] * r[2]).sum();
        let sxy: f64 = rows.iter().map(|r| r[2] * r[1]).sum();
        if sxx <= 0.0 {
            return Err(R2rError::Unidentifiable(
                "all action increments are zero".into(),
            ));
        }
        (sxy / sxx, 0.0)
    };
    let gamma2 = rows
        .iter()
        .map(|r| {
            let resid = r[3] - beta * r[4] - drift * r[0];
            match variance_form {
                VarianceForm::TimeLinear => resid * resid / r[0],
                VarianceForm::Constant => resid * resid,
            }
        })
        .sum::<f64>()
        / n;
    if !(beta.is_finite() && gamma2.is_finite()) {
        return Err(R2rError::NonFinite("pgs parameters"));
    }
    Ok(PgsDistributionParams {
        beta,
        gamma: gamma2.sqrt(),
        variance_form,
        drift,
    })
}

/// Log-likelihood of the cumulative residuals under `params`.
pub fn pgs_log_likelihood(paths: &[SamplePath], params: &PgsDistributionParams) -> Result<f64> {
    let rows = increments(paths)?;
    Ok(rows
        .iter()
        .map(|r| {
            let t = r[0] as usize;
            let v = params.variance(t);
            let resid = r[3] - params.beta * r[4] - params.drift * r[0];
            -0.5 * (2.0 * std::f64::consts::PI * v).ln() - resid * resid / (2.0 * v)
        })
        .sum())
}
