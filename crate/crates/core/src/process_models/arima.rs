use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    check_horizon, default_long_horizon, ControlVector, OutputVector, ProcessModel, Stepper,
};
use crate::error::{R2rError, Result};
use crate::rng::{stream, StreamRng};

/// `Y_t = a + b u_t + d_t` with an ARIMA(1,1,1) disturbance
/// `d_t = d_{t-1} + Dd_t`, `Dd_t = phi Dd_{t-1} + w_t - theta w_{t-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArimaProcessParams {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub theta: f64,
    pub sigma: f64,
    #[serde(default = "default_long_horizon")]
    pub horizon: usize,
}

impl ArimaProcessParams {
    pub fn validate(&self) -> Result<()> {
        check_horizon(self.horizon)?;
        for (key, v) in [("phi", self.phi), ("theta", self.theta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(R2rError::invalid(
                    key,
                    format!("must lie strictly inside (0, 1), got {v}"),
                ));
            }
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(R2rError::invalid("sigma", "must be finite and > 0"));
        }
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(R2rError::invalid("a/b", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ArimaState {
    d: f64,
    dd: f64,
    w: f64,
}

impl ArimaState {
    fn next(&self, phi: f64, theta: f64, w: f64) -> Self {
        let dd = phi * self.dd + w - theta * self.w;
        ArimaState {
            d: self.d + dd,
            dd,
            w,
        }
    }
}

/// Disturbance path `d_1..d_T` with `d_0 = Dd_0 = w_0 = 0`.
pub fn arima_disturbance_stream(params: &ArimaProcessParams, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = stream(seed);
    let mut s = ArimaState::default();
    Ok((0..params.horizon)
        .map(|_| {
            let w = params.sigma * rng.sample::<f64, _>(StandardNormal);
            s = s.next(params.phi, params.theta, w);
            s.d
        })
        .collect())
}

/// Output variance at period `t` under constant action, as the closed form
/// `(sum_{i=1}^{t-1} (t-i) (phi^{i-1} (phi-theta))^2 + t) sigma^2`.
///
/// This sums the variances of the increments `Dd_1..Dd_t` and leaves out
/// their autocovariances, so it underestimates the true variance whenever
/// `phi != theta` (see [`arima_output_variance_exact`]).
pub fn arima_output_variance_closed_form(phi: f64, theta: f64, sigma: f64, t: usize) -> f64 {
    let s_t: f64 = (1..t)
        .map(|i| (t - i) as f64 * phi.powi(2 * (i as i32 - 1)))
        .sum();
    (t as f64 + (phi - theta).powi(2) * s_t) * sigma * sigma
}

/// Exact `var(d_t)`: `sigma^2 sum_{j=1}^t (sum_{k=0}^{t-j} psi_k)^2` with the
/// ARMA(1,1) weights `psi_0 = 1`, `psi_k = phi^{k-1} (phi - theta)`.
pub fn arima_output_variance_exact(phi: f64, theta: f64, sigma: f64, t: usize) -> f64 {
    let mut cumulative = Vec::with_capacity(t);
    let mut acc = 0.0;
    for k in 0..t {
        acc += if k == 0 {
            1.0
        } else {
            phi.powi(k as i32 - 1) * (phi - theta)
        };
        cumulative.push(acc);
    }
    cumulative.iter().map(|c| c * c).sum::<f64>() * sigma * sigma
}

#[derive(Debug, Clone)]
pub struct ArimaProcess {
    params: ArimaProcessParams,
    rng: StreamRng,
    stepper: Stepper<ArimaState>,
}

impl ArimaProcess {
    pub fn new(params: ArimaProcessParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            rng: stream(0),
            stepper: Stepper::new(params.horizon, ArimaState::default()),
            params,
        })
    }

    pub fn params(&self) -> &ArimaProcessParams {
        &self.params
    }
}

impl ProcessModel for ArimaProcess {
    fn family(&self) -> &'static str {
        "arima"
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn initial_output(&self) -> OutputVector {
        OutputVector::scalar(self.params.a)
    }

    fn reset(&mut self, seed: u64) {
        self.rng = stream(seed);
        self.stepper.reset();
    }

    fn step(&mut self, u: &ControlVector, t: usize) -> Result<OutputVector> {
        u.check_dim(1)?;
        let prev = *self.stepper.begin(t)?;
        let w = self.params.sigma * self.rng.sample::<f64, _>(StandardNormal);
        let s = prev.next(self.params.phi, self.params.theta, w);
        self.stepper.finish(t, s);
        Ok(OutputVector::scalar(
            self.params.a + self.params.b * u[0] + s.d,
        ))
    }

    fn disturbance(&self) -> Option<f64> {
        Some(self.stepper.latest().d)
    }

    fn boxed_clone(&self) -> Box<dyn ProcessModel> {
        Box::new(self.clone())
    }
}
