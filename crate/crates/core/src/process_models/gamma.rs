use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::{
    check_horizon, check_positive, default_control_gain, default_long_horizon, ControlVector,
    OutputVector, ProcessModel, Stepper,
};
use crate::error::{R2rError, Result};
use crate::rng::{stream, StreamRng};

fn default_true() -> bool {
    true
}

/// `X_t = X_{t-1} + Dy_t` with gamma increments, observed as
/// `y_t = X_t + control_gain * u_t` (same control channel as the Wiener model).
///
/// With `beta_is_rate` the increment density is
/// `beta^alpha y^(alpha-1) exp(-beta y) / Gamma(alpha)` (mean `alpha / beta`);
/// otherwise `beta` is a scale (mean `alpha * beta`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaParams {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_true", rename = "gamma_beta_is_rate")]
    pub beta_is_rate: bool,
    #[serde(default)]
    pub y0: f64,
    #[serde(default = "default_control_gain")]
    pub control_gain: f64,
    #[serde(default = "default_long_horizon")]
    pub horizon: usize,
}

impl GammaParams {
    pub fn validate(&self) -> Result<()> {
        check_horizon(self.horizon)?;
        check_positive("alpha", self.alpha)?;
        check_positive("beta", self.beta)?;
        if !(self.y0.is_finite() && self.control_gain.is_finite()) {
            return Err(R2rError::invalid("gamma", "non-finite parameter"));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        if self.beta_is_rate {
            1.0 / self.beta
        } else {
            self.beta
        }
    }

    pub fn mean_increment(&self) -> f64 {
        self.alpha * self.scale()
    }

    pub fn increment_variance(&self) -> f64 {
        self.alpha * self.scale().powi(2)
    }
}

#[derive(Debug, Clone)]
pub struct GammaProcess {
    params: GammaParams,
    dist: Gamma<f64>,
    rng: StreamRng,
    /// Cumulative increment `X_t - y0`.
    stepper: Stepper<f64>,
}

impl GammaProcess {
    pub fn new(params: GammaParams) -> Result<Self> {
        params.validate()?;
        let dist = Gamma::new(params.alpha, params.scale())
            .map_err(|e| R2rError::invalid("gamma", e.to_string()))?;
        Ok(Self {
            dist,
            rng: stream(0),
            stepper: Stepper::new(params.horizon, 0.0),
            params,
        })
    }

    pub fn sample_increment(&mut self) -> f64 {
        self.rng.sample(self.dist)
    }
}

impl ProcessModel for GammaProcess {
    fn family(&self) -> &'static str {
        "gamma"
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
        OutputVector::scalar(self.params.y0)
    }

    fn reset(&mut self, seed: u64) {
        self.rng = stream(seed);
        self.stepper.reset();
    }

    fn step(&mut self, u: &ControlVector, t: usize) -> Result<OutputVector> {
        u.check_dim(1)?;
        let prev = *self.stepper.begin(t)?;
        let inc = self.rng.sample(self.dist);
        let x = prev + inc;
        self.stepper.finish(t, x);
        Ok(OutputVector::scalar(
            self.params.y0 + x + self.params.control_gain * u[0],
        ))
    }

    fn disturbance(&self) -> Option<f64> {
        Some(*self.stepper.latest())
    }

    fn boxed_clone(&self) -> Box<dyn ProcessModel> {
        Box::new(self.clone())
    }
}
