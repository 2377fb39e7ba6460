use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    check_horizon, check_positive, default_control_gain, default_long_horizon, ControlVector,
    OutputVector, ProcessModel, Stepper,
};
use crate::error::{R2rError, Result};
use crate::rng::{stream, StreamRng};

/// `X_t = y0 + v t + sigma B(t)`, observed as `y_t = X_t + control_gain * u_t`.
///
/// The control term is the accumulation of `control_gain * (u_s - u_{s-1})`
/// over `s <= t` with `u_0 = 0`, which telescopes to `control_gain * u_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerParams {
    pub y0: f64,
    pub v: f64,
    pub sigma: f64,
    #[serde(default = "default_control_gain")]
    pub control_gain: f64,
    #[serde(default = "default_long_horizon")]
    pub horizon: usize,
}

impl WienerParams {
    pub fn validate(&self) -> Result<()> {
        check_horizon(self.horizon)?;
        check_positive("sigma", self.sigma)?;
        if !(self.y0.is_finite() && self.v.is_finite() && self.control_gain.is_finite()) {
            return Err(R2rError::invalid("wiener", "non-finite parameter"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WienerProcess {
    params: WienerParams,
    rng: StreamRng,
    /// Brownian motion value `B(t)`; `B(0) = 0`.
    stepper: Stepper<f64>,
}

impl WienerProcess {
    pub fn new(params: WienerParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            rng: stream(0),
            stepper: Stepper::new(params.horizon, 0.0),
            params,
        })
    }
}

impl ProcessModel for WienerProcess {
    fn family(&self) -> &'static str {
        "wiener"
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
        let b_prev = *self.stepper.begin(t)?;
        let b = b_prev + self.rng.sample::<f64, _>(StandardNormal);
        self.stepper.finish(t, b);
        let p = &self.params;
        let x = p.y0 + p.v * t as f64 + p.sigma * b;
        Ok(OutputVector::scalar(x + p.control_gain * u[0]))
    }

    /// Uncontrolled excursion `v t + sigma B(t)`.
    fn disturbance(&self) -> Option<f64> {
        let t = self.stepper.latest_period();
        Some(self.params.v * t as f64 + self.params.sigma * *self.stepper.latest())
    }

    fn boxed_clone(&self) -> Box<dyn ProcessModel> {
        Box::new(self.clone())
    }
}
