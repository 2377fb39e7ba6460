use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    check_horizon, check_positive, default_cmp_horizon, ControlVector, OutputVector, ProcessModel,
    Stepper,
};
use crate::error::{R2rError, Result};
use crate::rng::{stream, StreamRng};

/// Full second-order response surface in three controls, per output.
///
/// Coefficient layout: `[c, u1, u2, u3, u1^2, u2^2, u3^2, u1u2, u1u3, u2u3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticCmpParams {
    pub coeffs1: [f64; 10],
    pub coeffs2: [f64; 10],
    pub drift1: f64,
    pub drift2: f64,
    pub noise1: f64,
    pub noise2: f64,
    #[serde(default = "default_cmp_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub y0: Option<[f64; 2]>,
}

/// The ten monomials of a full quadratic in three variables.
pub fn quadratic_terms(u: &[f64]) -> [f64; 10] {
    let (u1, u2, u3) = (u[0], u[1], u[2]);
    [
        1.0,
        u1,
        u2,
        u3,
        u1 * u1,
        u2 * u2,
        u3 * u3,
        u1 * u2,
        u1 * u3,
        u2 * u3,
    ]
}

impl QuadraticCmpParams {
    pub fn validate(&self) -> Result<()> {
        check_horizon(self.horizon)?;
        check_positive("noise1", self.noise1)?;
        check_positive("noise2", self.noise2)?;
        if self
            .coeffs1
            .iter()
            .chain(self.coeffs2.iter())
            .chain([self.drift1, self.drift2].iter())
            .any(|v| !v.is_finite())
        {
            return Err(R2rError::invalid("quadratic_cmp", "non-finite coefficient"));
        }
        Ok(())
    }

    pub fn mean_output(&self, u: &[f64], t: usize) -> [f64; 2] {
        let x = quadratic_terms(u);
        let dot = |c: &[f64; 10]| c.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
        [
            dot(&self.coeffs1) + self.drift1 * t as f64,
            dot(&self.coeffs2) + self.drift2 * t as f64,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticCmp {
    params: QuadraticCmpParams,
    rng: StreamRng,
    stepper: Stepper<()>,
}

impl QuadraticCmp {
    pub fn new(params: QuadraticCmpParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            rng: stream(0),
            stepper: Stepper::new(params.horizon, ()),
            params,
        })
    }

    pub fn params(&self) -> &QuadraticCmpParams {
        &self.params
    }
}

impl ProcessModel for QuadraticCmp {
    fn family(&self) -> &'static str {
        "quadratic_cmp"
    }

    fn control_dim(&self) -> usize {
        3
    }

    fn output_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn initial_output(&self) -> OutputVector {
        let y0 = self
            .params
            .y0
            .unwrap_or([self.params.coeffs1[0], self.params.coeffs2[0]]);
        OutputVector(y0.to_vec())
    }

    fn reset(&mut self, seed: u64) {
        self.rng = stream(seed);
        self.stepper.reset();
    }

    fn step(&mut self, u: &ControlVector, t: usize) -> Result<OutputVector> {
        u.check_dim(3)?;
        self.stepper.begin(t)?;
        let mean = self.params.mean_output(u, t);
        let e1 = self.params.noise1 * self.rng.sample::<f64, _>(StandardNormal);
        let e2 = self.params.noise2 * self.rng.sample::<f64, _>(StandardNormal);
        self.stepper.finish(t, ());
        Ok(OutputVector(vec![mean[0] + e1, mean[1] + e2]))
    }

    fn disturbance(&self) -> Option<f64> {
        None
    }

    fn boxed_clone(&self) -> Box<dyn ProcessModel> {
        Box::new(self.clone())
    }
}
