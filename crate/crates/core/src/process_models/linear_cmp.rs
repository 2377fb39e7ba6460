use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    check_horizon, default_cmp_horizon, ControlVector, OutputVector, ProcessModel, Stepper,
};
use crate::error::{R2rError, Result};
use crate::rng::{stream, StreamRng};

/// `y_t = A + B u_t + delta * t + w_t`, `w_t ~ N(0, Lambda)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearCmpParams {
    pub a: Vec<f64>,
    /// Row-major `m_y x m_u` gain matrix.
    pub b: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    /// Row-major `m_y x m_y` noise covariance.
    pub lambda: Vec<Vec<f64>>,
    #[serde(default = "default_cmp_horizon")]
    pub horizon: usize,
    /// Output reported for period 0; defaults to `A`.
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
}

impl LinearCmpParams {
    pub fn output_dim(&self) -> usize {
        self.a.len()
    }

    pub fn control_dim(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn gain(&self) -> DMatrix<f64> {
        let (m, n) = (self.output_dim(), self.control_dim());
        DMatrix::from_fn(m, n, |i, j| self.b[i][j])
    }

    /// Noise-free mean output at period `t`.
    pub fn mean_output(&self, u: &[f64], t: usize) -> Vec<f64> {
        (0..self.output_dim())
            .map(|i| {
                self.a[i]
                    + self.b[i].iter().zip(u).map(|(b, u)| b * u).sum::<f64>()
                    + self.delta[i] * t as f64
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        check_horizon(self.horizon)?;
        let m = self.output_dim();
        let n = self.control_dim();
        if m == 0 || n == 0 {
            return Err(R2rError::invalid("b", "gain matrix must be non-empty"));
        }
        if self.b.len() != m || self.b.iter().any(|r| r.len() != n) {
            return Err(R2rError::invalid("b", format!("expected a {m}x{n} matrix")));
        }
        if self.delta.len() != m {
            return Err(R2rError::invalid("delta", format!("expected length {m}")));
        }
        if self.lambda.len() != m || self.lambda.iter().any(|r| r.len() != m) {
            return Err(R2rError::invalid(
                "lambda",
                format!("expected a {m}x{m} matrix"),
            ));
        }
        if let Some(y0) = &self.y0 {
            if y0.len() != m {
                return Err(R2rError::invalid("y0", format!("expected length {m}")));
            }
        }
        let all = self
            .a
            .iter()
            .chain(self.delta.iter())
            .chain(self.b.iter().flatten())
            .chain(self.lambda.iter().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(R2rError::invalid("linear_cmp", "non-finite parameter"));
        }
        for i in 0..m {
            for j in 0..i {
                let (x, y) = (self.lambda[i][j], self.lambda[j][i]);
                if (x - y).abs() > 1e-9 * (1.0 + x.abs().max(y.abs())) {
                    return Err(R2rError::invalid("lambda", "must be symmetric"));
                }
            }
        }
        Ok(())
    }
}

/// Symmetric square root of a PSD matrix via its eigen-decomposition.
pub(crate) fn psd_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = cov.clone().symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale.max(1e-300);
    if eig.eigenvalues.iter().any(|&v| v < -tol) {
        return Err(R2rError::invalid("lambda", "must be positive semidefinite"));
    }
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()),
    );
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

#[derive(Debug, Clone)]
pub struct LinearCmp {
    params: LinearCmpParams,
    gain: DMatrix<f64>,
    noise_root: DMatrix<f64>,
    rng: StreamRng,
    stepper: Stepper<()>,
}

impl LinearCmp {
    pub fn new(params: LinearCmpParams) -> Result<Self> {
        params.validate()?;
        let m = params.output_dim();
        let lambda = DMatrix::from_fn(m, m, |i, j| params.lambda[i][j]);
        Ok(Self {
            gain: params.gain(),
            noise_root: psd_sqrt(&lambda)?,
            rng: stream(0),
            stepper: Stepper::new(params.horizon, ()),
            params,
        })
    }

    pub fn params(&self) -> &LinearCmpParams {
        &self.params
    }
}

impl ProcessModel for LinearCmp {
    fn family(&self) -> &'static str {
        "linear_cmp"
    }

    fn control_dim(&self) -> usize {
        self.params.control_dim()
    }

    fn output_dim(&self) -> usize {
        self.params.output_dim()
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn initial_output(&self) -> OutputVector {
        OutputVector(
            self.params
                .y0
                .clone()
                .unwrap_or_else(|| self.params.a.clone()),
        )
    }

    fn reset(&mut self, seed: u64) {
        self.rng = stream(seed);
        self.stepper.reset();
    }

    fn step(&mut self, u: &ControlVector, t: usize) -> Result<OutputVector> {
        u.check_dim(self.control_dim())?;
        self.stepper.begin(t)?;
        let m = self.output_dim();
        let z =
            DVector::from_iterator(m, (0..m).map(|_| self.rng.sample::<f64, _>(StandardNormal)));
        let w = &self.noise_root * z;
        let bu = &self.gain * DVector::from_column_slice(u);
        let y = (0..m)
            .map(|i| self.params.a[i] + bu[i] + self.params.delta[i] * t as f64 + w[i])
            .collect();
        self.stepper.finish(t, ());
        Ok(OutputVector(y))
    }

    fn disturbance(&self) -> Option<f64> {
        None
    }

    fn boxed_clone(&self) -> Box<dyn ProcessModel> {
        Box::new(self.clone())
    }
}
