use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{min_norm_solver, single_run, Controller, KnownLinearPlant};
use crate::error::{R2rError, Result};
use crate::process_models::{ControlVector, OutputVector, PeriodProbe, ProcessConfig};

/// Single-EWMA intercept filter with a known gain:
/// `a_t = lambda (y_t - B u_t) + (1 - lambda) a_{t-1}`, `u_{t+1} = B^+ (y* - a_t)`.
#[derive(Debug, Clone)]
pub struct EwmaController {
    lambda: f64,
    gain: DMatrix<f64>,
    solver: DMatrix<f64>,
    a0: DVector<f64>,
    a_hat: DVector<f64>,
    y_star: DVector<f64>,
}

impl EwmaController {
    pub fn new(process: &ProcessConfig, y_star: &[f64], lambda: f64) -> Result<Self> {
        let plant = KnownLinearPlant::from_process(process)?;
        Self::from_parts(plant.gain, plant.intercept, y_star, lambda)
    }

    pub fn from_parts(
        gain: DMatrix<f64>,
        a0: DVector<f64>,
        y_star: &[f64],
        lambda: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(R2rError::invalid("lambda_ewma", "must lie in [0, 1]"));
        }
        if a0.len() != gain.nrows() || y_star.len() != gain.nrows() {
            return Err(R2rError::Dimension {
                what: "ewma intercept/target",
                expected: gain.nrows(),
                got: y_star.len(),
            });
        }
        let solver = min_norm_solver(&gain)?;
        Ok(Self {
            lambda,
            gain,
            solver,
            a_hat: a0.clone(),
            a0,
            y_star: DVector::from_column_slice(y_star),
        })
    }

    pub fn intercept_estimate(&self) -> &[f64] {
        self.a_hat.as_slice()
    }

    /// Next action from the current intercept estimate.
    pub fn next_action(&self) -> ControlVector {
        ControlVector(
            (&self.solver * (&self.y_star - &self.a_hat))
                .as_slice()
                .to_vec(),
        )
    }

    fn update(&mut self, lambda: f64, u: &[f64], y: &[f64]) {
        let resid = DVector::from_column_slice(y) - &self.gain * DVector::from_column_slice(u);
        self.a_hat = resid * lambda + &self.a_hat * (1.0 - lambda);
    }
}

impl Controller for EwmaController {
    fn name(&self) -> &'static str {
        "ewma"
    }
    fn control_dim(&self) -> usize {
        self.gain.ncols()
    }
    fn output_dim(&self) -> usize {
        self.gain.nrows()
    }
    fn begin_path(&mut self, _y0: &OutputVector, _seed: u64) -> Result<()> {
        self.a_hat = self.a0.clone();
        Ok(())
    }
    fn control_period(
        &mut self,
        _t: usize,
        _y_prev: &OutputVector,
        probe: &mut PeriodProbe,
    ) -> Result<()> {
        single_run(probe, &self.next_action()).map(|_| ())
    }
    fn observe(&mut self, _t: usize, u: &ControlVector, y: &OutputVector) -> Result<()> {
        self.update(self.lambda, u, y);
        Ok(())
    }
}

/// Harmonic gain sequence `lambda_t = c / (t + s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhrParams {
    pub c: f64,
    pub s: f64,
}

impl Default for GhrParams {
    fn default() -> Self {
        Self { c: 1.0, s: 1.0 }
    }
}

impl GhrParams {
    pub fn gain(&self, t: usize) -> f64 {
        let denom = t as f64 + self.s;
        if !denom.is_finite() || denom <= 0.0 {
            return 0.0;
        }
        (self.c / denom).clamp(0.0, 1.0)
    }
}

/// Scalar intercept filter whose weight decays along a harmonic sequence.
#[derive(Debug, Clone)]
pub struct GhrController {
    params: GhrParams,
    inner: EwmaController,
}

impl GhrController {
    pub fn new(process: &ProcessConfig, y_star: &[f64], params: GhrParams) -> Result<Self> {
        let plant = KnownLinearPlant::from_process(process)?;
        if plant.gain.nrows() != 1 || plant.gain.ncols() != 1 {
            return Err(R2rError::Config(
                "the harmonic controller needs a scalar process".into(),
            ));
        }
        if plant.gain[(0, 0)] == 0.0 {
            return Err(R2rError::invalid("b", "process gain is zero"));
        }
        if !(params.c >= 0.0 && params.c.is_finite()) || params.s.is_nan() {
            return Err(R2rError::invalid("ghr_params", "c must be finite and >= 0"));
        }
        Ok(Self {
            params,
            inner: EwmaController::from_parts(plant.gain, plant.intercept, y_star, 0.0)?,
        })
    }
}

impl Controller for GhrController {
    fn name(&self) -> &'static str {
        "ghr"
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn begin_path(&mut self, y0: &OutputVector, seed: u64) -> Result<()> {
        self.inner.begin_path(y0, seed)
    }
    fn control_period(
        &mut self,
        t: usize,
        y_prev: &OutputVector,
        probe: &mut PeriodProbe,
    ) -> Result<()> {
        self.inner.control_period(t, y_prev, probe)
    }
    fn observe(&mut self, t: usize, u: &ControlVector, y: &OutputVector) -> Result<()> {
        self.inner.update(self.params.gain(t), u, y);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process_models::{simulate_path, ArimaProcessParams, LinearCmpParams};

    fn noiseless_cmp(delta: [f64; 2]) -> ProcessConfig {
        ProcessConfig::LinearCmp(LinearCmpParams {
            a: vec![-138.21, -627.32],
            b: vec![
                vec![5.018, -0.665, 16.34, 0.845],
                vec![13.67, 19.95, 27.52, 5.25],
            ],
            delta: delta.to_vec(),
            lambda: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            horizon: 10,
            y0: None,
        })
    }

    fn run(ctrl: &mut dyn Controller, process: &ProcessConfig) -> Vec<Vec<f64>> {
        let mut model = process.build().unwrap();
        simulate_path(model.as_mut(), ctrl, 1)
            .unwrap()
            .periods
            .iter()
            .map(|r| r.y.0.clone())
            .collect()
    }

    #[test]
    fn full_correction_without_drift_hits_target_from_start() {
        let p = noiseless_cmp([0.0, 0.0]);
        let mut c = EwmaController::new(&p, &[1700.0, 150.0], 1.0).unwrap();
        for y in run(&mut c, &p) {
            assert_close!(y[0], 1700.0, 1e-9);
            assert_close!(y[1], 150.0, 1e-9);
        }
    }

    #[test]
    fn frozen_filter_keeps_action_constant() {
        let p = noiseless_cmp([-17.0, -1.5]);
        let mut c = EwmaController::new(&p, &[1700.0, 150.0], 0.0).unwrap();
        let mut model = p.build().unwrap();
        let path = simulate_path(model.as_mut(), &mut c, 1).unwrap();
        let first = path.periods[0].u.clone();
        assert!(path.periods.iter().all(|r| r.u == first));
    }

    #[test]
    fn rank_deficient_gain_rejected() {
        let e = EwmaController::from_parts(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]),
            DVector::zeros(2),
            &[0.0, 0.0],
            0.3,
        );
        assert!(matches!(e, Err(R2rError::Config(_))));
    }

    fn arima() -> ProcessConfig {
        ProcessConfig::Arima(ArimaProcessParams {
            a: 91.7,
            b: -1.8,
            phi: 0.6,
            theta: 0.5,
            sigma: 1.0,
            horizon: 20,
        })
    }

    #[test]
    fn ghr_limits() {
        let p = arima();
        // c = 0: dead reckoning on the known intercept
        let mut g = GhrController::new(&p, &[90.0], GhrParams { c: 0.0, s: 1.0 }).unwrap();
        let mut model = p.build().unwrap();
        let path = simulate_path(model.as_mut(), &mut g, 3).unwrap();
        for r in &path.periods {
            assert_close!(r.u[0], (90.0 - 91.7) / -1.8, 1e-12);
        }
        // s -> infinity matches the frozen EWMA
        let mut g = GhrController::new(
            &p,
            &[90.0],
            GhrParams {
                c: 1.0,
                s: f64::INFINITY,
            },
        )
        .unwrap();
        let mut e = EwmaController::new(&p, &[90.0], 0.0).unwrap();
        let mut m1 = p.build().unwrap();
        let mut m2 = p.build().unwrap();
        let a = simulate_path(m1.as_mut(), &mut g, 4).unwrap();
        let b = simulate_path(m2.as_mut(), &mut e, 4).unwrap();
        assert_eq!(a.periods, b.periods);
    }

    #[test]
    fn ghr_gain_sequence() {
        let g = GhrParams { c: 2.0, s: 3.0 };
        assert_close!(g.gain(1), 0.5, 1e-15);
        assert_close!(g.gain(7), 0.2, 1e-15);
        assert_eq!(GhrParams { c: 5.0, s: 0.0 }.gain(1), 1.0);
    }
}
