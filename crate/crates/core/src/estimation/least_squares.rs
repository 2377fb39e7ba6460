use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{R2rError, Result};

/// Relative eigenvalue threshold (on the Jacobi-scaled Gram matrix) below
/// which a direction counts as rank deficient.
const RANK_TOL: f64 = 1e-11;
const RIDGE_FACTOR: f64 = 1e-8;

/// Design matrix `x` (`n x p`) and responses `y` (`n x m_y`).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDesign {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl RegressionDesign {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(R2rError::DegenerateDesign("empty design matrix".into()));
        }
        if y.nrows() != x.nrows() {
            return Err(R2rError::Dimension {
                what: "response rows",
                expected: x.nrows(),
                got: y.nrows(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(R2rError::NonFinite("regression design"));
        }
        Ok(Self { x, y })
    }

    pub fn scalar(x: DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let n = y.len();
        Self::new(x, DMatrix::from_column_slice(n, 1, y))
    }
}

/// Least-squares estimate for one or more outputs sharing a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelFit {
    /// `p x m_y`; column `k` holds the coefficients of output `k`.
    pub theta_hat: DMatrix<f64>,
    /// Unbiased residual variance per output (`RSS / (n - p)`, zero when `n <= p`).
    pub residual_variance: Vec<f64>,
    /// `(X^T X)^{-1}`, ridge-regularised when `ridge_applied`.
    pub gram_inverse: DMatrix<f64>,
    pub n_samples: usize,
    pub ridge_applied: bool,
}

impl LinearModelFit {
    pub fn n_params(&self) -> usize {
        self.theta_hat.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.theta_hat.ncols()
    }

    /// `sigma_k^2 (X^T X)^{-1}` for output `k`.
    pub fn covariance(&self, output: usize) -> DMatrix<f64> {
        &self.gram_inverse * self.residual_variance[output]
    }

    pub fn coefficients(&self, output: usize) -> DVector<f64> {
        self.theta_hat.column(output).into_owned()
    }

    pub fn predict(&self, features: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(features);
        (0..self.n_outputs())
            .map(|k| self.theta_hat.column(k).dot(&x))
            .collect()
    }

    /// Euclidean distance between two coefficient sets of the same shape.
    pub fn parameter_distance(&self, other: &LinearModelFit) -> f64 {
        (&self.theta_hat - &other.theta_hat).norm()
    }
}

/// Sufficient statistics `X^T X`, `X^T Y`, `Y^T Y` of a growing dataset.
///
/// Fitting from these is the same computation as [`fit_least_squares`] on the
/// stacked rows; it just avoids rebuilding the design each refit.
#[derive(Debug, Clone, PartialEq)]
pub struct GramAccumulator {
    xtx: DMatrix<f64>,
    xty: DMatrix<f64>,
    yty: DVector<f64>,
    n: usize,
}

impl GramAccumulator {
    pub fn new(n_features: usize, n_outputs: usize) -> Self {
        Self {
            xtx: DMatrix::zeros(n_features, n_features),
            xty: DMatrix::zeros(n_features, n_outputs),
            yty: DVector::zeros(n_outputs),
            n: 0,
        }
    }

    pub fn from_design(design: &RegressionDesign) -> Self {
        let x = &design.x;
        let y = &design.y;
        let yty = DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.dot(&c)));
        Self {
            xtx: x.transpose() * x,
            xty: x.transpose() * y,
            yty,
            n: x.nrows(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.xtx.nrows()
    }

    pub fn push(&mut self, x: &[f64], y: &[f64]) {
        let p = self.n_features();
        debug_assert_eq!(x.len(), p);
        debug_assert_eq!(y.len(), self.xty.ncols());
        for i in 0..p {
            for j in 0..=i {
                let v = x[i] * x[j];
                self.xtx[(i, j)] += v;
                if i != j {
                    self.xtx[(j, i)] += v;
                }
            }
            for (k, yk) in y.iter().enumerate() {
                self.xty[(i, k)] += x[i] * yk;
            }
        }
        for (k, yk) in y.iter().enumerate() {
            self.yty[k] += yk * yk;
        }
        self.n += 1;
    }

    pub fn fit(&self, ridge_fallback: bool) -> Result<LinearModelFit> {
        let p = self.n_features();
        if self.n == 0 {
            return Err(R2rError::DegenerateDesign("no samples".into()));
        }
        // Jacobi scaling so that rank decisions do not depend on feature units.
        let scale: Vec<f64> = (0..p)
            .map(|i| {
                let d = self.xtx[(i, i)].sqrt();
                if d > 0.0 {
                    d
                } else {
                    1.0
                }
            })
            .collect();
        let mut scaled = DMatrix::from_fn(p, p, |i, j| self.xtx[(i, j)] / (scale[i] * scale[j]));
        let eig = scaled.clone().symmetric_eigen();
        let max_eig = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
        let deficient = eig
            .eigenvalues
            .iter()
            .filter(|v| **v <= RANK_TOL * max_eig.max(f64::MIN_POSITIVE))
            .count();
        let mut ridge_applied = false;
        if deficient > 0 {
            if !ridge_fallback {
                return Err(R2rError::Singular {
                    deficient,
                    columns: p,
                });
            }
            let lambda = RIDGE_FACTOR * scaled.trace() / p as f64;
            warn!("rank-deficient design ({deficient} of {p} columns); ridge lambda = {lambda:e}");
            for i in 0..p {
                scaled[(i, i)] += lambda;
            }
            ridge_applied = true;
        }
        let scaled_inv = match scaled.clone().cholesky() {
            Some(c) => c.inverse(),
            None => {
                // Cholesky can still fail on a numerically indefinite matrix;
                // fall back to the eigen pseudo-inverse.
                let eig = scaled.symmetric_eigen();
                let inv = eig.eigenvalues.map(|v| if v > 0.0 { 1.0 / v } else { 0.0 });
                &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
            }
        };
        let gram_inverse =
            DMatrix::from_fn(p, p, |i, j| scaled_inv[(i, j)] / (scale[i] * scale[j]));
        let theta_hat = &gram_inverse * &self.xty;
        let dof = self.n.saturating_sub(p);
        let residual_variance = (0..self.xty.ncols())
            .map(|k| {
                let th = theta_hat.column(k);
                let rss =
                    self.yty[k] - 2.0 * th.dot(&self.xty.column(k)) + (&self.xtx * th).dot(&th);
                if dof == 0 {
                    0.0
                } else {
                    rss.max(0.0) / dof as f64
                }
            })
            .collect();
        Ok(LinearModelFit {
            theta_hat,
            residual_variance,
            gram_inverse,
            n_samples: self.n,
            ridge_applied,
        })
    }
}

/// Ordinary least squares with an optional ridge fallback for singular designs.
pub fn fit_least_squares(
    design: &RegressionDesign,
    ridge_fallback: bool,
) -> Result<LinearModelFit> {
    GramAccumulator::from_design(design).fit(ridge_fallback)
}

/// Variance of the predicted output of `y = a + b u` at action `u_t`, given the
/// previous actions: `(1/(t-1) + (u_t - mean)^2 / Sxx) sigma^2`.
pub fn prediction_variance_with(sigma2: f64, u_t: f64, history: &[f64]) -> Result<f64> {
    if history.len() < 2 {
        return Err(R2rError::DegenerateDesign(format!(
            "need at least 2 past actions, got {}",
            history.len()
        )));
    }
    let n = history.len() as f64;
    let mean = history.iter().sum::<f64>() / n;
    let sxx: f64 = history.iter().map(|u| (u - mean).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(R2rError::DegenerateDesign(
            "past actions have zero spread".into(),
        ));
    }
    Ok((1.0 / n + (u_t - mean).powi(2) / sxx) * sigma2)
}

/// [`prediction_variance_with`] using the residual variance of a scalar fit.
pub fn prediction_variance(fit: &LinearModelFit, u_t: f64, history: &[f64]) -> Result<f64> {
    if fit.n_outputs() != 1 || fit.n_params() != 2 {
        return Err(R2rError::Dimension {
            what: "scalar intercept/slope fit parameters",
            expected: 2,
            got: fit.n_params(),
        });
    }
    prediction_variance_with(fit.residual_variance[0], u_t, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identity_design_recovers_responses() {
        let x = DMatrix::identity(3, 3);
        let d = RegressionDesign::scalar(x, &[1.0, 2.0, 3.0]).unwrap();
        let fit = fit_least_squares(&d, false).unwrap();
        for (i, want) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert_close!(fit.theta_hat[(i, 0)], *want, 1e-12);
        }
        assert_eq!(fit.residual_variance[0], 0.0);
    }

    #[test]
    fn noisy_line_within_three_standard_errors() {
        let mut rng = stream(11);
        let n = 100;
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = u
            .iter()
            .map(|u| 91.7 - 1.8 * u + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { u[i] });
        let fit = fit_least_squares(&RegressionDesign::scalar(x, &y).unwrap(), false).unwrap();
        let cov = fit.covariance(0);
        assert!((fit.theta_hat[(0, 0)] - 91.7).abs() < 3.0 * cov[(0, 0)].sqrt());
        assert!((fit.theta_hat[(1, 0)] + 1.8).abs() < 3.0 * cov[(1, 1)].sqrt());
    }

    #[test]
    fn singular_design_reports_deficiency_or_ridges() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 2.0, 1.0, 3.0, 3.0, 1.0, 4.0, 4.0]);
        let d = RegressionDesign::scalar(x, &[1.0, 2.0, 3.0]).unwrap();
        match fit_least_squares(&d, false) {
            Err(R2rError::Singular { deficient, columns }) => {
                assert_eq!(deficient, 1);
                assert_eq!(columns, 3);
            }
            other => panic!("expected singular error, got {other:?}"),
        }
        let fit = fit_least_squares(&d, true).unwrap();
        assert!(fit.ridge_applied);
        // ridge splits the duplicated column's effect evenly
        assert_close!(fit.theta_hat[(1, 0)], fit.theta_hat[(2, 0)], 1e-6);
        let pred = fit.predict(&[1.0, 5.0, 5.0])[0];
        assert_close!(pred, 4.0, 1e-5);
    }

    #[test]
    fn accumulator_matches_batch_fit() {
        let mut rng = stream(3);
        let n = 40;
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() });
        let y = DMatrix::from_fn(n, 2, |i, k| {
            x[(i, 1)] * (k as f64 + 1.0) + rng.random::<f64>()
        });
        let d = RegressionDesign::new(x.clone(), y.clone()).unwrap();
        let batch = fit_least_squares(&d, false).unwrap();
        let mut acc = GramAccumulator::new(3, 2);
        for i in 0..n {
            let xi: Vec<f64> = x.row(i).iter().copied().collect();
            let yi: Vec<f64> = y.row(i).iter().copied().collect();
            acc.push(&xi, &yi);
        }
        let inc = acc.fit(false).unwrap();
        assert!((batch.theta_hat - inc.theta_hat).norm() < 1e-10);
        for k in 0..2 {
            assert_close!(batch.residual_variance[k], inc.residual_variance[k], 1e-10);
        }
    }

    #[test]
    fn prediction_variance_examples() {
        assert_close!(
            prediction_variance_with(1.0, 1.5, &[0.0, 1.0, 2.0, 3.0]).unwrap(),
            0.25,
            1e-15
        );
        assert_close!(
            prediction_variance_with(2.0, 5.0, &[0.0, 1.0, 2.0, 3.0]).unwrap(),
            5.4,
            1e-12
        );
        assert!(matches!(
            prediction_variance_with(1.0, 0.0, &[2.0, 2.0, 2.0]),
            Err(R2rError::DegenerateDesign(_))
        ));
        let h = [0.3, -1.0, 2.5, 0.7];
        let mut last = 0.0;
        for k in 0..20 {
            let v = prediction_variance_with(1.3, 0.625 + k as f64 * 0.3, &h).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn prediction_variance_matches_raw_design_quadratic_form() {
        let mut rng = stream(5);
        for _ in 0..50 {
            let n = rng.random_range(3..12);
            let h: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let u_t = rng.random_range(-8.0..8.0);
            let s2 = rng.random_range(0.1..4.0);
            let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { h[i] });
            let inv = (x.transpose() * &x).try_inverse().unwrap();
            let xs = DVector::from_vec(vec![1.0, u_t]);
            let brute = s2 * (xs.transpose() * inv * &xs)[(0, 0)];
            let closed = prediction_variance_with(s2, u_t, &h).unwrap();
            assert!((brute - closed).abs() < 1e-9 * brute.max(1.0));
        }
    }
}
