use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LinearModelFit;
use crate::error::{R2rError, Result};

/// Joint normal moments of `(y* - c_hat, b_hat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMoments {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma12: f64,
    pub rho: f64,
}

impl RatioMoments {
    /// Builds the moments, clamping `sigma12` onto `|sigma12| <= sigma1 sigma2`
    /// when it overshoots by rounding only.
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, sigma12: f64) -> Result<Self> {
        if !(sigma1 > 0.0 && sigma2 > 0.0 && sigma1.is_finite() && sigma2.is_finite()) {
            return Err(R2rError::invalid("sigma1/sigma2", "must be finite and > 0"));
        }
        if !(mu1.is_finite() && mu2.is_finite() && sigma12.is_finite()) {
            return Err(R2rError::NonFinite("ratio moments"));
        }
        let bound = sigma1 * sigma2;
        if sigma12.abs() > bound * (1.0 + 1e-9) {
            return Err(R2rError::invalid(
                "sigma12",
                format!("|{sigma12}| exceeds sigma1 * sigma2 = {bound}"),
            ));
        }
        let sigma12 = sigma12.clamp(-bound, bound);
        Ok(Self {
            mu1,
            mu2,
            sigma1,
            sigma2,
            sigma12,
            rho: sigma12 / bound,
        })
    }

    pub fn from_correlation(
        mu1: f64,
        mu2: f64,
        sigma1: f64,
        sigma2: f64,
        rho: f64,
    ) -> Result<Self> {
        Self::new(mu1, mu2, sigma1, sigma2, rho * sigma1 * sigma2)
    }
}

/// Moments from a fit on the design `[U K]` (action column first), evaluated
/// at the online features `k`, using the fit's `sigma^2 (X^T X)^{-1}` directly.
pub fn ratio_moments_from_fit(
    fit: &LinearModelFit,
    trajectory_features: &[f64],
    y_star: f64,
) -> Result<RatioMoments> {
    let p = fit.n_params();
    if trajectory_features.len() + 1 != p {
        return Err(R2rError::Dimension {
            what: "trajectory features",
            expected: p - 1,
            got: trajectory_features.len(),
        });
    }
    let k = DVector::from_column_slice(trajectory_features);
    let theta = fit.coefficients(0);
    let cov = fit.covariance(0);
    let gamma = theta.rows(1, p - 1);
    let c_hat = gamma.dot(&k);
    let cov_kk = cov.view((1, 1), (p - 1, p - 1));
    let cov_bk = cov.view((0, 1), (1, p - 1));
    let var1 = (k.transpose() * cov_kk * &k)[(0, 0)];
    let cov12 = -(cov_bk * &k)[(0, 0)];
    RatioMoments::new(
        y_star - c_hat,
        theta[0],
        var1.max(0.0).sqrt(),
        cov[(0, 0)].sqrt(),
        cov12,
    )
}

/// Moments from the partitioned-inverse expressions for `[U K]`: with
/// `S = U'U - U'K (K'K)^{-1} K'U` and `h = (K'K)^{-1} K'U`,
/// `var(b) = s2 / S`, `cov(y* - c, b) = s2 k.h / S`,
/// `var(y* - c) = s2 k ((K'K)^{-1} + h h' / S) k'`.
///
/// `b` and `gamma` are the coefficient values the means are evaluated at.
pub fn ratio_moments_from_design(
    u: &[f64],
    k_matrix: &DMatrix<f64>,
    trajectory_features: &[f64],
    sigma2: f64,
    b: f64,
    gamma: &[f64],
    y_star: f64,
) -> Result<RatioMoments> {
    let n = u.len();
    let m = k_matrix.ncols();
    if k_matrix.nrows() != n {
        return Err(R2rError::Dimension {
            what: "K rows",
            expected: n,
            got: k_matrix.nrows(),
        });
    }
    if trajectory_features.len() != m || gamma.len() != m {
        return Err(R2rError::Dimension {
            what: "trajectory features",
            expected: m,
            got: trajectory_features.len(),
        });
    }
    let uu = DVector::from_column_slice(u);
    let ktk = k_matrix.transpose() * k_matrix;
    let ktk_inv = ktk
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(R2rError::Singular {
            deficient: 1,
            columns: m,
        })?;
    let ktu = k_matrix.transpose() * &uu;
    let h = &ktk_inv * &ktu;
    let schur = uu.dot(&uu) - ktu.dot(&h);
    if schur <= 1e-12 * uu.dot(&uu).max(f64::MIN_POSITIVE) {
        return Err(R2rError::Singular {
            deficient: 1,
            columns: m + 1,
        });
    }
    let k = DVector::from_column_slice(trajectory_features);
    let kh = k.dot(&h);
    let var1 = sigma2 * ((k.transpose() * &ktk_inv * &k)[(0, 0)] + kh * kh / schur);
    let var2 = sigma2 / schur;
    let cov12 = sigma2 * kh / schur;
    let c = DVector::from_column_slice(gamma).dot(&k);
    RatioMoments::new(y_star - c, b, var1.sqrt(), var2.sqrt(), cov12)
}
