//! Ratio-of-normals distribution, the action-variance quadratic, and Monte
//! Carlo checks of the estimator rate and control-error bounds.

mod checks;
pub mod normal;
pub mod quadrature;
mod ratio_dist;

use nalgebra::{DMatrix, DVector};

pub use checks::{
    theorem1_rate_check, theorem2_bound_check, BoundReport, CoordinateRate, RateReport,
    Theorem1Config, Theorem2Config,
};
pub use normal::{bvn_upper, phi_cdf, phi_pdf};
pub use ratio_dist::{
    ratio_cdf, ratio_cdf_normal_approx, ratio_pdf, RatioDistribution, SignConvention,
};

use crate::error::{R2rError, Result};
use crate::estimation::RatioMoments;

/// `g(u) = u^2 s2^2 - 2 u s12 + s1^2`, the variance of `u X2 - X1`.
pub fn g_variance_function(m: &RatioMoments, u: f64) -> f64 {
    u * u * m.sigma2 * m.sigma2 - 2.0 * u * m.sigma12 + m.sigma1 * m.sigma1
}

pub fn g_argmin(m: &RatioMoments) -> f64 {
    m.sigma12 / (m.sigma2 * m.sigma2)
}

pub fn g_min(m: &RatioMoments) -> f64 {
    let s22 = m.sigma2 * m.sigma2;
    (s22 * m.sigma1 * m.sigma1 - m.sigma12 * m.sigma12) / s22
}

/// `k (K'K)^{-1} K' U`: the offline actions projected onto the online
/// feature direction.
pub fn weighted_sample_mean(features: &[f64], k_matrix: &DMatrix<f64>, u: &[f64]) -> Result<f64> {
    if k_matrix.nrows() != u.len() {
        return Err(R2rError::Dimension {
            what: "K rows",
            expected: u.len(),
            got: k_matrix.nrows(),
        });
    }
    if features.len() != k_matrix.ncols() {
        return Err(R2rError::Dimension {
            what: "trajectory features",
            expected: k_matrix.ncols(),
            got: features.len(),
        });
    }
    let ktk = k_matrix.transpose() * k_matrix;
    let ktu = k_matrix.transpose() * DVector::from_column_slice(u);
    let chol = ktk.cholesky().ok_or(R2rError::Singular {
        deficient: 1,
        columns: k_matrix.ncols(),
    })?;
    // Cholesky succeeds on nearly singular Gram matrices too; check the pivots.
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
        (lo.min(*d), hi.max(*d))
    });
    if lo <= 1e-7 * hi {
        return Err(R2rError::Singular {
            deficient: 1,
            columns: k_matrix.ncols(),
        });
    }
    let h = chol.solve(&ktu);
    Ok(DVector::from_column_slice(features).dot(&h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn g_examples() {
        let m = RatioMoments::new(0.0, 1.0, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(g_argmin(&m), 0.0);
        assert_close!(g_min(&m), 4.0, 1e-15);
        let m = RatioMoments::new(0.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        assert_close!(g_argmin(&m), 1.0, 1e-15);
        assert_close!(g_min(&m), 3.0, 1e-15);
        assert_close!(g_variance_function(&m, g_argmin(&m)), g_min(&m), 1e-12);
    }

    #[test]
    fn weighted_mean_examples() {
        let u = [1.0, 2.0, 6.0];
        let ones = DMatrix::from_element(3, 1, 1.0);
        assert_close!(weighted_sample_mean(&[1.0], &ones, &u).unwrap(), 3.0, 1e-14);
        let same = [2.5; 3];
        assert_close!(
            weighted_sample_mean(&[1.0], &ones, &same).unwrap(),
            2.5,
            1e-14
        );
        let sing = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            weighted_sample_mean(&[1.0, 0.0], &sing, &u),
            Err(R2rError::Singular { .. })
        ));
    }

    #[test]
    fn weighted_mean_matches_normal_equations() {
        let mut rng = stream(5);
        let n = 40;
        let k = DMatrix::from_fn(n, 3, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        });
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = [1.0, 0.3, -0.7];
        // regression of U on K via QR, then the fitted value at f
        let coef = k
            .clone()
            .svd(true, true)
            .solve(&DVector::from_vec(u.clone()), 1e-14)
            .unwrap();
        let want = DVector::from_column_slice(&f).dot(&coef);
        assert_close!(weighted_sample_mean(&f, &k, &u).unwrap(), want, 1e-10);
    }

    proptest! {
        #[test]
        fn g_never_below_min(s1 in 0.1f64..5.0, s2 in 0.1f64..5.0, rho in -0.99f64..0.99, u in -100.0f64..100.0) {
            let m = RatioMoments::from_correlation(0.0, 1.0, s1, s2, rho).unwrap();
            prop_assert!(g_variance_function(&m, u) >= g_min(&m) - 1e-9 * (1.0 + u * u));
        }

        #[test]
        fn weighted_mean_invariant_to_reparameterization(seed in 0u64..1000, m01 in -2.0f64..2.0, m11 in 0.5f64..3.0) {
            let mut rng = stream(seed);
            let n = 25;
            let k = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = DVector::from_vec(vec![1.0, 0.4]);
            let m = DMatrix::from_row_slice(2, 2, &[1.0, m01, 0.0, m11]);
            let km = &k * &m;
            // features transform with the columns: k M for the online row
            let fm = (f.transpose() * &m).transpose();
            let a = weighted_sample_mean(f.as_slice(), &k, &u).unwrap();
            let b = weighted_sample_mean(fm.as_slice(), &km, &u).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
