//! Distribution of the ratio `X1 / X2` of correlated normals.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::normal::{bvn_upper, phi_cdf};
use super::quadrature::integrate;
use crate::error::{R2rError, Result};
use crate::estimation::RatioMoments;
use crate::rng::stream;

/// Which sign the denominator mean carries. Negative-gain queries are
/// answered through the distribution of `-u`, whose denominator is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    BPositive,
    BNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioDistribution {
    pub moments: RatioMoments,
    pub sign_convention: SignConvention,
}

const RHO_LIMIT: f64 = 1.0 - 1e-12;

impl RatioDistribution {
    /// Picks the sign convention from the sign of `mu2`.
    pub fn new(moments: RatioMoments) -> Result<Self> {
        if moments.rho.abs() >= RHO_LIMIT {
            return Err(R2rError::DegenerateDistribution);
        }
        let sign_convention = if moments.mu2 < 0.0 {
            SignConvention::BNegative
        } else {
            SignConvention::BPositive
        };
        Ok(Self {
            moments,
            sign_convention,
        })
    }

    fn negated(&self) -> bool {
        self.sign_convention == SignConvention::BNegative
    }

    /// Moments of the distribution queries are evaluated on.
    fn working(&self) -> RatioMoments {
        let m = self.moments;
        if self.negated() {
            RatioMoments {
                mu2: -m.mu2,
                sigma12: -m.sigma12,
                rho: -m.rho,
                ..m
            }
        } else {
            m
        }
    }

    pub fn pdf(&self, u: f64) -> f64 {
        let w = if self.negated() { -u } else { u };
        hinkley_pdf(&self.working(), w)
    }

    pub fn cdf(&self, u: f64) -> f64 {
        if self.negated() {
            1.0 - orthant_cdf(&self.working(), -u)
        } else {
            orthant_cdf(&self.working(), u)
        }
    }

    /// Normal approximation `Phi((mu2 w - mu1) / sqrt(g(w)))` in the working
    /// coordinates.
    pub fn cdf_normal_approx(&self, u: f64) -> f64 {
        if self.negated() {
            1.0 - approx_cdf(&self.working(), -u)
        } else {
            approx_cdf(&self.working(), u)
        }
    }

    /// Guaranteed sup-distance between `cdf` and `cdf_normal_approx`.
    pub fn approx_error_bound(&self) -> f64 {
        let m = self.working();
        phi_cdf(-m.mu2 / m.sigma2)
    }

    /// One draw of `X1 / X2`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = self.moments;
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let x1 = m.mu1 + m.sigma1 * z1;
        let x2 = m.mu2 + m.sigma2 * (m.rho * z1 + (1.0 - m.rho * m.rho).sqrt() * z2);
        x1 / x2
    }

    /// Kolmogorov–Smirnov distance between `cdf` and the empirical
    /// distribution of `draws` seeded samples.
    pub fn ks_distance(&self, draws: usize, seed: u64) -> f64 {
        let mut rng = stream(seed);
        let mut xs: Vec<f64> = (0..draws).map(|_| self.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.par_iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = self.cdf(x);
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Total probability mass of `pdf`, integrated outward from `mu1 / mu2`
    /// until a doubling of the window adds less than `1e-8`.
    pub fn pdf_total_mass(&self) -> f64 {
        let m = self.moments;
        let center = if m.mu2 != 0.0 { m.mu1 / m.mu2 } else { 0.0 };
        let scale = (m.sigma1 / m.mu2.abs().max(m.sigma2)).max(1e-12);
        let mut half = 10.0 * scale;
        let f = |u: f64| self.pdf(u);
        let mut mass = integrate(f, center - half, center + half, 1e-12);
        for _ in 0..200 {
            let lo = integrate(f, center - 2.0 * half, center - half, 1e-13);
            let hi = integrate(f, center + half, center + 2.0 * half, 1e-13);
            mass += lo + hi;
            half *= 2.0;
            if lo + hi < 1e-8 {
                break;
            }
        }
        mass
    }
}

/// Hinkley's density of `X1 / X2`.
fn hinkley_pdf(m: &RatioMoments, w: f64) -> f64 {
    let (s1, s2, r) = (m.sigma1, m.sigma2, m.rho);
    let one_r2 = 1.0 - r * r;
    let a2 = w * w / (s1 * s1) - 2.0 * r * w / (s1 * s2) + 1.0 / (s2 * s2);
    let a = a2.sqrt();
    let b = m.mu1 * w / (s1 * s1) - r * (m.mu1 + m.mu2 * w) / (s1 * s2) + m.mu2 / (s2 * s2);
    let c =
        m.mu1 * m.mu1 / (s1 * s1) - 2.0 * r * m.mu1 * m.mu2 / (s1 * s2) + m.mu2 * m.mu2 / (s2 * s2);
    // b^2 - c a^2 <= 0 always, so d <= 1
    let d = ((b * b - c * a2) / (2.0 * one_r2 * a2)).exp();
    let q = b / (one_r2.sqrt() * a);
    let first = b * d / (a2 * a) / ((2.0 * PI).sqrt() * s1 * s2) * (phi_cdf(q) - phi_cdf(-q));
    let second = one_r2.sqrt() / (PI * s1 * s2 * a2) * (-c / (2.0 * one_r2)).exp();
    (first + second).max(0.0)
}

/// `sqrt(g(w))`, the standard deviation of `w X2 - X1`.
fn spread(m: &RatioMoments, w: f64) -> f64 {
    (w * w * m.sigma2 * m.sigma2 - 2.0 * w * m.sigma12 + m.sigma1 * m.sigma1)
        .max(0.0)
        .sqrt()
}

/// `P(X1/X2 <= w) = L(h, -mu2/s2; r) + L(-h, mu2/s2; r)`.
fn orthant_cdf(m: &RatioMoments, w: f64) -> f64 {
    let s = spread(m, w);
    let h = (m.mu1 - m.mu2 * w) / s;
    let r = ((w * m.sigma2 * m.sigma2 - m.sigma12) / (s * m.sigma2)).clamp(-1.0, 1.0);
    let k = m.mu2 / m.sigma2;
    (bvn_upper(h, -k, r) + bvn_upper(-h, k, r)).clamp(0.0, 1.0)
}

fn approx_cdf(m: &RatioMoments, w: f64) -> f64 {
    phi_cdf((m.mu2 * w - m.mu1) / spread(m, w))
}

pub fn ratio_pdf(dist: &RatioDistribution, u: f64) -> f64 {
    dist.pdf(u)
}

pub fn ratio_cdf(dist: &RatioDistribution, u: f64) -> f64 {
    dist.cdf(u)
}

pub fn ratio_cdf_normal_approx(dist: &RatioDistribution, u: f64) -> f64 {
    dist.cdf_normal_approx(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn dist(mu1: f64, mu2: f64, s1: f64, s2: f64, rho: f64) -> RatioDistribution {
        RatioDistribution::new(RatioMoments::from_correlation(mu1, mu2, s1, s2, rho).unwrap())
            .unwrap()
    }

    #[test]
    fn central_case_is_cauchy() {
        let d = dist(0.0, 0.0, 1.0, 1.0, 0.0);
        assert_close!(d.pdf(0.0), 1.0 / PI, 1e-15);
        assert_close!(d.pdf(2.0), 1.0 / (PI * 5.0), 1e-15);
        assert_close!(d.cdf(0.0), 0.5, 1e-14);
        assert_close!(d.cdf(1.0), 0.75, 1e-12);
    }

    #[test]
    fn degenerate_correlation_rejected() {
        let m = RatioMoments::from_correlation(1.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            RatioDistribution::new(m),
            Err(R2rError::DegenerateDistribution)
        ));
    }

    #[test]
    fn approx_is_half_at_mean_ratio() {
        let d = dist(3.0, 2.0, 0.5, 0.4, 0.3);
        assert_close!(d.cdf_normal_approx(1.5), 0.5, 1e-15);
        let n = dist(3.0, -2.0, 0.5, 0.4, 0.3);
        assert_close!(n.cdf_normal_approx(-1.5), 0.5, 1e-15);
    }

    #[test]
    fn cdf_derivative_matches_pdf() {
        let mut rng = stream(11);
        for _ in 0..100 {
            let mu2 = rng.random_range(0.5..4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let d = dist(
                rng.random_range(-3.0..3.0),
                mu2,
                rng.random_range(0.3..2.0),
                rng.random_range(0.3..1.5),
                rng.random_range(-0.9..0.9),
            );
            let u = d.moments.mu1 / d.moments.mu2 + rng.random_range(-2.0..2.0);
            let h = 1e-5;
            let fd = (d.cdf(u + h) - d.cdf(u - h)) / (2.0 * h);
            assert!(
                (fd - d.pdf(u)).abs() < 1e-4,
                "u={u} fd={fd} pdf={}",
                d.pdf(u)
            );
        }
    }

    #[test]
    fn negative_gain_mirrors_positive() {
        let pos = dist(3.0, 2.0, 0.5, 0.4, 0.3);
        // u = X1 / X2 with X2 -> -X2 gives -u
        let neg = dist(3.0, -2.0, 0.5, 0.4, -0.3);
        for u in [-3.0, -1.5, -0.2, 0.4, 1.7] {
            assert_close!(neg.pdf(u), pos.pdf(-u), 1e-13);
            assert_close!(neg.cdf(u), 1.0 - pos.cdf(-u), 1e-13);
        }
        assert_eq!(neg.sign_convention, SignConvention::BNegative);
    }

    #[test]
    fn cdf_is_monotone_with_limits() {
        let d = dist(1.0, 1.0, 1.0, 1.0, 0.5);
        let mut prev = 0.0;
        for i in -400..=400 {
            let c = d.cdf(i as f64 * 0.05);
            assert!(c + 1e-14 >= prev);
            prev = c;
        }
        assert!(d.cdf(-1e9) < 1e-6);
        assert!(d.cdf(1e9) > 1.0 - 1e-6);
    }

    #[test]
    fn mass_is_one() {
        for (mu1, mu2, rho) in [(0.0, 0.0, 0.0), (2.0, 1.0, 0.4), (-5.0, 3.0, -0.7)] {
            let d = dist(mu1, mu2, 1.0, 1.0, rho);
            assert!((d.pdf_total_mass() - 1.0).abs() < 1e-6);
        }
    }
}
