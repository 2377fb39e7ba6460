//! Standard normal and bivariate normal orthant probabilities.

// quadrature and series constants are kept exactly as tabulated
#![allow(clippy::excessive_precision)]

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
pub fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

const GL6_W: [f64; 3] = [0.1713244923791705, 0.3607615730481384, 0.4679139345726904];
const GL6_X: [f64; 3] = [0.9324695142031522, 0.6612093864662647, 0.2386191860831970];
const GL12_W: [f64; 6] = [
    0.04717533638651177,
    0.1069393259953183,
    0.1600783285433464,
    0.2031674267230659,
    0.2334925365383547,
    0.2491470458134029,
];
const GL12_X: [f64; 6] = [
    0.9815606342467191,
    0.9041172563704750,
    0.7699026741943050,
    0.5873179542866171,
    0.3678314989981802,
    0.1252334085114692,
];
const GL20_W: [f64; 10] = [
    0.01761400713915212,
    0.04060142980038694,
    0.06267204833410906,
    0.08327674157670475,
    0.1019301198172404,
    0.1181945319615184,
    0.1316886384491766,
    0.1420961093183821,
    0.1491729864726037,
    0.1527533871307259,
];
const GL20_X: [f64; 10] = [
    0.9931285991850949,
    0.9639719272779138,
    0.9122344282513259,
    0.8391169718222188,
    0.7463319064601508,
    0.6360536807265150,
    0.5108670019508271,
    0.3737060887154196,
    0.2277858511416451,
    0.07652652113349733,
];

/// Upper orthant probability `L(h, k; r) = P(X > h, Y > k)` for standard
/// normals with correlation `r`.
///
/// Drezner-Wesolowsky / Genz: Gauss-Legendre quadrature of the Plackett
/// identity for `|r| < 0.925`, and an asymptotic expansion around `|r| = 1`
/// otherwise. Absolute error is around `1e-15`.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    let r = r.clamp(-1.0, 1.0);
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY {
            1.0
        } else {
            phi_cdf(-k)
        };
    }
    if k == f64::NEG_INFINITY {
        return phi_cdf(-h);
    }
    if r == 0.0 {
        return phi_cdf(-h) * phi_cdf(-k);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_W, &GL6_X)
    } else if r.abs() < 0.75 {
        (&GL12_W, &GL12_X)
    } else {
        (&GL20_W, &GL20_X)
    };
    let tp = 2.0 * PI;
    let (mut h, mut k) = (h, k);
    let mut hk = h * k;
    let mut bvn = 0.0;
    // nodes are symmetric around 1 on (0, 2)
    let nodes = || {
        w.iter()
            .zip(x.iter())
            .flat_map(|(wi, xi)| [(*wi, 1.0 - xi), (*wi, 1.0 + xi)])
    };
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin() / 2.0;
        for (wi, xi) in nodes() {
            let sn = (asr * xi).sin();
            bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        bvn = bvn * asr / tp + phi_cdf(-h) * phi_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = 1.0 - r * r;
            let mut a = as_.sqrt();
            let bs = (h - k).powi(2);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -(bs / as_ + hk) / 2.0;
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = tp.sqrt() * phi_cdf(-b / a);
                bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a /= 2.0;
            let mut acc = 0.0;
            for (wi, xi) in nodes() {
                let xs = (a * xi).powi(2);
                let asr = -(bs / xs + hk) / 2.0;
                if asr > -100.0 {
                    let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    let rs = (1.0 - xs).sqrt();
                    let ep = (-(hk / 2.0) * xs / (1.0 + rs).powi(2)).exp() / rs;
                    acc += wi * asr.exp() * (sp - ep);
                }
            }
            bvn = (a * acc - bvn) / tp;
        }
        if r > 0.0 {
            bvn += phi_cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                phi_cdf(k) - phi_cdf(h)
            } else {
                phi_cdf(-h) - phi_cdf(-k)
            };
            bvn = l - bvn;
        }
        h = 0.0;
        let _ = h;
    }
    bvn.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Slow oracle: integrate phi(x) * P(Y > k | X = x) over x > h.
    fn bvn_oracle(h: f64, k: f64, r: f64) -> f64 {
        let s = (1.0 - r * r).sqrt();
        let lo = h.max(-12.0);
        let hi = 12.0f64;
        if lo >= hi {
            return 0.0;
        }
        let n = 200_000;
        let dx = (hi - lo) / n as f64;
        // composite Simpson
        let f = |x: f64| phi_pdf(x) * phi_cdf((r * x - k) / s);
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * dx;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        acc * dx / 3.0
    }

    #[test]
    fn phi_values() {
        assert_close!(phi_cdf(0.0), 0.5, 1e-16);
        assert_close!(phi_cdf(1.959963984540054), 0.975, 1e-15);
        assert_close!(phi_cdf(-8.0), 6.22096057427178e-16, 1e-28);
    }

    #[test]
    fn bvn_special_cases() {
        assert_close!(bvn_upper(0.0, 0.0, 0.0), 0.25, 1e-16);
        // P(X>0, Y>0) = 1/4 + asin(r) / (2 pi)
        for r in [-0.95, -0.5, 0.2, 0.6, 0.93, 0.99] {
            assert_close!(bvn_upper(0.0, 0.0, r), 0.25 + r.asin() / (2.0 * PI), 1e-14);
        }
        assert_close!(bvn_upper(1.0, f64::NEG_INFINITY, 0.3), phi_cdf(-1.0), 1e-16);
        assert_eq!(bvn_upper(f64::INFINITY, 0.0, 0.3), 0.0);
    }

    #[test]
    fn bvn_matches_quadrature_oracle() {
        let cases = [
            (0.3, -0.7, 0.1),
            (-1.2, 0.4, 0.5),
            (1.5, 1.1, 0.8),
            (-0.5, -2.0, -0.6),
            (0.7, -0.2, 0.95),
            (-0.3, 0.9, -0.97),
            (2.0, -1.0, -0.93),
            (-1.0, 2.5, 0.999),
        ];
        for (h, k, r) in cases {
            let got = bvn_upper(h, k, r);
            let want = bvn_oracle(h, k, r);
            assert!(
                (got - want).abs() < 1e-10,
                "L({h},{k};{r}) = {got} vs {want}"
            );
        }
    }
}
