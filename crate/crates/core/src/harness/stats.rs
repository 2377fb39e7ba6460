use serde::{Deserialize, Serialize};

/// Five-number summary with 1.5 IQR whiskers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub n_outliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub mean_cost: f64,
    pub std_cost: f64,
    /// `[q1, median, q3]` of the total cost.
    pub quartiles: [f64; 3],
    pub boxplot: BoxplotStats,
    #[serde(default)]
    pub ratio_vs_baseline: Option<f64>,
}

/// Mean and sample (n - 1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn quantile(xs: &[f64], p: f64) -> f64 {
    quantile_sorted(&sorted(xs), p)
}

pub fn boxplot(xs: &[f64]) -> BoxplotStats {
    let v = sorted(xs);
    let (q1, median, q3) = (
        quantile_sorted(&v, 0.25),
        quantile_sorted(&v, 0.5),
        quantile_sorted(&v, 0.75),
    );
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v
        .iter()
        .copied()
        .filter(|x| *x >= lo_fence && *x <= hi_fence)
        .collect();
    BoxplotStats {
        q1,
        median,
        q3,
        whisker_low: inside.first().copied().unwrap_or(f64::NAN),
        whisker_high: inside.last().copied().unwrap_or(f64::NAN),
        n_outliers: v.len() - inside.len(),
    }
}

impl SummaryStats {
    pub fn from_runs(mses: &[f64], costs: &[f64]) -> Self {
        let (mean_mse, std_mse) = mean_std(mses);
        let (mean_cost, std_cost) = mean_std(costs);
        let boxplot = boxplot(costs);
        Self {
            n: mses.len(),
            mean_mse,
            std_mse,
            mean_cost,
            std_cost,
            quartiles: [boxplot.q1, boxplot.median, boxplot.q3],
            boxplot,
            ratio_vs_baseline: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boxplot_flags_outliers() {
        let xs = [1.0, 2.0, 3.0, 4.0, 100.0];
        let b = boxplot(&xs);
        assert_eq!(b.median, 3.0);
        assert_eq!((b.q1, b.q3), (2.0, 4.0));
        assert_eq!(b.n_outliers, 1);
        assert_eq!(b.whisker_high, 4.0);
    }

    #[test]
    fn mean_std_known() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert_close!(s, (32.0f64 / 7.0).sqrt(), 1e-14);
    }

    proptest! {
        #[test]
        fn summary_is_permutation_invariant(xs in proptest::collection::vec(0.0f64..1e4, 2..40), seed in 0u64..100) {
            let mut ys = xs.clone();
            // deterministic shuffle
            let n = ys.len();
            for i in 0..n {
                let j = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64)) % n as u64) as usize;
                ys.swap(i, j);
            }
            let a = SummaryStats::from_runs(&xs, &xs);
            let b = SummaryStats::from_runs(&ys, &ys);
            prop_assert!((a.mean_mse - b.mean_mse).abs() <= 1e-9 * a.mean_mse.abs().max(1.0));
            prop_assert!((a.std_mse - b.std_mse).abs() <= 1e-9 * a.std_mse.max(1.0));
            prop_assert_eq!(a.quartiles, b.quartiles);
            prop_assert!(a.quartiles[0] <= a.quartiles[1] && a.quartiles[1] <= a.quartiles[2]);
        }
    }
}
