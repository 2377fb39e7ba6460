use crate::error::{R2rError, Result};
use crate::process_models::SamplePath;

fn check_target(path: &SamplePath, y_star: &[f64]) -> Result<()> {
    for r in &path.periods {
        r.y.check_dim(y_star.len())?;
    }
    Ok(())
}

/// `sum_t (y_t - y*)'(y_t - y*)`.
pub fn total_cost(path: &SamplePath, y_star: &[f64]) -> Result<f64> {
    check_target(path, y_star)?;
    Ok(path
        .periods
        .iter()
        .map(|r| {
            r.y.iter()
                .zip(y_star)
                .map(|(y, s)| (y - s).powi(2))
                .sum::<f64>()
        })
        .sum())
}

/// Total cost divided by the number of periods.
pub fn mse(path: &SamplePath, y_star: &[f64]) -> Result<f64> {
    if path.periods.is_empty() {
        return Err(R2rError::DegenerateDesign("empty sample path".into()));
    }
    Ok(total_cost(path, y_star)? / path.horizon() as f64)
}

/// `(y_t - y*) / y*` per output coordinate: `out[j][t - 1]`.
pub fn error_ratio_series(path: &SamplePath, y_star: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_target(path, y_star)?;
    if let Some(index) = y_star.iter().position(|s| *s == 0.0) {
        return Err(R2rError::UndefinedRatio { index });
    }
    Ok((0..y_star.len())
        .map(|j| {
            path.periods
                .iter()
                .map(|r| (r.y[j] - y_star[j]) / y_star[j])
                .collect()
        })
        .collect())
}
