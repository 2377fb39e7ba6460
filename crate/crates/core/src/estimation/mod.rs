//! Parameter estimation shared by the controllers and the theory checks.

mod least_squares;
mod pgs;
mod ratio;

pub use least_squares::{
    fit_least_squares, prediction_variance, prediction_variance_with, GramAccumulator,
    LinearModelFit, RegressionDesign,
};
pub use pgs::{fit_pgs_params, pgs_log_likelihood, PgsDistributionParams, VarianceForm};
pub use ratio::{ratio_moments_from_design, ratio_moments_from_fit, RatioMoments};
