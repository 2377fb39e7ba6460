//! Run-to-run process control toolkit.
//!
//! Two learning controllers (a model-based learn-by-doing controller and an
//! online policy-gradient-search controller), classical benchmarks (EWMA,
//! harmonic-gain EWMA, estimate-then-optimize), five seeded process
//! simulators, the ratio-of-normals machinery behind the control-error bounds,
//! and a replication harness that writes CSV/JSON artifacts.

// `!(x > 0.0)` style checks deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
#[macro_use]
mod test_util;

pub mod controllers;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod process_models;
pub mod rng;
pub mod theory;

pub use error::{R2rError, Result};
pub use process_models::{ControlVector, OutputVector, PeriodRecord, ProcessModel, SamplePath};
