//! Seeded simulators for the five process families.
//!
//! A model is a single-threaded state machine over periods `1..=T`. Calling
//! [`ProcessModel::step`] twice for the same period re-draws that period from
//! the committed state of period `t - 1`; moving on to `t + 1` commits the last
//! draw. This is what lets learning controllers spend several real runs inside
//! one period while the sample path keeps exactly one record per period.

mod arima;
mod gamma;
mod linear_cmp;
mod quadratic_cmp;
mod wiener;

use serde::{Deserialize, Serialize};

use crate::controllers::Controller;
use crate::error::{R2rError, Result};
use crate::rng::derive_seed;

pub use arima::{
    arima_disturbance_stream, arima_output_variance_closed_form, arima_output_variance_exact,
    ArimaProcess, ArimaProcessParams,
};
pub use gamma::{GammaParams, GammaProcess};
pub use linear_cmp::{LinearCmp, LinearCmpParams};
pub use quadratic_cmp::{quadratic_terms, QuadraticCmp, QuadraticCmpParams};
pub use wiener::{WienerParams, WienerProcess};

macro_rules! real_vector {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(n: usize) -> Self {
                Self(vec![0.0; n])
            }

            pub fn scalar(x: f64) -> Self {
                Self(vec![x])
            }

            pub fn check_dim(&self, expected: usize) -> Result<()> {
                if self.0.len() != expected {
                    return Err(R2rError::Dimension {
                        what: $what,
                        expected,
                        got: self.0.len(),
                    });
                }
                if self.0.iter().any(|v| !v.is_finite()) {
                    return Err(R2rError::NonFinite($what));
                }
                Ok(())
            }
        }

        impl std::ops::Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

real_vector!(ControlVector, "control vector");
real_vector!(OutputVector, "output vector");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub t: usize,
    pub u: ControlVector,
    pub y: OutputVector,
    pub d: Option<f64>,
}

/// One complete run of `T` periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub y0: OutputVector,
    pub seed: u64,
    pub periods: Vec<PeriodRecord>,
}

impl SamplePath {
    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    pub fn outputs(&self) -> impl Iterator<Item = &OutputVector> {
        self.periods.iter().map(|r| &r.y)
    }

    pub fn actions(&self) -> impl Iterator<Item = &ControlVector> {
        self.periods.iter().map(|r| &r.u)
    }
}

pub trait ProcessModel: Send {
    fn family(&self) -> &'static str;
    fn control_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn initial_output(&self) -> OutputVector;

    /// Starts a fresh sample path with its own noise stream.
    fn reset(&mut self, seed: u64);

    /// Draws `y_t` for action `u` (see the module docs for re-draw semantics).
    fn step(&mut self, u: &ControlVector, t: usize) -> Result<OutputVector>;

    /// Scalar disturbance behind the latest draw, for families that have one.
    fn disturbance(&self) -> Option<f64>;

    fn boxed_clone(&self) -> Box<dyn ProcessModel>;
}

impl Clone for Box<dyn ProcessModel> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Advance {
    Fresh,
    Redraw,
    CommitThenFresh,
}

/// Committed/pending bookkeeping shared by every simulator.
#[derive(Debug, Clone)]
pub(crate) struct Stepper<S: Clone> {
    horizon: usize,
    committed_period: usize,
    committed: S,
    pending: Option<(usize, S)>,
    initial: S,
}

impl<S: Clone> Stepper<S> {
    pub(crate) fn new(horizon: usize, initial: S) -> Self {
        Self {
            horizon,
            committed_period: 0,
            committed: initial.clone(),
            pending: None,
            initial,
        }
    }

    pub(crate) fn reset(&mut self) {
        self.committed_period = 0;
        self.committed = self.initial.clone();
        self.pending = None;
    }

    fn classify(&self, t: usize) -> Result<Advance> {
        let err = || R2rError::Horizon {
            t,
            horizon: self.horizon,
            next: self.committed_period + 1,
        };
        if t == 0 || t > self.horizon {
            return Err(err());
        }
        match self.pending {
            Some((p, _)) if t == p => Ok(Advance::Redraw),
            Some((p, _)) if t == p + 1 => Ok(Advance::CommitThenFresh),
            Some(_) => Err(err()),
            None if t == self.committed_period + 1 => Ok(Advance::Fresh),
            None => Err(err()),
        }
    }

    /// Validates `t` and returns the state of period `t - 1` to draw from.
    pub(crate) fn begin(&mut self, t: usize) -> Result<&S> {
        match self.classify(t)? {
            Advance::Fresh => {}
            Advance::Redraw => self.pending = None,
            Advance::CommitThenFresh => {
                let (p, s) = self.pending.take().expect("pending state");
                self.committed = s;
                self.committed_period = p;
            }
        }
        Ok(&self.committed)
    }

    pub(crate) fn finish(&mut self, t: usize, state: S) {
        self.pending = Some((t, state));
    }

    pub(crate) fn latest_period(&self) -> usize {
        self.pending
            .as_ref()
            .map_or(self.committed_period, |(t, _)| *t)
    }

    pub(crate) fn latest(&self) -> &S {
        self.pending
            .as_ref()
            .map(|(_, s)| s)
            .unwrap_or(&self.committed)
    }
}

/// Plant access handed to a controller for a single period.
///
/// The controller may execute as many runs as it likes at period `t`; the
/// last executed `(u, y)` pair becomes the path record.
pub struct PeriodProbe<'a> {
    model: &'a mut dyn ProcessModel,
    t: usize,
    last: Option<(ControlVector, OutputVector)>,
    executions: usize,
}

impl<'a> PeriodProbe<'a> {
    pub fn new(model: &'a mut dyn ProcessModel, t: usize) -> Self {
        Self {
            model,
            t,
            last: None,
            executions: 0,
        }
    }

    pub fn period(&self) -> usize {
        self.t
    }

    pub fn control_dim(&self) -> usize {
        self.model.control_dim()
    }

    pub fn execute(&mut self, u: &ControlVector) -> Result<OutputVector> {
        let y = self.model.step(u, self.t)?;
        self.last = Some((u.clone(), y.clone()));
        self.executions += 1;
        Ok(y)
    }

    pub fn executions(&self) -> usize {
        self.executions
    }

    pub fn last(&self) -> Option<&(ControlVector, OutputVector)> {
        self.last.as_ref()
    }

    fn into_record(self) -> Result<PeriodRecord> {
        let d = self.model.disturbance();
        let (u, y) = self.last.ok_or_else(|| {
            R2rError::Config(format!("controller executed no run in period {}", self.t))
        })?;
        Ok(PeriodRecord { t: self.t, u, y, d })
    }
}

/// Runs one full sample path of `policy` against `model`.
pub fn simulate_path(
    model: &mut dyn ProcessModel,
    policy: &mut dyn Controller,
    seed: u64,
) -> Result<SamplePath> {
    if policy.control_dim() != model.control_dim() {
        return Err(R2rError::Dimension {
            what: "controller action",
            expected: model.control_dim(),
            got: policy.control_dim(),
        });
    }
    if policy.output_dim() != model.output_dim() {
        return Err(R2rError::Dimension {
            what: "controller output",
            expected: model.output_dim(),
            got: policy.output_dim(),
        });
    }
    model.reset(seed);
    let y0 = model.initial_output();
    policy.begin_path(&y0, derive_seed(seed, 0, "controller"))?;
    let horizon = model.horizon();
    let mut periods = Vec::with_capacity(horizon);
    let mut y_prev = y0.clone();
    for t in 1..=horizon {
        let mut probe = PeriodProbe::new(model, t);
        policy.control_period(t, &y_prev, &mut probe)?;
        let record = probe.into_record()?;
        policy.observe(t, &record.u, &record.y)?;
        y_prev = record.y.clone();
        periods.push(record);
    }
    let path = SamplePath { y0, seed, periods };
    policy.end_path(&path)?;
    Ok(path)
}

/// Process family plus parameters, as read from an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessConfig {
    LinearCmp(LinearCmpParams),
    Arima(ArimaProcessParams),
    QuadraticCmp(QuadraticCmpParams),
    Wiener(WienerParams),
    Gamma(GammaParams),
}

impl ProcessConfig {
    pub fn build(&self) -> Result<Box<dyn ProcessModel>> {
        Ok(match self {
            ProcessConfig::LinearCmp(p) => Box::new(LinearCmp::new(p.clone())?),
            ProcessConfig::Arima(p) => Box::new(ArimaProcess::new(p.clone())?),
            ProcessConfig::QuadraticCmp(p) => Box::new(QuadraticCmp::new(p.clone())?),
            ProcessConfig::Wiener(p) => Box::new(WienerProcess::new(p.clone())?),
            ProcessConfig::Gamma(p) => Box::new(GammaProcess::new(p.clone())?),
        })
    }

    pub fn family(&self) -> &'static str {
        match self {
            ProcessConfig::LinearCmp(_) => "linear_cmp",
            ProcessConfig::Arima(_) => "arima",
            ProcessConfig::QuadraticCmp(_) => "quadratic_cmp",
            ProcessConfig::Wiener(_) => "wiener",
            ProcessConfig::Gamma(_) => "gamma",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            ProcessConfig::LinearCmp(p) => p.horizon,
            ProcessConfig::Arima(p) => p.horizon,
            ProcessConfig::QuadraticCmp(p) => p.horizon,
            ProcessConfig::Wiener(p) => p.horizon,
            ProcessConfig::Gamma(p) => p.horizon,
        }
    }
}

pub(crate) fn default_cmp_horizon() -> usize {
    30
}

pub(crate) fn default_long_horizon() -> usize {
    80
}

pub(crate) fn default_control_gain() -> f64 {
    -1.0
}

pub(crate) fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(R2rError::invalid("horizon", "must be at least 1"));
    }
    Ok(())
}

pub(crate) fn check_positive(key: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(R2rError::invalid(
            key,
            format!("must be finite and > 0, got {v}"),
        ));
    }
    Ok(())
}
