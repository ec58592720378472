use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::theory::RatePrediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopFlag {
    GradTol,
    SigmaStop,
    MaxIters,
    TimeLimit,
    Diverged,
    Error,
}

impl StopFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            StopFlag::GradTol => "grad_tol",
            StopFlag::SigmaStop => "sigma_stop",
            StopFlag::MaxIters => "max_iters",
            StopFlag::TimeLimit => "time_limit",
            StopFlag::Diverged => "diverged",
            StopFlag::Error => "error",
        }
    }
}

/// State at iterate `x_k` together with the step taken from it.
///
/// The last record of a trace carries the stop flag and no step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub f_value: f64,
    /// `||grad F(x_k)||`; for gradient-sampled runs only present with diagnostics.
    pub grad_norm_full: Option<f64>,
    /// Norm of the gradient the step was built from.
    pub grad_norm_used: f64,
    pub alpha: f64,
    pub sample_h: usize,
    pub sample_g: usize,
    pub residual_ratio: Option<f64>,
    pub descent_ratio: Option<f64>,
    pub lambda_applied: Option<f64>,
    pub min_eig_h: Option<f64>,
    /// Largest `theta1` for which the variant's decrease guarantee applies.
    pub theta1_budget: Option<f64>,
    pub cg_iterations: Option<usize>,
    /// `eps2` in force at this iteration (gradient sampling only).
    pub eps2: Option<f64>,
    pub bound_saturated: bool,
    pub stopped: Option<StopFlag>,
    /// Algorithm time elapsed when `x_k` was reached.
    pub wall_nanos: u64,
}

impl TraceRecord {
    pub(crate) fn at(k: usize, f_value: f64, grad_norm_used: f64, wall_nanos: u64) -> Self {
        Self {
            k,
            f_value,
            grad_norm_full: None,
            grad_norm_used,
            alpha: 0.0,
            sample_h: 0,
            sample_g: 0,
            residual_ratio: None,
            descent_ratio: None,
            lambda_applied: None,
            min_eig_h: None,
            theta1_budget: None,
            cg_iterations: None,
            eps2: None,
            bound_saturated: false,
            stopped: None,
            wall_nanos,
        }
    }

    /// Best available gradient norm: the full one when known.
    pub fn grad_norm(&self) -> f64 {
        self.grad_norm_full.unwrap_or(self.grad_norm_used)
    }
}

/// Per-run constants recorded next to the trace.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub gamma: Option<f64>,
    pub big_k: Option<f64>,
    pub kappa: Option<f64>,
    pub kappa_tilde: Option<f64>,
    pub khat: Option<f64>,
    pub nominal_sample_h: Option<usize>,
    pub sigma: Option<f64>,
    pub rate: Option<RatePrediction>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub solver: String,
    pub records: Vec<TraceRecord>,
    /// `x_k` for every record, when requested.
    pub iterates: Vec<Vec<f64>>,
    pub x_final: Vec<f64>,
    pub stop: StopFlag,
    pub error: Option<String>,
    pub diagnostics: RunDiagnostics,
}

impl Trace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("traces hold at least one record")
    }

    pub fn final_x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_final)
    }

    pub fn converged(&self) -> bool {
        self.stop == StopFlag::GradTol
    }

    pub fn iterate(&self, k: usize) -> Option<DVector<f64>> {
        self.iterates.get(k).map(|v| DVector::from_column_slice(v))
    }
}

/// Monotonic clock that can exclude diagnostic work.
pub(crate) struct Stopwatch {
    started: Option<Instant>,
    banked: Duration,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            started: Some(Instant::now()),
            banked: Duration::ZERO,
        }
    }

    pub fn pause(&mut self) {
        if let Some(s) = self.started.take() {
            self.banked += s.elapsed();
        }
    }

    pub fn resume(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    pub fn elapsed(&self) -> Duration {
        self.banked + self.started.map_or(Duration::ZERO, |s| s.elapsed())
    }

    pub fn nanos(&self) -> u64 {
        self.elapsed().as_nanos().min(u64::MAX as u128) as u64
    }
}
