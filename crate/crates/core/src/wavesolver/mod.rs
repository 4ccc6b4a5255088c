//! Finite-difference forward solver for `□_g u + w(x, u, ∇_g u) = f` in one
//! or two space dimensions, the causal inverse `Q_g`, and the fourth-order
//! asymptotic expansion.
//!
//! Metrics must satisfy `g_{0a} = 0`. Sources vanish near `t = 0`, so the
//! solution starts from rest.

mod convergence;
mod expansion;
mod field;
mod grid;
mod nonlinear;
mod source;
mod stepper;

pub use convergence::{
    convergence_study, ConvergenceKind, ConvergenceRow, ConvergenceScenario, ConvergenceTable,
};
pub use expansion::{
    expansion_study, expansion_terms, m1_distinct_terms, mixed_difference, order2_reference,
    permutations4, ExpansionReport, ExpansionRow, ExpansionTerms, MixedDifference,
};
pub use field::{FieldSnapshot, GridField, FIELD_MAGIC};
pub use grid::{Grid, GridSpec, CFL_MAX};
pub use nonlinear::{
    evaluate_nonlinearity, picard, self_interaction_energy, solve_linear, solve_linear_with,
    solve_nonlinear, NonlinearMode, SolveOptions,
};
pub use source::{bump, Forcing, Manufactured, Pulse, SourceComponent, SourceTerm, SpaceTimeBox};
pub use stepper::{apply_box, causality_leak, gradient_field};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::nullform::NullFormError;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("Courant ratio {ratio} exceeds {max}")]
    CourantViolation { ratio: f64, max: f64 },
    #[error("non-finite value at time level {level}")]
    NaNDetected { level: usize },
    #[error("field norm {norm:e} exceeded the divergence guard {guard:e} at level {level}")]
    DivergenceDetected { level: usize, norm: f64, guard: f64 },
    #[error("Picard residual {residual:e} did not decrease (previous {previous:e}, iteration {iteration})")]
    NonContraction {
        iteration: usize,
        residual: f64,
        previous: f64,
    },
    #[error("mixed difference of order {order} lost to cancellation: {magnitude:e} below {floor:e}")]
    CancellationLoss {
        order: usize,
        magnitude: f64,
        floor: f64,
    },
    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("source size {total:e} exceeds the amplitude cap {cap:e}")]
    AmplitudeGuard { total: f64, cap: f64 },
    #[error("source {index} starts at t = {start}, before {min}")]
    SourceTooEarly { index: usize, start: f64, min: f64 },
    #[error("support of source {index} leaves the region V")]
    SupportOutsideV { index: usize },
    #[error("field stores {stored} of {needed} time levels")]
    IncompleteField { stored: usize, needed: usize },
    #[error("fields live on different lattices")]
    GridMismatch,
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    NullForm(#[from] NullFormError),
}

#[cfg(test)]
mod tests;
