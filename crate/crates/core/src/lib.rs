//! Computational laboratory for quadratic derivative nonlinear wave equations
//! on Lorentzian manifolds.
//!
//! The crate is organized by subsystem:
//!
//! * [`geometry`]: metric catalog, index gymnastics, geodesics, conjugate
//!   points, flow-out surfaces and numerical causal relations.
//! * [`nullform`]: quadratic forms, the null condition and the constructive
//!   decomposition of null forms into `C0 g + Σ a_ab E^ab`.
//! * [`symbolcalc`]: pointwise evaluation of the four-wave interaction
//!   coefficient, the cancellation coefficients and the rank certificate.
//! * [`wavesolver`]: leapfrog solver for `□_g u + w(x, u, ∇_g u) = f` and the
//!   fourth-order asymptotic expansion.
//! * [`obsets`]: light observation sets and earliest observation sets.
//!
//! Data-parallel loops go through [`Exec`], which runs on rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod exec;
pub mod geometry;
pub mod nullform;
pub mod obsets;
pub mod scalar;
pub mod symbolcalc;
pub mod tolerances;
pub mod wavesolver;

pub use exec::Exec;
pub use geometry::{Cotangent, MetricSpec, Point, Tangent};
pub use nullform::{NonlinearTerm, QuadraticForm};
pub use scalar::ScalarField;

use thiserror::Error;

/// Crate-level error, wrapping the per-subsystem error types.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    NullForm(#[from] nullform::NullFormError),
    #[error(transparent)]
    Symbol(#[from] symbolcalc::SymbolError),
    #[error(transparent)]
    Solver(#[from] wavesolver::SolverError),
    #[error(transparent)]
    Observation(#[from] obsets::ObsError),
}
