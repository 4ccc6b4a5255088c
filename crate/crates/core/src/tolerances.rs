//! Named numerical thresholds shared across subsystems.
//!
//! Scenario configs may scale these (see the CLI `--tol-scale` flag); the
//! defaults here are the ones the test suites are pinned to.

/// Minimum |det g| accepted by [`crate::geometry::dual_metric`].
pub const SINGULAR_DET: f64 = 1e-12;

/// Relative band around zero in which `g(v, v)` is classified as null.
pub const NULL_BAND: f64 = 1e-10;

/// Null-form test threshold on `|w(v, v)| / ‖v‖²` over sampled null vectors.
pub const TOL_NULL: f64 = 1e-10;

/// Residual threshold on symmetric basis coefficients in the decomposition.
pub const TOL_DEC: f64 = 1e-9;

/// Normalized Jacobi determinant below which a conjugate point is declared.
pub const TOL_CONJ: f64 = 1e-8;

/// Relative singular-value threshold for the interaction rank certificate.
pub const TOL_RANK: f64 = 1e-8;

/// Denominators `|ζ_j + ζ_k (+ ζ_l)|²_{g*}` must exceed this times ‖quad‖².
pub const TOL_DENOM: f64 = 1e-8;

/// Linear-independence threshold: |det[ζ1..ζ4]| / Π‖ζi‖.
pub const TOL_INDEP: f64 = 1e-3;

/// Null tolerance on `g*(ζ_i, ζ_i)` relative to ‖ζ_i‖².
pub const TOL_COVECTOR_NULL: f64 = 1e-10;

/// Step for central differences of tabulated metric coefficients.
pub const TABLE_FD_STEP: f64 = 1e-5;

/// Causality leak bound relative to the source norm.
pub const CAUSAL_LEAK: f64 = 1e-10;

/// Fixed-point residual for Picard iteration.
pub const PICARD_RESIDUAL: f64 = 1e-10;

/// Cancellation guard multiplier on machine epsilon in mixed differences.
pub const CANCELLATION_FACTOR: f64 = 1e3;
