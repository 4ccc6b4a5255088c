//! Lorentzian linear algebra, geodesic flows, conjugate points, flow-out
//! surfaces and numerical causal relations.

mod causal;
mod flowout;
mod geodesic;
mod metric;

pub use causal::{
    causally_precedes, chronologically_precedes, cone_margin, CausalSearch, LightCone, Verdict,
};
pub use flowout::{flowout_surface, FlowoutParams, FlowoutSurface};
pub use geodesic::{
    first_conjugate_time, first_conjugate_time_with, geodesic_trace, geodesic_trace_in, CoordBox,
    GeodesicPath, GeodesicSample,
};
pub use metric::{CoefficientTable, MetricSpec};

pub(crate) use flowout::sphere_lattice;
pub(crate) use geodesic::trace_until;

use std::ops::{Add, Deref, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tolerances::{NULL_BAND, SINGULAR_DET};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("singular metric: |det g| = {det:e}")]
    SingularMetric { det: f64 },
    #[error("tangent and cotangent arguments cannot be paired directly")]
    KindMismatch,
    #[error("zero vector has no causal character")]
    ZeroVector,
    #[error("geodesic left the coordinate box at parameter {s}")]
    StepOutOfDomain { s: f64 },
    #[error("first conjugate point at {tau0} precedes t0 = {t0}")]
    ConjugateBeforeT0 { tau0: f64, t0: f64 },
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A point of space-time; `coords[0]` is the time coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(pub DVector<f64>);

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        Point(DVector::from_column_slice(coords))
    }

    pub fn t(&self) -> f64 {
        self.0[0]
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Point displaced by a tangent vector in coordinates.
    pub fn offset(&self, v: &Tangent) -> Point {
        Point(&self.0 + &v.0)
    }
}

impl Deref for Point {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

macro_rules! one_form_kind {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        pub struct $name(pub DVector<f64>);

        impl $name {
            pub fn new(components: &[f64]) -> Self {
                $name(DVector::from_column_slice(components))
            }

            pub fn zeros(n: usize) -> Self {
                $name(DVector::zeros(n))
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn components(&self) -> &[f64] {
                self.0.as_slice()
            }

            /// Auxiliary Euclidean norm on components.
            pub fn norm(&self) -> f64 {
                self.0.norm()
            }
        }

        impl Deref for $name {
            type Target = DVector<f64>;
            fn deref(&self) -> &DVector<f64> {
                &self.0
            }
        }

        impl Add for &$name {
            type Output = $name;
            fn add(self, rhs: &$name) -> $name {
                $name(&self.0 + &rhs.0)
            }
        }

        impl Add for $name {
            type Output = $name;
            fn add(self, rhs: $name) -> $name {
                $name(self.0 + rhs.0)
            }
        }

        impl Sub for &$name {
            type Output = $name;
            fn sub(self, rhs: &$name) -> $name {
                $name(&self.0 - &rhs.0)
            }
        }

        impl Mul<f64> for &$name {
            type Output = $name;
            fn mul(self, rhs: f64) -> $name {
                $name(&self.0 * rhs)
            }
        }

        impl Mul<f64> for $name {
            type Output = $name;
            fn mul(self, rhs: f64) -> $name {
                $name(self.0 * rhs)
            }
        }

        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }
    };
}

one_form_kind!(Tangent, "Tangent vector (upper index).");
one_form_kind!(Cotangent, "Covector (lower index).");

/// Either kind, for callers that only know the kind at runtime.
#[derive(Clone, Debug, PartialEq)]
pub enum OneVector {
    Tangent(Tangent),
    Cotangent(Cotangent),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalCharacter {
    Timelike,
    Null,
    Spacelike,
}

/// Contravariant components `g^ij(x)`.
pub fn dual_metric(m: &MetricSpec, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    let g = m.metric(x);
    let det = g.determinant();
    if !det.is_finite() || det.abs() < SINGULAR_DET {
        return Err(GeometryError::SingularMetric { det });
    }
    let inv = g
        .try_inverse()
        .ok_or(GeometryError::SingularMetric { det })?;
    // Symmetrize away rounding asymmetry.
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `ξ^# = g^{ij} ξ_j`.
pub fn raise(m: &MetricSpec, x: &[f64], xi: &Cotangent) -> Result<Tangent, GeometryError> {
    check_dim(m, xi.dim())?;
    Ok(Tangent(dual_metric(m, x)? * &xi.0))
}

/// `v^♭ = g_{ij} v^j`.
pub fn lower(m: &MetricSpec, x: &[f64], v: &Tangent) -> Result<Cotangent, GeometryError> {
    check_dim(m, v.dim())?;
    Ok(Cotangent(m.metric(x) * &v.0))
}

/// `g(a, b)` for two tangent vectors.
pub fn inner_vectors(m: &MetricSpec, x: &[f64], a: &Tangent, b: &Tangent) -> f64 {
    quad(&m.metric(x), &a.0, &b.0)
}

/// `g*(a, b)` for two covectors.
pub fn inner_covectors(
    m: &MetricSpec,
    x: &[f64],
    a: &Cotangent,
    b: &Cotangent,
) -> Result<f64, GeometryError> {
    Ok(quad(&dual_metric(m, x)?, &a.0, &b.0))
}

/// Inner product of same-kind arguments; mixed kinds are rejected.
pub fn inner(m: &MetricSpec, x: &[f64], a: &OneVector, b: &OneVector) -> Result<f64, GeometryError> {
    match (a, b) {
        (OneVector::Tangent(a), OneVector::Tangent(b)) => Ok(inner_vectors(m, x, a, b)),
        (OneVector::Cotangent(a), OneVector::Cotangent(b)) => inner_covectors(m, x, a, b),
        _ => Err(GeometryError::KindMismatch),
    }
}

/// `aᵀ G b`.
pub fn quad(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(g * b))
}

/// Classifies `v` by the sign of `g(v, v)` with a relative null band.
pub fn causal_character(
    m: &MetricSpec,
    x: &[f64],
    v: &Tangent,
) -> Result<CausalCharacter, GeometryError> {
    causal_character_with(m, x, v, NULL_BAND)
}

pub fn causal_character_with(
    m: &MetricSpec,
    x: &[f64],
    v: &Tangent,
    tol_null: f64,
) -> Result<CausalCharacter, GeometryError> {
    let n2 = v.0.norm_squared();
    if n2 == 0.0 {
        return Err(GeometryError::ZeroVector);
    }
    let q = inner_vectors(m, x, v, v);
    Ok(if q.abs() <= tol_null * n2 {
        CausalCharacter::Null
    } else if q < 0.0 {
        CausalCharacter::Timelike
    } else {
        CausalCharacter::Spacelike
    })
}

/// Christoffel symbols of the second kind; `result[i][(j, k)] = Γ^i_{jk}`.
pub fn christoffel(m: &MetricSpec, x: &[f64]) -> Result<Vec<DMatrix<f64>>, GeometryError> {
    let n = m.dim();
    let ginv = dual_metric(m, x)?;
    let dg = m.metric_derivatives(x);
    // Lowered symbols Γ_{l jk} = ½(∂_j g_{lk} + ∂_k g_{lj} − ∂_l g_{jk}).
    let lowered: Vec<DMatrix<f64>> = (0..n)
        .map(|l| {
            DMatrix::from_fn(n, n, |j, k| {
                0.5 * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)])
            })
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let mut gi = DMatrix::zeros(n, n);
            for (l, low) in lowered.iter().enumerate() {
                let c = ginv[(i, l)];
                if c != 0.0 {
                    gi += low * c;
                }
            }
            gi
        })
        .collect())
}

fn check_dim(m: &MetricSpec, got: usize) -> Result<(), GeometryError> {
    if got != m.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: m.dim(),
            got,
        });
    }
    Ok(())
}

/// Solves `g(e0 + λu, e0 + λu) = 0` for the positive root λ. Returns `None`
/// when the quadratic has no positive real root.
pub fn null_completion(g: &DMatrix<f64>, spatial: &DVector<f64>) -> Option<DVector<f64>> {
    let n = g.nrows();
    let mut u = DVector::zeros(n);
    u.rows_mut(1, n - 1).copy_from(spatial);
    let mut e0 = DVector::zeros(n);
    e0[0] = 1.0;
    let a = quad(g, &u, &u);
    let b = 2.0 * quad(g, &e0, &u);
    let c = g[(0, 0)];
    let disc = b * b - 4.0 * a * c;
    if a <= 0.0 || disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Numerically stable pair of roots.
    let q = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = if q != 0.0 { (q / a, c / q) } else { (sq / (2.0 * a), -sq / (2.0 * a)) };
    let lam = if r1 > 0.0 { r1 } else { r2 };
    if lam <= 0.0 {
        return None;
    }
    Some(e0 + u * lam)
}
