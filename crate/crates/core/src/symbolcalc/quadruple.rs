use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{denominators, SymbolError};
use crate::geometry::{dual_metric, lower, Cotangent, MetricSpec};
use crate::nullform::sample_null_cone;
use crate::tolerances::{TOL_COVECTOR_NULL, TOL_INDEP};

/// Four null covectors at `q0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovectorQuadruple {
    pub q0: Vec<f64>,
    pub zetas: [Cotangent; 4],
    /// Set when the null-sum rescaling flipped the time orientation of `ζ4`.
    pub orientation_flipped: bool,
}

impl CovectorQuadruple {
    /// Builds and validates a quadruple (nullity and independence).
    pub fn new(m: &MetricSpec, q0: &[f64], zetas: [Cotangent; 4]) -> Result<Self, SymbolError> {
        let q = CovectorQuadruple {
            q0: q0.to_vec(),
            zetas,
            orientation_flipped: false,
        };
        q.validate(m)?;
        Ok(q)
    }

    pub(crate) fn vectors(&self) -> [DVector<f64>; 4] {
        [
            self.zetas[0].0.clone(),
            self.zetas[1].0.clone(),
            self.zetas[2].0.clone(),
            self.zetas[3].0.clone(),
        ]
    }

    /// `ζ = ζ1 + ζ2 + ζ3 + ζ4`.
    pub fn sum(&self) -> Cotangent {
        Cotangent(self.vectors().iter().sum())
    }

    /// `Σ ‖ζ_i‖²` in the auxiliary Euclidean norm.
    pub fn norm_squared(&self) -> f64 {
        self.zetas.iter().map(|z| z.0.norm_squared()).sum()
    }

    pub fn g_star_sum(&self, m: &MetricSpec) -> Result<f64, SymbolError> {
        let ginv = dual_metric(m, &self.q0)?;
        let z = self.sum().0;
        Ok(z.dot(&(&ginv * &z)))
    }

    /// Membership in the null-sum set: `|g*(ζ, ζ)| ≤ tol · ‖ζ‖²`.
    pub fn has_null_sum(&self, m: &MetricSpec, tol: f64) -> Result<bool, SymbolError> {
        let s = self.sum().0.norm_squared();
        Ok(self.g_star_sum(m)?.abs() <= tol * s.max(1.0))
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let mut q = self.clone();
        for z in q.zetas.iter_mut() {
            z.0 *= lambda;
        }
        q
    }

    pub fn permuted(&self, perm: [usize; 4]) -> Self {
        let mut q = self.clone();
        q.zetas = perm.map(|i| self.zetas[i].clone());
        q
    }

    pub fn validate(&self, m: &MetricSpec) -> Result<(), SymbolError> {
        if m.spatial_dim() != 3 {
            return Err(SymbolError::DimensionNotThree(m.spatial_dim()));
        }
        let ginv = dual_metric(m, &self.q0)?;
        for (index, z) in self.zetas.iter().enumerate() {
            let value = z.0.dot(&(&ginv * &z.0));
            if value.abs() > TOL_COVECTOR_NULL * z.0.norm_squared() {
                return Err(SymbolError::NotNull { index, value });
            }
        }
        let mat = DMatrix::from_columns(&self.vectors());
        let det = mat.determinant();
        let scale: f64 = self.zetas.iter().map(|z| z.0.norm()).product();
        if det.abs() <= TOL_INDEP * scale {
            return Err(SymbolError::Dependent { det });
        }
        Ok(())
    }
}

/// Draws a quadruple from the stream `seed`.
pub fn sample_quadruple(
    m: &MetricSpec,
    q0: &[f64],
    seed: u64,
    require_null_sum: bool,
    max_attempts: usize,
) -> Result<CovectorQuadruple, SymbolError> {
    sample_quadruple_stream(m, q0, seed, 0, require_null_sum, max_attempts)
}

/// Null covectors are lowered random null vectors; with `require_null_sum`
/// the last one is rescaled by `s = −g*(A, A) / (2 g*(A, ζ4))`,
/// `A = ζ1 + ζ2 + ζ3`, which solves `g*(A + s ζ4, A + s ζ4) = 0` because
/// `ζ4` is null. Draws with dependent covectors, a vanishing `g*(A, ζ4)` or
/// degenerate denominators are rejected.
pub fn sample_quadruple_stream(
    m: &MetricSpec,
    q0: &[f64],
    seed: u64,
    stream: u64,
    require_null_sum: bool,
    max_attempts: usize,
) -> Result<CovectorQuadruple, SymbolError> {
    if m.spatial_dim() != 3 {
        return Err(SymbolError::DimensionNotThree(m.spatial_dim()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let ginv = dual_metric(m, q0)?;
    let gs = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&ginv * b));
    for _ in 0..max_attempts {
        let vs = sample_null_cone(m, q0, 4, &mut rng)?;
        let mut zs: Vec<Cotangent> = vs
            .iter()
            .map(|v| lower(m, q0, v))
            .collect::<Result<_, _>>()?;
        let mut flipped = false;
        if require_null_sum {
            let a: DVector<f64> = &zs[0].0 + &zs[1].0 + &zs[2].0;
            let cross = gs(&a, &zs[3].0);
            if cross.abs() < 1e-6 * a.norm() * zs[3].0.norm() {
                continue;
            }
            let s = -gs(&a, &a) / (2.0 * cross);
            if !(s.abs() > 1e-3 && s.abs() < 1e3) {
                continue;
            }
            flipped = s < 0.0;
            zs[3].0 *= s;
        }
        let quad = CovectorQuadruple {
            q0: q0.to_vec(),
            zetas: [zs[0].clone(), zs[1].clone(), zs[2].clone(), zs[3].clone()],
            orientation_flipped: flipped,
        };
        if quad.validate(m).is_err() || denominators(m, &quad).is_err() {
            continue;
        }
        return Ok(quad);
    }
    Err(SymbolError::SamplingExhausted {
        attempts: max_attempts,
    })
}
