//! Pointwise symbol calculus of the four-wave interaction: the coefficient
//! `P`, the cancellation coefficients `A` and `B`, the Jacobian rank
//! certificate, non-vanishing witnesses and conformal scaling.

mod quadruple;

pub use quadruple::{sample_quadruple, sample_quadruple_stream, CovectorQuadruple};

use std::io::Write;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::geometry::{dual_metric, raise, Cotangent, GeometryError, MetricSpec};
use crate::nullform::{is_null_form, NullFormError, QuadraticForm};
use crate::scalar::ScalarField;
use crate::tolerances::{TOL_DENOM, TOL_RANK};

/// `A = κ_A g*(ζ, ζ)` for every null quadruple with nondegenerate
/// denominators. Measured by exact rational evaluation of the 24-term sum
/// (see `tests::exact`); holds for any nondegenerate metric because the sum
/// only involves g*-pairings.
pub const KAPPA_A: f64 = 7.0;
/// `B = κ_B g*(ζ, ζ)`, measured the same way as [`KAPPA_A`].
pub const KAPPA_B: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolError {
    #[error("symbol calculus needs d = 3 (four space-time dimensions), got d = {0}")]
    DimensionNotThree(usize),
    #[error("covector {index} is not null: g*(ζ,ζ) = {value:e}")]
    NotNull { index: usize, value: f64 },
    #[error("covectors are linearly dependent: |det| = {det:e}")]
    Dependent { det: f64 },
    #[error("degenerate denominator |Σ ζ_{indices:?}|² = {value:e}")]
    DegenerateDenominator { indices: Vec<usize>, value: f64 },
    #[error("no admissible quadruple after {attempts} attempts")]
    SamplingExhausted { attempts: usize },
    #[error("no witness after {attempts} attempts (max normalized |P| = {max_seen:e})")]
    SearchFailed { attempts: usize, max_seen: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    NullForm(#[from] NullFormError),
}

/// A vector with complex components, stored as real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexVector {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Symbol of the gradient: `ı ξ^#`.
pub fn gradient_symbol(m: &MetricSpec, x: &[f64], xi: &Cotangent) -> Result<ComplexVector, SymbolError> {
    let up = raise(m, x, xi)?;
    Ok(ComplexVector {
        re: vec![0.0; up.dim()],
        im: up.components().to_vec(),
    })
}

fn gpair(ginv: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(ginv * b))
}

/// `P = 2(M(ζ^#, ζ^#) − Σ M(ζ_i^#, ζ_i^#))` for given `g^{ij}` and `M_ij`.
fn p_from_matrices(ginv: &DMatrix<f64>, mm: &DMatrix<f64>, z: &[DVector<f64>; 4]) -> f64 {
    let up: Vec<DVector<f64>> = z.iter().map(|zi| ginv * zi).collect();
    let total: DVector<f64> = up.iter().sum();
    let m = |v: &DVector<f64>| v.dot(&(mm * v));
    2.0 * (m(&total) - up.iter().map(m).sum::<f64>())
}

pub fn interaction_p(
    m: &MetricSpec,
    m_form: &QuadraticForm,
    quad: &CovectorQuadruple,
) -> Result<f64, SymbolError> {
    let ginv = dual_metric(m, &quad.q0)?;
    Ok(p_from_matrices(&ginv, &m_form.matrix(m, &quad.q0), &quad.vectors()))
}

/// Every `|ζ_J|²_{g*}` over index subsets of size 2 and 3 appearing in the
/// cancellation sums, checked against `tol_denom · ‖quad‖²`.
pub fn denominators(m: &MetricSpec, quad: &CovectorQuadruple) -> Result<Vec<(Vec<usize>, f64)>, SymbolError> {
    let ginv = dual_metric(m, &quad.q0)?;
    let z = quad.vectors();
    let floor = TOL_DENOM * quad.norm_squared();
    let mut out = Vec::new();
    for size in [2usize, 3] {
        for set in (0..4).combinations(size) {
            let s: DVector<f64> = set.iter().map(|&i| &z[i]).sum();
            let v = gpair(&ginv, &s, &s);
            if v.abs() <= floor {
                return Err(SymbolError::DegenerateDenominator { indices: set, value: v });
            }
            out.push((set, v));
        }
    }
    Ok(out)
}

/// The 24-term cancellation sum attached to the cubic (`C0 C1`) terms.
pub fn coefficient_a(m: &MetricSpec, quad: &CovectorQuadruple) -> Result<f64, SymbolError> {
    denominators(m, quad)?;
    let ginv = dual_metric(m, &quad.q0)?;
    let z = quad.vectors();
    let g = |a: &DVector<f64>, b: &DVector<f64>| gpair(&ginv, a, b);
    let mut total = 0.0;
    for p in (0..4).permutations(4) {
        let (i, j, k, l) = (p[0], p[1], p[2], p[3]);
        let jkl = &z[j] + &z[k] + &z[l];
        let kl = &z[k] + &z[l];
        let ij = &z[i] + &z[j];
        let gkl = g(&z[k], &z[l]);
        total += 2.0 * g(&z[i], &jkl) / g(&jkl, &jkl) * gkl
            + g(&z[i], &z[j]) / g(&ij, &ij) * gkl
            + 2.0 * gkl / g(&kl, &kl) * g(&z[j], &kl);
    }
    Ok(total)
}

/// The 24-term cancellation sum attached to the `C0³` terms.
pub fn coefficient_b(m: &MetricSpec, quad: &CovectorQuadruple) -> Result<f64, SymbolError> {
    denominators(m, quad)?;
    let ginv = dual_metric(m, &quad.q0)?;
    let z = quad.vectors();
    let g = |a: &DVector<f64>, b: &DVector<f64>| gpair(&ginv, a, b);
    let mut total = 0.0;
    for p in (0..4).permutations(4) {
        let (i, j, k, l) = (p[0], p[1], p[2], p[3]);
        let jkl = &z[j] + &z[k] + &z[l];
        let kl = &z[k] + &z[l];
        let ij = &z[i] + &z[j];
        let (gij, gkl) = (g(&z[i], &z[j]), g(&z[k], &z[l]));
        total += 4.0 * g(&z[i], &jkl) / g(&jkl, &jkl) * g(&z[j], &kl) / g(&kl, &kl) * gkl
            + g(&kl, &ij) / (g(&kl, &kl) * g(&ij, &ij)) * gij * gkl;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub g_star_zeta: f64,
    pub quadruple: CovectorQuadruple,
    pub metric: String,
    pub m_form: String,
    pub denominators: Vec<(Vec<usize>, f64)>,
}

pub fn interaction_report(
    m: &MetricSpec,
    m_form: &QuadraticForm,
    quad: &CovectorQuadruple,
) -> Result<InteractionReport, SymbolError> {
    Ok(InteractionReport {
        p: interaction_p(m, m_form, quad)?,
        a: coefficient_a(m, quad)?,
        b: coefficient_b(m, quad)?,
        g_star_zeta: quad.g_star_sum(m)?,
        quadruple: quad.clone(),
        metric: m.name().to_string(),
        m_form: m_form.to_string(),
        denominators: denominators(m, quad)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankCertificate {
    pub rank: usize,
    pub singular_values: [f64; 2],
    /// Row `DF`, four blocks of `2 G ζ`, projected onto the tangent space of
    /// the product of null cones.
    pub df: Vec<f64>,
    /// Row `DP`, blocks `4 G M_s G (ζ − ζ_a)`, projected likewise.
    pub dp: Vec<f64>,
}

/// Rank of `D(F, P)` restricted to variations that keep every `ζ_a` null.
///
/// `G` is the matrix of `g*`, so `M ∝ G⁻¹` means `M` is a multiple of `g`.
/// Only the symmetric part `M_s` of `M` enters `P`. Each 4-block is projected
/// orthogonally to `G ζ_a`, the normal of the cone `g*(ζ_a, ζ_a) = 0`;
/// without the restriction `M ∝ G⁻¹` would not be detected.
pub fn rank_certificate(
    m: &MetricSpec,
    m_form: &QuadraticForm,
    quad: &CovectorQuadruple,
) -> Result<RankCertificate, SymbolError> {
    let ginv = dual_metric(m, &quad.q0)?;
    let mm = m_form.matrix(m, &quad.q0);
    let ms = (&mm + mm.transpose()) * 0.5;
    let z = quad.vectors();
    let zeta: DVector<f64> = z.iter().sum();
    let mut jac = DMatrix::zeros(2, 16);
    for (a, za) in z.iter().enumerate() {
        let normal = &ginv * za;
        let project = |v: DVector<f64>| {
            let nn = normal.norm_squared();
            if nn > 0.0 {
                &v - &normal * (normal.dot(&v) / nn)
            } else {
                v
            }
        };
        let df = project(&ginv * &zeta * 2.0);
        let dp = project(&ginv * &ms * &ginv * (&zeta - za) * 4.0);
        for r in 0..4 {
            jac[(0, 4 * a + r)] = df[r];
            jac[(1, 4 * a + r)] = dp[r];
        }
    }
    let sv = SVD::new(jac.clone(), false, false).singular_values;
    let (s1, s2) = if sv[0] >= sv[1] { (sv[0], sv[1]) } else { (sv[1], sv[0]) };
    let rank = if s1 == 0.0 {
        0
    } else if s2 <= TOL_RANK * s1 {
        1
    } else {
        2
    };
    Ok(RankCertificate {
        rank,
        singular_values: [s1, s2],
        df: jac.row(0).iter().cloned().collect(),
        dp: jac.row(1).iter().cloned().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum WitnessOutcome {
    Witness {
        quadruple: CovectorQuadruple,
        p: f64,
        /// `|P| / ‖quad‖²`.
        normalized: f64,
        attempt: usize,
    },
    /// `M` passes the null test at `q0`, so `P` vanishes on null-sum quadruples.
    MNullCertificate { q0: Vec<f64>, m_form: String },
}

/// Searches null-sum quadruples for one with `|P| > threshold ‖quad‖²`.
///
/// `P` is homogeneous of degree 2, which fixes the normalization. Attempts
/// draw from independent streams of `seed`, so the first witness found does
/// not depend on the executor.
pub fn nonvanishing_witness(
    m: &MetricSpec,
    m_form: &QuadraticForm,
    q0: &[f64],
    n_attempts: usize,
    threshold: f64,
    seed: u64,
    exec: Exec,
) -> Result<WitnessOutcome, SymbolError> {
    if m.spatial_dim() != 3 {
        return Err(SymbolError::DimensionNotThree(m.spatial_dim()));
    }
    if is_null_form(m_form, m, q0, 200) {
        return Ok(WitnessOutcome::MNullCertificate {
            q0: q0.to_vec(),
            m_form: m_form.to_string(),
        });
    }
    let tries = exec.map(n_attempts, |a| {
        let quad = sample_quadruple_stream(m, q0, seed, a as u64, true, 200).ok()?;
        let p = interaction_p(m, m_form, &quad).ok()?;
        Some((quad.clone(), p, p.abs() / quad.norm_squared()))
    });
    let mut max_seen: f64 = 0.0;
    for (attempt, t) in tries.into_iter().enumerate() {
        if let Some((quad, p, normalized)) = t {
            if normalized > threshold {
                return Ok(WitnessOutcome::Witness {
                    quadruple: quad,
                    p,
                    normalized,
                    attempt,
                });
            }
            max_seen = max_seen.max(normalized);
        }
    }
    Err(SymbolError::SearchFailed {
        attempts: n_attempts,
        max_seen,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentLedger {
    /// Exponent (in units of γ(q0)) contributed by `P`.
    pub p: i32,
    /// Outgoing causal-inverse leg.
    pub outgoing: i32,
    /// One entry per incoming leg.
    pub incoming: [i32; 4],
    pub net: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalReport {
    pub gamma_q0: f64,
    pub p_base: f64,
    pub p_conformal: f64,
    /// `p_conformal / p_base`.
    pub ratio: f64,
    pub expected_ratio: f64,
    pub ratio_error: f64,
    pub exponents: ExponentLedger,
    /// `e^{net γ(q0)}`.
    pub net_factor: f64,
}

/// Compares `P` under `g̃ = m_base` and `g = e^{2γ} g̃`, with `M_ij` held
/// fixed (evaluated from `m_base`), and records the exponent bookkeeping of
/// the full fourth-order symbol.
pub fn conformal_relation(
    m_base: &MetricSpec,
    gamma: &ScalarField,
    m_form: &QuadraticForm,
    quad: &CovectorQuadruple,
) -> Result<ConformalReport, SymbolError> {
    let q0 = &quad.q0;
    let g_q0 = gamma.value(q0);
    let ginv = dual_metric(m_base, q0)?;
    let ginv_conf = &ginv * (-2.0 * g_q0).exp();
    let mm = m_form.matrix(m_base, q0);
    let z = quad.vectors();
    let p_base = p_from_matrices(&ginv, &mm, &z);
    let p_conformal = p_from_matrices(&ginv_conf, &mm, &z);
    let expected_ratio = (-4.0 * g_q0).exp();
    let ratio = p_conformal / p_base;
    let exponents = ExponentLedger {
        p: -4,
        outgoing: 3,
        incoming: [-1; 4],
        net: -4 + 3 - 4,
    };
    Ok(ConformalReport {
        gamma_q0: g_q0,
        p_base,
        p_conformal,
        ratio,
        expected_ratio,
        ratio_error: (ratio - expected_ratio).abs(),
        net_factor: (exponents.net as f64 * g_q0).exp(),
        exponents,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub seed: u64,
    pub g_star_zeta: f64,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub rank: usize,
}

/// One row per seed; quadruples failing the sampler or denominator guard are
/// skipped.
pub fn interaction_batch(
    m: &MetricSpec,
    m_form: &QuadraticForm,
    q0: &[f64],
    seeds: &[u64],
    require_null_sum: bool,
    exec: Exec,
) -> Vec<BatchRow> {
    exec.map(seeds.len(), |k| {
        let seed = seeds[k];
        let quad = sample_quadruple(m, q0, seed, require_null_sum, 200).ok()?;
        let rep = interaction_report(m, m_form, &quad).ok()?;
        let rank = rank_certificate(m, m_form, &quad).ok()?.rank;
        Some(BatchRow {
            seed,
            g_star_zeta: rep.g_star_zeta,
            p: rep.p,
            a: rep.a,
            b: rep.b,
            rank,
        })
    })
    .into_iter()
    .flatten()
    .collect()
}

pub fn write_batch_csv<W: Write>(rows: &[BatchRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "seed,g_star_zeta,P,A,B,rank")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            r.seed, r.g_star_zeta, r.p, r.a, r.b, r.rank
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
