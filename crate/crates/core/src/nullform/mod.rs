//! Quadratic forms on tangent vectors, the null condition, and the
//! constructive decomposition `w = C0 g + Σ a_ab E^ab` of null forms.

mod parse;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{null_completion, quad, GeometryError, MetricSpec, OneVector, Tangent};
use crate::scalar::ScalarField;
use crate::tolerances::{TOL_DEC, TOL_NULL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NullFormError {
    #[error("not a null form: coefficient {coefficient} leaves residual {residual:e}")]
    NotANullForm { coefficient: String, residual: f64 },
    #[error("every diagonal-family coefficient of g vanishes; no pivot")]
    PivotNotFound,
    #[error("null cone is degenerate at this point (no real root)")]
    ConeDegenerate,
    #[error("quadratic forms act on tangent vectors; raise covectors first")]
    KindMismatch,
    #[error("form parse error at column {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("form needs dimension {needed} but the metric has {have}")]
    DimensionMismatch { needed: usize, have: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Basis element of bilinear forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Basis {
    /// The metric `g_ij(x)` itself.
    Metric,
    /// `+1` at `(a, b)`, `−1` at `(b, a)`.
    E { a: usize, b: usize },
    /// `+1` at `(a, b)` and `(b, a)`.
    F { a: usize, b: usize },
    /// `+1` at `(a, a)`.
    G { a: usize },
    /// Explicit matrix `W_ij`, not necessarily symmetric.
    Matrix { rows: Vec<Vec<f64>> },
}

impl Basis {
    fn max_index(&self) -> usize {
        match self {
            Basis::Metric => 0,
            Basis::E { a, b } | Basis::F { a, b } => (*a).max(*b),
            Basis::G { a } => *a,
            Basis::Matrix { rows } => rows.len().saturating_sub(1),
        }
    }

    fn matrix(&self, m: &MetricSpec, x: &[f64]) -> DMatrix<f64> {
        let n = m.dim();
        match self {
            Basis::Metric => m.metric(x),
            Basis::E { a, b } => {
                let mut w = DMatrix::zeros(n, n);
                w[(*a, *b)] = 1.0;
                w[(*b, *a)] = -1.0;
                w
            }
            Basis::F { a, b } => {
                let mut w = DMatrix::zeros(n, n);
                w[(*a, *b)] = 1.0;
                w[(*b, *a)] = 1.0;
                w
            }
            Basis::G { a } => {
                let mut w = DMatrix::zeros(n, n);
                w[(*a, *a)] = 1.0;
                w
            }
            Basis::Matrix { rows } => DMatrix::from_fn(n, n, |r, c| rows[r][c]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormTerm {
    pub coeff: ScalarField,
    pub basis: Basis,
}

/// An x-dependent bilinear form `w(ξ, η) = Σ W_ab(x) ξ^a η^b`, stored as a
/// combination of basis elements with scalar-field coefficients.
///
/// Deserializes from a grammar string (`"3*g + 2*E01"`), a bare matrix, or
/// an explicit `{"terms": [...]}` list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormRepr")]
pub struct QuadraticForm {
    pub terms: Vec<FormTerm>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FormRepr {
    Text(String),
    Matrix(Vec<Vec<f64>>),
    Terms {
        terms: Vec<FormTerm>,
    },
}

impl TryFrom<FormRepr> for QuadraticForm {
    type Error = NullFormError;
    fn try_from(r: FormRepr) -> Result<Self, NullFormError> {
        match r {
            FormRepr::Text(s) => QuadraticForm::parse(&s),
            FormRepr::Matrix(rows) => QuadraticForm::from_rows(rows),
            FormRepr::Terms { terms } => Ok(QuadraticForm { terms }),
        }
    }
}

impl QuadraticForm {
    pub fn zero() -> Self {
        QuadraticForm { terms: Vec::new() }
    }

    pub fn parse(src: &str) -> Result<Self, NullFormError> {
        Ok(QuadraticForm {
            terms: parse::parse_terms(src)?,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, NullFormError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(NullFormError::Parse {
                pos: 0,
                msg: "matrix form must be square and nonempty".into(),
            });
        }
        Ok(Self::single(1.0, Basis::Matrix { rows }))
    }

    pub fn from_matrix(w: &DMatrix<f64>) -> Self {
        let rows = (0..w.nrows())
            .map(|r| (0..w.ncols()).map(|c| w[(r, c)]).collect())
            .collect();
        Self::single(1.0, Basis::Matrix { rows })
    }

    pub fn single(c: f64, basis: Basis) -> Self {
        QuadraticForm {
            terms: vec![FormTerm {
                coeff: ScalarField::constant(c),
                basis,
            }],
        }
    }

    pub fn metric(c: f64) -> Self {
        Self::single(c, Basis::Metric)
    }

    /// Adds `c · basis` to the form.
    pub fn plus(mut self, c: f64, basis: Basis) -> Self {
        self.terms.push(FormTerm {
            coeff: ScalarField::constant(c),
            basis,
        });
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.coeff.is_constant() && t.coeff.value(&[]) == 0.0)
    }

    /// True when no coefficient depends on `axis` (the metric term inherits
    /// the metric's dependence, which callers check separately).
    pub fn coefficients_depend_on(&self, axis: usize) -> bool {
        self.terms.iter().any(|t| t.coeff.depends_on(axis))
    }

    pub fn uses_metric(&self) -> bool {
        self.terms.iter().any(|t| t.basis == Basis::Metric)
    }

    /// Checks indices against the metric dimension.
    pub fn check(&self, m: &MetricSpec) -> Result<(), NullFormError> {
        let n = m.dim();
        for t in &self.terms {
            let bad = match &t.basis {
                Basis::Matrix { rows } => rows.len() != n || rows.iter().any(|r| r.len() != n),
                b => b.max_index() >= n,
            };
            if bad {
                return Err(NullFormError::DimensionMismatch {
                    needed: t.basis.max_index() + 1,
                    have: n,
                });
            }
        }
        Ok(())
    }

    /// Coefficient matrix `W(x)`.
    pub fn matrix(&self, m: &MetricSpec, x: &[f64]) -> DMatrix<f64> {
        let n = m.dim();
        let mut w = DMatrix::zeros(n, n);
        for t in &self.terms {
            let c = t.coeff.value(x);
            if c != 0.0 {
                w += t.basis.matrix(m, x) * c;
            }
        }
        w
    }

    /// `w(ξ, η)` on tangent vectors.
    pub fn eval(&self, m: &MetricSpec, x: &[f64], xi: &Tangent, eta: &Tangent) -> f64 {
        quad(&self.matrix(m, x), &xi.0, &eta.0)
    }
}

impl fmt::Display for QuadraticForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let c = match &t.coeff {
                ScalarField::Constant { value } => *value,
                _ => f64::NAN,
            };
            let atom = match &t.basis {
                Basis::Metric => "g".to_string(),
                Basis::E { a, b } => format!("E{a}{b}"),
                Basis::F { a, b } => format!("F{a}{b}"),
                Basis::G { a } => format!("G{a}"),
                Basis::Matrix { .. } => "W".to_string(),
            };
            let sign = if c.is_nan() || c >= 0.0 { "+" } else { "-" };
            if i > 0 || sign == "-" {
                write!(f, "{}{sign} ", if i > 0 { " " } else { "" })?;
            }
            if c.is_nan() {
                write!(f, "c(x)*{atom}")?;
            } else {
                write!(f, "{}*{atom}", c.abs())?;
            }
        }
        Ok(())
    }
}

/// `w(ξ, η)` with a kind check: both arguments must be tangent vectors.
pub fn evaluate(
    w: &QuadraticForm,
    m: &MetricSpec,
    x: &[f64],
    xi: &OneVector,
    eta: &OneVector,
) -> Result<f64, NullFormError> {
    match (xi, eta) {
        (OneVector::Tangent(a), OneVector::Tangent(b)) => Ok(w.eval(m, x, a, b)),
        _ => Err(NullFormError::KindMismatch),
    }
}

/// Uniform random unit vector in `d` dimensions (rejection from the cube).
pub(crate) fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// `n` future null vectors `e0 + λu` for random spatial unit directions `u`.
pub fn sample_null_cone(
    m: &MetricSpec,
    x: &[f64],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Tangent>, NullFormError> {
    let g = m.metric(x);
    let d = m.spatial_dim();
    (0..n)
        .map(|_| {
            let u = random_unit(rng, d);
            null_completion(&g, &u)
                .map(Tangent)
                .ok_or(NullFormError::ConeDegenerate)
        })
        .collect()
}

/// Null vector maximizing `|w(v, v)| / ‖v‖²` over a seeded sample, if that
/// maximum exceeds `tol_null`.
pub fn null_form_witness(
    w: &QuadraticForm,
    m: &MetricSpec,
    x: &[f64],
    n_samples: usize,
    seed: u64,
    tol_null: f64,
) -> Result<Option<(Tangent, f64)>, NullFormError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wm = w.matrix(m, x);
    let mut best: Option<(Tangent, f64)> = None;
    for v in sample_null_cone(m, x, n_samples.max(50), &mut rng)? {
        let r = quad(&wm, &v.0, &v.0).abs() / v.0.norm_squared();
        if r > tol_null && best.as_ref().map_or(true, |b| r > b.1) {
            best = Some((v, r));
        }
    }
    Ok(best)
}

/// Condition (N) on a seeded sample of the null cone at `x`.
pub fn is_null_form(w: &QuadraticForm, m: &MetricSpec, x: &[f64], n_samples: usize) -> bool {
    is_null_form_with(w, m, x, n_samples, 0, TOL_NULL)
}

pub fn is_null_form_with(
    w: &QuadraticForm,
    m: &MetricSpec,
    x: &[f64],
    n_samples: usize,
    seed: u64,
    tol_null: f64,
) -> bool {
    matches!(null_form_witness(w, m, x, n_samples, seed, tol_null), Ok(None))
}

/// Symmetric-family basis label: `F^{ab}` (a < b) or `G^a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymLabel {
    F { a: usize, b: usize },
    G { a: usize },
}

impl fmt::Display for SymLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymLabel::F { a, b } => write!(f, "F{a}{b}"),
            SymLabel::G { a } => write!(f, "G{a}"),
        }
    }
}

/// Pivot selection for the decomposition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pivot {
    /// Largest-magnitude g-coefficient.
    #[default]
    Largest,
    /// A specific coefficient; must be nonzero in g.
    At(SymLabel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntisymCoeff {
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub c0: f64,
    /// `a_ab` for `a < b`, in lexicographic order.
    pub a: Vec<AntisymCoeff>,
    pub base_point: Vec<f64>,
    pub pivot: SymLabel,
    /// Largest symmetric-family residual after removing `C0 g`.
    pub residual: f64,
}

impl Decomposition {
    pub fn coeff(&self, a: usize, b: usize) -> f64 {
        let (lo, hi, s) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        self.a
            .iter()
            .find(|c| c.a == lo && c.b == hi)
            .map_or(0.0, |c| s * c.value)
    }

    /// `C0 g(x) + Σ a_ab E^ab`.
    pub fn reconstruct(&self, m: &MetricSpec) -> DMatrix<f64> {
        let mut w = m.metric(&self.base_point) * self.c0;
        for c in &self.a {
            w[(c.a, c.b)] += c.value;
            w[(c.b, c.a)] -= c.value;
        }
        w
    }
}

/// Symmetric-family coefficients of `W` in the basis `{F^ab, G^a}`.
fn sym_coefficients(w: &DMatrix<f64>) -> Vec<(SymLabel, f64)> {
    let n = w.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for a in 0..n {
        out.push((SymLabel::G { a }, w[(a, a)]));
    }
    for a in 0..n {
        for b in a + 1..n {
            out.push((SymLabel::F { a, b }, 0.5 * (w[(a, b)] + w[(b, a)])));
        }
    }
    out
}

pub fn decompose_null_form(
    w: &QuadraticForm,
    m: &MetricSpec,
    x: &[f64],
) -> Result<Decomposition, NullFormError> {
    decompose_null_form_with(w, m, x, Pivot::Largest, TOL_DEC)
}

/// Expands `W(x)` in `{E^ab, F^ab, G^a}`, pivots on a nonzero symmetric
/// coefficient of `g` to fix `C0`, and accepts iff every remaining symmetric
/// coefficient matches `C0 g` within `tol_dec`.
pub fn decompose_null_form_with(
    w: &QuadraticForm,
    m: &MetricSpec,
    x: &[f64],
    pivot: Pivot,
    tol_dec: f64,
) -> Result<Decomposition, NullFormError> {
    w.check(m)?;
    let wm = w.matrix(m, x);
    let g = m.metric(x);
    let n = g.nrows();
    let s = sym_coefficients(&wm);
    let gamma = sym_coefficients(&g);
    let p = match pivot {
        Pivot::Largest => {
            let (k, best) = gamma
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .1.abs().total_cmp(&b.1 .1.abs()))
                .expect("nonempty basis");
            if best.1.abs() < 1e-300 {
                return Err(NullFormError::PivotNotFound);
            }
            k
        }
        Pivot::At(label) => {
            let k = gamma
                .iter()
                .position(|(l, _)| *l == label)
                .ok_or(NullFormError::PivotNotFound)?;
            if gamma[k].1 == 0.0 {
                return Err(NullFormError::PivotNotFound);
            }
            k
        }
    };
    let c0 = s[p].1 / gamma[p].1;
    let (worst, residual) = s
        .iter()
        .zip(&gamma)
        .map(|((l, sk), (_, gk))| (*l, (sk - c0 * gk).abs()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty basis");
    if residual > tol_dec {
        return Err(NullFormError::NotANullForm {
            coefficient: worst.to_string(),
            residual,
        });
    }
    let mut a = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            a.push(AntisymCoeff {
                a: i,
                b: j,
                value: 0.5 * (wm[(i, j)] - wm[(j, i)]),
            });
        }
    }
    Ok(Decomposition {
        c0,
        a,
        base_point: x.to_vec(),
        pivot: gamma[p].0,
        residual,
    })
}

/// Taylor data of `w(x, u, ξ) = N0(ξ, ξ) + u N1(ξ, ξ) + u² M(ξ, ξ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearTerm {
    pub n0: QuadraticForm,
    pub n1: QuadraticForm,
    #[serde(rename = "m")]
    pub m_form: QuadraticForm,
}

impl NonlinearTerm {
    pub fn new(n0: QuadraticForm, n1: QuadraticForm, m_form: QuadraticForm) -> Self {
        NonlinearTerm { n0, n1, m_form }
    }

    pub fn zero() -> Self {
        Self::new(QuadraticForm::zero(), QuadraticForm::zero(), QuadraticForm::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.n0.is_zero() && self.n1.is_zero() && self.m_form.is_zero()
    }

    pub fn check(&self, m: &MetricSpec) -> Result<(), NullFormError> {
        self.n0.check(m)?;
        self.n1.check(m)?;
        self.m_form.check(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointVerdict {
    pub x: Vec<f64>,
    /// `C0(x)`, or the decomposition failure.
    pub n0: Result<f64, String>,
    pub n1: Result<f64, String>,
    pub m_is_null: bool,
    /// Null vector on which `M` is nonzero, with `|M(v,v)|/‖v‖²`.
    pub m_witness: Option<(Vec<f64>, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub satisfied: bool,
    pub points: Vec<PointVerdict>,
    /// Human-readable reasons when not satisfied.
    pub violations: Vec<String>,
}

impl AssumptionReport {
    /// `(C0(x), C1(x))` at each sample point, when satisfied.
    pub fn coefficients(&self) -> Option<Vec<(f64, f64)>> {
        self.points
            .iter()
            .map(|p| Some((p.n0.clone().ok()?, p.n1.clone().ok()?)))
            .collect()
    }
}

/// Checks that `N0`, `N1` decompose as null forms at every sample point and
/// that `M` fails the null condition at one point at least.
pub fn classify_nonlinearity(
    nl: &NonlinearTerm,
    m: &MetricSpec,
    points: &[Vec<f64>],
    n_samples: usize,
    seed: u64,
) -> AssumptionReport {
    let mut violations = Vec::new();
    let mut any_m_nonnull = false;
    let verdicts: Vec<PointVerdict> = points
        .iter()
        .map(|x| {
            let dec = |f: &QuadraticForm| {
                decompose_null_form(f, m, x)
                    .map(|d| d.c0)
                    .map_err(|e| e.to_string())
            };
            let n0 = dec(&nl.n0);
            let n1 = dec(&nl.n1);
            if let Err(e) = &n0 {
                violations.push(format!("N0 at {x:?}: {e}"));
            }
            if let Err(e) = &n1 {
                violations.push(format!("N1 at {x:?}: {e}"));
            }
            let wit = null_form_witness(&nl.m_form, m, x, n_samples, seed, TOL_NULL)
                .ok()
                .flatten();
            any_m_nonnull |= wit.is_some();
            PointVerdict {
                x: x.clone(),
                n0,
                n1,
                m_is_null: wit.is_none(),
                m_witness: wit.map(|(v, r)| (v.0.as_slice().to_vec(), r)),
            }
        })
        .collect();
    if !any_m_nonnull {
        violations.push("M is null at every sample point".into());
    }
    AssumptionReport {
        satisfied: violations.is_empty(),
        points: verdicts,
        violations,
    }
}

#[cfg(test)]
mod tests;
