//! Catalog of Lorentzian metrics with analytic (or tabulated) derivatives.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::scalar::ScalarField;
use crate::tolerances::TABLE_FD_STEP;

/// A Lorentzian metric of signature (−, +, …, +) on coordinates
/// `(t, x^1, …, x^d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    /// `−dt² + Σ (dx^a)²`.
    Minkowski { d: usize },
    /// `e^{2γ(x)} (−dt² + Σ (dx^a)²)`.
    ConformalMinkowski { d: usize, gamma: ScalarField },
    /// `−dt² + dθ² + sin²θ dφ²` on coordinates `(t, θ, φ)`.
    UltrastaticSphere,
    /// `−e^{2a(x)} dt² + e^{2b(x)} K_ab dx^a dx^b` with a constant positive
    /// definite `K` (identity when omitted).
    Product {
        d: usize,
        log_lapse: ScalarField,
        log_scale: ScalarField,
        #[serde(default)]
        spatial: Option<Vec<Vec<f64>>>,
    },
    /// Coefficients sampled on a uniform lattice, multilinearly interpolated.
    CoefficientTable { table: CoefficientTable },
}

/// Tabulated metric coefficients `g_ij` on a uniform lattice of nodes.
///
/// `values[node]` holds the row-major `(d+1)×(d+1)` matrix; nodes are ordered
/// with the last coordinate varying fastest. An axis with a single node makes
/// the metric constant along it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientTable {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl CoefficientTable {
    /// A constant metric given by a single matrix.
    pub fn constant(g: &DMatrix<f64>) -> Self {
        let n = g.nrows();
        CoefficientTable {
            lo: vec![0.0; n],
            hi: vec![0.0; n],
            counts: vec![1; n],
            values: vec![row_major(g)],
        }
    }

    fn dim(&self) -> usize {
        self.counts.len()
    }

    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        // Multilinear weights per axis.
        let mut axes: Vec<[(usize, f64); 2]> = Vec::with_capacity(n);
        for k in 0..n {
            let c = self.counts[k];
            if c <= 1 {
                axes.push([(0, 1.0), (0, 0.0)]);
                continue;
            }
            let h = (self.hi[k] - self.lo[k]) / (c - 1) as f64;
            let s = ((x[k] - self.lo[k]) / h).clamp(0.0, (c - 1) as f64);
            let i = (s.floor() as usize).min(c - 2);
            let f = s - i as f64;
            axes.push([(i, 1.0 - f), (i + 1, f)]);
        }
        let mut out = DMatrix::zeros(n, n);
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for k in 0..n {
                let (i, wk) = axes[k][(corner >> k) & 1];
                w *= wk;
                idx = idx * self.counts[k] + i;
            }
            if w == 0.0 {
                continue;
            }
            let v = &self.values[idx];
            for r in 0..n {
                for c in 0..n {
                    out[(r, c)] += w * v[r * n + c];
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let n = self.dim();
        if n < 2 || n > 4 || self.lo.len() != n || self.hi.len() != n {
            return Err(GeometryError::InvalidMetric(
                "coefficient table axes must have 2..=4 entries".into(),
            ));
        }
        let nodes: usize = self.counts.iter().product();
        if nodes == 0 || self.values.len() != nodes {
            return Err(GeometryError::InvalidMetric(format!(
                "coefficient table expects {nodes} node matrices, got {}",
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| v.len() != n * n) {
            return Err(GeometryError::InvalidMetric(format!(
                "every table entry must have {} coefficients",
                n * n
            )));
        }
        Ok(())
    }
}

fn row_major(g: &DMatrix<f64>) -> Vec<f64> {
    let n = g.nrows();
    (0..n * n).map(|i| g[(i / n, i % n)]).collect()
}

impl MetricSpec {
    pub fn minkowski(d: usize) -> Self {
        MetricSpec::Minkowski { d }
    }

    pub fn conformal(d: usize, gamma: ScalarField) -> Self {
        MetricSpec::ConformalMinkowski { d, gamma }
    }

    pub fn product(d: usize, log_lapse: ScalarField, log_scale: ScalarField) -> Self {
        MetricSpec::Product {
            d,
            log_lapse,
            log_scale,
            spatial: None,
        }
    }

    /// Constant metric from an explicit coefficient matrix.
    pub fn constant(g: &DMatrix<f64>) -> Self {
        MetricSpec::CoefficientTable {
            table: CoefficientTable::constant(g),
        }
    }

    /// Number of spatial dimensions `d`.
    pub fn spatial_dim(&self) -> usize {
        match self {
            MetricSpec::Minkowski { d }
            | MetricSpec::ConformalMinkowski { d, .. }
            | MetricSpec::Product { d, .. } => *d,
            MetricSpec::UltrastaticSphere => 2,
            MetricSpec::CoefficientTable { table } => table.dim() - 1,
        }
    }

    /// Space-time dimension `d + 1`.
    pub fn dim(&self) -> usize {
        self.spatial_dim() + 1
    }

    /// Short identifier used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            MetricSpec::Minkowski { .. } => "minkowski",
            MetricSpec::ConformalMinkowski { .. } => "conformal_minkowski",
            MetricSpec::UltrastaticSphere => "ultrastatic_sphere",
            MetricSpec::Product { .. } => "product",
            MetricSpec::CoefficientTable { .. } => "coefficient_table",
        }
    }

    /// Metrics whose light cones are exactly those of Minkowski space, so
    /// causal questions have closed-form answers.
    pub fn is_cone_exact(&self) -> bool {
        matches!(
            self,
            MetricSpec::Minkowski { .. } | MetricSpec::ConformalMinkowski { .. }
        )
    }

    /// True when no coefficient depends on the time coordinate.
    pub fn is_static(&self) -> bool {
        match self {
            MetricSpec::Minkowski { .. } | MetricSpec::UltrastaticSphere => true,
            MetricSpec::ConformalMinkowski { gamma, .. } => !gamma.depends_on(0),
            MetricSpec::Product {
                log_lapse,
                log_scale,
                ..
            } => !log_lapse.depends_on(0) && !log_scale.depends_on(0),
            MetricSpec::CoefficientTable { table } => table.counts[0] <= 1,
        }
    }

    fn spatial_matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            MetricSpec::Product {
                d,
                spatial: Some(k),
                ..
            } => Some(DMatrix::from_fn(*d, *d, |r, c| k[r][c])),
            _ => None,
        }
    }

    /// Structural validation independent of the evaluation point.
    pub fn check(&self) -> Result<(), GeometryError> {
        match self {
            MetricSpec::Minkowski { d }
            | MetricSpec::ConformalMinkowski { d, .. }
            | MetricSpec::Product { d, .. } => {
                if !(1..=3).contains(d) {
                    return Err(GeometryError::InvalidMetric(format!(
                        "spatial dimension must be 1, 2 or 3 (got {d})"
                    )));
                }
                if let Some(k) = self.spatial_matrix() {
                    let MetricSpec::Product {
                        spatial: Some(rows),
                        ..
                    } = self
                    else {
                        unreachable!()
                    };
                    if rows.len() != *d || rows.iter().any(|r| r.len() != *d) {
                        return Err(GeometryError::InvalidMetric(
                            "spatial matrix must be d×d".into(),
                        ));
                    }
                    let eig = SymmetricEigen::new(k.clone());
                    if (&k - k.transpose()).amax() > 1e-14 || eig.eigenvalues.min() <= 0.0 {
                        return Err(GeometryError::InvalidMetric(
                            "spatial matrix must be symmetric positive definite".into(),
                        ));
                    }
                }
                Ok(())
            }
            MetricSpec::UltrastaticSphere => Ok(()),
            MetricSpec::CoefficientTable { table } => table.validate(),
        }
    }

    /// Covariant components `g_ij(x)`.
    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        match self {
            MetricSpec::Minkowski { .. } => minkowski_matrix(n),
            MetricSpec::ConformalMinkowski { gamma, .. } => {
                minkowski_matrix(n) * (2.0 * gamma.value(x)).exp()
            }
            MetricSpec::UltrastaticSphere => {
                let s = x[1].sin();
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, s * s]))
            }
            MetricSpec::Product {
                d,
                log_lapse,
                log_scale,
                ..
            } => {
                let mut g = DMatrix::zeros(n, n);
                g[(0, 0)] = -(2.0 * log_lapse.value(x)).exp();
                let scale = (2.0 * log_scale.value(x)).exp();
                let k = self
                    .spatial_matrix()
                    .unwrap_or_else(|| DMatrix::identity(*d, *d));
                for a in 0..*d {
                    for b in 0..*d {
                        g[(a + 1, b + 1)] = scale * k[(a, b)];
                    }
                }
                g
            }
            MetricSpec::CoefficientTable { table } => table.eval(x),
        }
    }

    /// Partial derivatives `∂_k g_ij(x)`, one matrix per coordinate `k`.
    pub fn metric_derivatives(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        match self {
            MetricSpec::Minkowski { .. } => vec![DMatrix::zeros(n, n); n],
            MetricSpec::ConformalMinkowski { gamma, .. } => {
                let g = self.metric(x);
                gamma
                    .gradient(&x[..n])
                    .into_iter()
                    .map(|dg| &g * (2.0 * dg))
                    .collect()
            }
            MetricSpec::UltrastaticSphere => {
                let mut out = vec![DMatrix::zeros(3, 3); 3];
                out[1][(2, 2)] = 2.0 * x[1].sin() * x[1].cos();
                out
            }
            MetricSpec::Product {
                log_lapse,
                log_scale,
                ..
            } => {
                let g = self.metric(x);
                let da = log_lapse.gradient(&x[..n]);
                let db = log_scale.gradient(&x[..n]);
                (0..n)
                    .map(|k| {
                        let mut m = &g * (2.0 * db[k]);
                        m[(0, 0)] = g[(0, 0)] * 2.0 * da[k];
                        m
                    })
                    .collect()
            }
            MetricSpec::CoefficientTable { .. } => {
                // Richardson-combined central differences.
                let h = TABLE_FD_STEP;
                (0..n)
                    .map(|k| {
                        let central = |step: f64| {
                            let mut xp = x.to_vec();
                            let mut xm = x.to_vec();
                            xp[k] += step;
                            xm[k] -= step;
                            (self.metric(&xp) - self.metric(&xm)) / (2.0 * step)
                        };
                        let fine = central(h);
                        let coarse = central(2.0 * h);
                        (fine * 4.0 - coarse) / 3.0
                    })
                    .collect()
            }
        }
    }

    /// Checks the Lorentzian invariants at `x`: symmetry, negative determinant,
    /// exactly one negative eigenvalue, and `t` being a time function.
    pub fn validate_at(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let g = self.metric(x);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidMetric("non-finite coefficient".into()));
        }
        if (&g - g.transpose()).amax() > 1e-12 * g.amax().max(1.0) {
            return Err(GeometryError::InvalidMetric("g_ij is not symmetric".into()));
        }
        let det = g.determinant();
        if det >= 0.0 {
            return Err(GeometryError::InvalidMetric(format!(
                "det g = {det:e} is not negative"
            )));
        }
        let eig = SymmetricEigen::new(g.clone());
        let negatives = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
        if negatives != 1 {
            return Err(GeometryError::InvalidMetric(format!(
                "signature has {negatives} negative eigenvalues"
            )));
        }
        let inv = super::dual_metric(self, x)?;
        if inv[(0, 0)] >= 0.0 {
            return Err(GeometryError::InvalidMetric(
                "coordinate t is not a time function (g^00 >= 0)".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn minkowski_matrix(n: usize) -> DMatrix<f64> {
    let mut g = DMatrix::identity(n, n);
    g[(0, 0)] = -1.0;
    g
}
