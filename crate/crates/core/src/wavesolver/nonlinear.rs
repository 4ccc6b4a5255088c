//! Linear and nonlinear forward solves.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::grid::CoeffCache;
use super::stepper::{contract_gradients, covector_at, march, MarchOptions};
use super::{Forcing, Grid, GridField, SolverError, SourceTerm};
use crate::geometry::MetricSpec;
use crate::nullform::{decompose_null_form_with, NonlinearTerm, Pivot, QuadraticForm};
use crate::tolerances::{PICARD_RESIDUAL, TOL_DEC};
use crate::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearMode {
    /// Explicit: `w` from the current level, backward time derivative.
    TimeStepping,
    /// Fixed point `u ← v − Q_g[w(u)]` with central time derivatives.
    Picard,
}

fn default_cap() -> f64 {
    1.0
}

fn default_guard() -> f64 {
    1e3
}

fn default_max_iter() -> usize {
    200
}

fn default_picard_tol() -> f64 {
    PICARD_RESIDUAL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    #[serde(default)]
    pub exec: Exec,
    #[serde(default = "default_mode")]
    pub mode: NonlinearMode,
    /// Bound on `Σ |ε_i| sup |f_i|`.
    #[serde(default = "default_cap")]
    pub amplitude_cap: f64,
    /// Runs abort once `‖u‖_∞` exceeds this.
    #[serde(default = "default_guard")]
    pub divergence_guard: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_picard: usize,
}

fn default_mode() -> NonlinearMode {
    NonlinearMode::TimeStepping
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            exec: Exec::default(),
            mode: default_mode(),
            amplitude_cap: default_cap(),
            divergence_guard: default_guard(),
            picard_tol: default_picard_tol(),
            max_picard: default_max_iter(),
        }
    }
}

impl SolveOptions {
    pub fn with_mode(mut self, mode: NonlinearMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    fn march(&self) -> MarchOptions {
        MarchOptions {
            exec: self.exec,
            guard: self.divergence_guard,
        }
    }
}

/// Per-node matrices of `N0`, `N1`, `M` (row-major, `(d+1)²` entries used).
#[derive(Clone, Debug)]
pub(crate) struct FormMats {
    pub n0: Vec<[f64; 9]>,
    pub n1: Vec<[f64; 9]>,
    pub m: Vec<[f64; 9]>,
}

fn form_table(form: &QuadraticForm, m: &MetricSpec, grid: &Grid, t: f64) -> Vec<[f64; 9]> {
    let n = grid.d + 1;
    let mut out = vec![[0.0; 9]; grid.n_nodes()];
    if form.is_zero() {
        return out;
    }
    let mut x = vec![t; n];
    for (node, slot) in out.iter_mut().enumerate() {
        x[1..].copy_from_slice(&grid.coords(node));
        let w = form.matrix(m, &x);
        for i in 0..n {
            for j in 0..n {
                slot[i * n + j] = w[(i, j)];
            }
        }
    }
    out
}

/// Form matrices, evaluated once when nothing depends on time.
pub(crate) struct FormCache<'a> {
    nl: &'a NonlinearTerm,
    m: &'a MetricSpec,
    grid: &'a Grid,
    fixed: Option<FormMats>,
}

impl<'a> FormCache<'a> {
    pub fn new(nl: &'a NonlinearTerm, m: &'a MetricSpec, grid: &'a Grid) -> Self {
        let time_free = m.is_static()
            && !nl.n0.coefficients_depend_on(0)
            && !nl.n1.coefficients_depend_on(0)
            && !nl.m_form.coefficients_depend_on(0);
        let mut fc = FormCache {
            nl,
            m,
            grid,
            fixed: None,
        };
        if time_free {
            fc.fixed = Some(fc.compute(0.0));
        }
        fc
    }

    fn compute(&self, t: f64) -> FormMats {
        FormMats {
            n0: form_table(&self.nl.n0, self.m, self.grid, t),
            n1: form_table(&self.nl.n1, self.m, self.grid, t),
            m: form_table(&self.nl.m_form, self.m, self.grid, t),
        }
    }

    pub fn at(&self, t: f64) -> Result<Cow<'_, FormMats>, SolverError> {
        Ok(match &self.fixed {
            Some(f) => Cow::Borrowed(f),
            None => Cow::Owned(self.compute(t)),
        })
    }
}

/// `w = N0(∇u, ∇u) + u N1(∇u, ∇u) + u² M(∇u, ∇u)` with `∇u = g^{ij} ∂_j u`.
#[inline]
pub(crate) fn w_value(
    forms: &FormMats,
    ginv: &[f64; 9],
    n: usize,
    node: usize,
    u: f64,
    du: &[f64; 3],
) -> f64 {
    let mut up = [0.0; 3];
    for i in 0..n {
        up[i] = (0..n).map(|j| ginv[i * n + j] * du[j]).sum();
    }
    let quad = |a: &[f64; 9]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i * n + j] * up[i] * up[j];
            }
        }
        s
    };
    quad(&forms.n0[node]) + u * quad(&forms.n1[node]) + u * u * quad(&forms.m[node])
}

/// `Q_g f`: the solution of `□_g u = f` vanishing before the source.
pub fn solve_linear(
    m: &MetricSpec,
    f: &GridField,
    grid: &Grid,
    exec: Exec,
) -> Result<GridField, SolverError> {
    solve_linear_with(m, grid, Forcing::Field(f), exec)
}

/// [`solve_linear`] for any [`Forcing`].
pub fn solve_linear_with(
    m: &MetricSpec,
    grid: &Grid,
    forcing: Forcing<'_>,
    exec: Exec,
) -> Result<GridField, SolverError> {
    march(
        m,
        grid,
        forcing,
        None,
        MarchOptions {
            exec,
            guard: f64::INFINITY,
        },
    )
}

/// Forward solve of `□_g u + w(x, u, ∇_g u) = f` with `f` from `src`.
pub fn solve_nonlinear(
    m: &MetricSpec,
    nl: &NonlinearTerm,
    src: &SourceTerm,
    grid: &Grid,
    opts: &SolveOptions,
) -> Result<GridField, SolverError> {
    nl.check(m)?;
    src.check(m, grid, opts.amplitude_cap)?;
    let forcing = Forcing::Source(src);
    if nl.is_zero() {
        return march(m, grid, forcing, None, opts.march());
    }
    match opts.mode {
        NonlinearMode::TimeStepping => {
            let forms = FormCache::new(nl, m, grid);
            march(m, grid, forcing, Some(&forms), opts.march())
        }
        NonlinearMode::Picard => picard(m, nl, forcing, grid, opts).map(|r| r.0),
    }
}

/// Picard iterates until the relative sup-norm update drops below the
/// tolerance. Returns the field and the residual history.
pub fn picard(
    m: &MetricSpec,
    nl: &NonlinearTerm,
    forcing: Forcing<'_>,
    grid: &Grid,
    opts: &SolveOptions,
) -> Result<(GridField, Vec<f64>), SolverError> {
    let full = grid.with_store_every(1);
    let v = march(m, &full, forcing, None, opts.march())?;
    let forms = FormCache::new(nl, m, &full);
    let mut u = v.clone();
    let mut history = Vec::new();
    for it in 0..opts.max_picard {
        let w = nonlinearity_field(m, &forms, &u)?;
        let q = march(m, &full, Forcing::Field(&w), None, opts.march())?;
        let mut next = v.clone();
        next.axpy(-1.0, &q)?;
        let scale = next.norm_inf();
        let diff = next
            .values
            .iter()
            .zip(&u.values)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let r = if scale > 0.0 { diff / scale } else { diff };
        if !r.is_finite() || scale > opts.divergence_guard {
            return Err(SolverError::DivergenceDetected {
                level: grid.nt,
                norm: scale,
                guard: opts.divergence_guard,
            });
        }
        if let Some(&prev) = history.last() {
            if r > prev && r > opts.picard_tol {
                return Err(SolverError::NonContraction {
                    iteration: it,
                    residual: r,
                    previous: prev,
                });
            }
        }
        history.push(r);
        u = next;
        if r <= opts.picard_tol {
            return Ok((u.subsampled(grid.spec.store_every), history));
        }
    }
    Err(SolverError::NonContraction {
        iteration: opts.max_picard,
        residual: *history.last().unwrap_or(&f64::NAN),
        previous: f64::NAN,
    })
}

/// Pointwise `w(x, u, ∇_g u)` of a complete field, central time differences.
pub(crate) fn nonlinearity_field(
    m: &MetricSpec,
    forms: &FormCache<'_>,
    u: &GridField,
) -> Result<GridField, SolverError> {
    u.require_complete()?;
    let grid = &u.grid;
    let coeffs = CoeffCache::new(m, grid)?;
    let n = grid.d + 1;
    let mut out = GridField::zeros(grid);
    for lvl in 0..=grid.nt {
        let t = grid.time(lvl);
        let c = coeffs.get(t)?;
        let fm = forms.at(t)?;
        for node in 0..grid.n_nodes() {
            let du = covector_at(u, lvl, node);
            let val = w_value(&fm, &c.ginv[node], n, node, u.slot(lvl)[node], &du);
            out.slot_mut(lvl)[node] = val;
        }
    }
    Ok(out)
}

/// `w(x, v, ∇_g v)` for a precomputed field `v` (central time differences).
pub fn evaluate_nonlinearity(
    m: &MetricSpec,
    nl: &NonlinearTerm,
    v: &GridField,
) -> Result<GridField, SolverError> {
    let forms = FormCache::new(nl, m, &v.grid);
    nonlinearity_field(m, &forms, v)
}

/// `C0(x)` and `C1(x)` from the null-form decompositions of `N0`, `N1` on the
/// lattice; one table when nothing depends on time, else one per level.
#[derive(Clone, Debug)]
pub(crate) struct NullCoefficients {
    per_level: bool,
    n_nodes: usize,
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
}

impl NullCoefficients {
    pub fn new(m: &MetricSpec, nl: &NonlinearTerm, grid: &Grid) -> Result<Self, SolverError> {
        let per_level = !(m.is_static()
            && !nl.n0.coefficients_depend_on(0)
            && !nl.n1.coefficients_depend_on(0));
        let n_nodes = grid.n_nodes();
        let levels = if per_level { grid.nt + 1 } else { 1 };
        let mut c0 = vec![0.0; levels * n_nodes];
        let mut c1 = vec![0.0; levels * n_nodes];
        for lvl in 0..levels {
            for node in 0..n_nodes {
                let x = grid.point(lvl, node);
                let k = lvl * n_nodes + node;
                if !nl.n0.is_zero() {
                    c0[k] = decompose_null_form_with(&nl.n0, m, &x, Pivot::Largest, TOL_DEC)?.c0;
                }
                if !nl.n1.is_zero() {
                    c1[k] = decompose_null_form_with(&nl.n1, m, &x, Pivot::Largest, TOL_DEC)?.c0;
                }
            }
        }
        Ok(NullCoefficients {
            per_level,
            n_nodes,
            c0,
            c1,
        })
    }

    #[inline]
    pub fn c0(&self, lvl: usize, node: usize) -> f64 {
        self.c0[self.key(lvl, node)]
    }

    #[inline]
    pub fn c1(&self, lvl: usize, node: usize) -> f64 {
        self.c1[self.key(lvl, node)]
    }

    #[inline]
    fn key(&self, lvl: usize, node: usize) -> usize {
        if self.per_level {
            lvl * self.n_nodes + node
        } else {
            node
        }
    }
}

/// `g(∇_g a, ∇_g b) = g^{ij} ∂_i a ∂_j b` on the lattice.
pub(crate) fn metric_pairing(
    m: &MetricSpec,
    a: &GridField,
    b: &GridField,
) -> Result<GridField, SolverError> {
    let grid = a.grid.clone();
    let coeffs = CoeffCache::new(m, &grid)?;
    let n = grid.d + 1;
    let mut cached: Option<(usize, Cow<'_, super::grid::Coeffs>)> = None;
    let mut err = None;
    let out = contract_gradients(a, b, |lvl, node, da, db| {
        if cached.as_ref().map(|c| c.0) != Some(lvl) {
            match coeffs.get(grid.time(lvl)) {
                Ok(c) => cached = Some((lvl, c)),
                Err(e) => {
                    err = Some(e);
                    return 0.0;
                }
            }
        }
        let gi = &cached.as_ref().unwrap().1.ginv[node];
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += gi[i * n + j] * da[i] * db[j];
            }
        }
        s
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// `‖u₂(T)‖²` over the interior, where `u₂ = −Q_g[N0(∇_g v, ∇_g v)]` is the
/// quadratic self-interaction of `v = Q_g f`.
pub fn self_interaction_energy(
    m: &MetricSpec,
    n0: &QuadraticForm,
    src: &SourceTerm,
    grid: &Grid,
    exec: Exec,
) -> Result<f64, SolverError> {
    let full = grid.with_store_every(1);
    let v = solve_linear_with(m, &full, Forcing::Source(src), exec)?;
    let nl = NonlinearTerm::new(n0.clone(), QuadraticForm::zero(), QuadraticForm::zero());
    let w = evaluate_nonlinearity(m, &nl, &v)?;
    let u2 = solve_linear(m, &w, &full, exec)?;
    let k = u2.levels.len() - 1;
    Ok(u2.interior_l2_slot(k).powi(2))
}
