//! Space-time lattice and pointwise metric coefficients.

use std::borrow::Cow;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::geometry::{dual_metric, MetricSpec};

/// Largest admissible Courant ratio `Δt · c · √d / Δx`.
pub const CFL_MAX: f64 = 0.9;

fn default_cfl() -> f64 {
    0.5
}

fn default_store_every() -> usize {
    1
}

/// User-facing grid description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_end: f64,
    /// Spatial box corners, one entry per spatial axis.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Cells per spatial axis; nodes are `cells + 1`.
    pub cells: Vec<usize>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Fixed time step; checked against the Courant limit instead of derived.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Width of the damping collar in cells (excluded from every report).
    #[serde(default)]
    pub collar: usize,
    /// Peak damping rate in the collar; defaults to `6 c / width`.
    #[serde(default)]
    pub sponge: Option<f64>,
    #[serde(default = "default_store_every")]
    pub store_every: usize,
}

impl GridSpec {
    pub fn new_1d(t_end: f64, lo: f64, hi: f64, cells: usize) -> Self {
        GridSpec {
            t_end,
            lo: vec![lo],
            hi: vec![hi],
            cells: vec![cells],
            cfl: default_cfl(),
            dt: None,
            collar: 0,
            sponge: None,
            store_every: 1,
        }
    }

    pub fn new_2d(t_end: f64, lo: [f64; 2], hi: [f64; 2], cells: [usize; 2]) -> Self {
        GridSpec {
            t_end,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            cells: cells.to_vec(),
            cfl: default_cfl(),
            dt: None,
            collar: 0,
            sponge: None,
            store_every: 1,
        }
    }

    pub fn with_collar(mut self, collar: usize) -> Self {
        self.collar = collar;
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }

    pub fn with_store_every(mut self, k: usize) -> Self {
        self.store_every = k;
        self
    }
}

/// A resolved lattice: node counts, steps and the Courant data behind them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub spec: GridSpec,
    pub d: usize,
    pub dx: Vec<f64>,
    pub dt: f64,
    /// Number of time steps; levels run from 0 to `nt`.
    pub nt: usize,
    /// Maximum characteristic speed sampled over the box.
    pub speed: f64,
    pub courant: f64,
    pub sponge: f64,
}

impl Grid {
    pub fn new(m: &MetricSpec, spec: &GridSpec) -> Result<Grid, SolverError> {
        let d = spec.cells.len();
        if !(1..=2).contains(&d) {
            return Err(SolverError::InvalidGrid(format!(
                "only 1 or 2 spatial dimensions are supported (got {d})"
            )));
        }
        if m.spatial_dim() != d {
            return Err(SolverError::InvalidGrid(format!(
                "metric has {} spatial dimensions, grid has {d}",
                m.spatial_dim()
            )));
        }
        m.check()?;
        if spec.lo.len() != d || spec.hi.len() != d {
            return Err(SolverError::InvalidGrid("lo/hi must have one entry per axis".into()));
        }
        if !(spec.t_end > 0.0) || spec.t_end.is_infinite() {
            return Err(SolverError::InvalidGrid("t_end must be positive".into()));
        }
        for k in 0..d {
            if !(spec.hi[k] > spec.lo[k]) {
                return Err(SolverError::InvalidGrid(format!("empty interval on axis {k}")));
            }
            if spec.cells[k] < 4 {
                return Err(SolverError::InvalidGrid("need at least 4 cells per axis".into()));
            }
            if 2 * spec.collar + 2 >= spec.cells[k] {
                return Err(SolverError::InvalidGrid("collar leaves no interior".into()));
            }
        }
        if spec.store_every == 0 {
            return Err(SolverError::InvalidGrid("store_every must be ≥ 1".into()));
        }
        if !(spec.cfl > 0.0) || spec.cfl > CFL_MAX {
            return Err(SolverError::CourantViolation {
                ratio: spec.cfl,
                max: CFL_MAX,
            });
        }
        let dx: Vec<f64> = (0..d)
            .map(|k| (spec.hi[k] - spec.lo[k]) / spec.cells[k] as f64)
            .collect();
        let hmin = dx.iter().cloned().fold(f64::INFINITY, f64::min);
        let speed = max_speed(m, spec, &dx)?;
        let limit = hmin / (speed * (d as f64).sqrt());
        let (dt, nt) = match spec.dt {
            Some(dt0) => {
                if !(dt0 > 0.0) {
                    return Err(SolverError::InvalidGrid("dt must be positive".into()));
                }
                let nt = (spec.t_end / dt0).round().max(1.0) as usize;
                (spec.t_end / nt as f64, nt)
            }
            None => {
                let nt = (spec.t_end / (spec.cfl * limit)).ceil().max(1.0) as usize;
                (spec.t_end / nt as f64, nt)
            }
        };
        let courant = dt / limit;
        if courant > CFL_MAX * (1.0 + 1e-12) {
            return Err(SolverError::CourantViolation {
                ratio: courant,
                max: CFL_MAX,
            });
        }
        let sponge = match spec.sponge {
            Some(s) if s >= 0.0 => s,
            Some(_) => return Err(SolverError::InvalidGrid("sponge must be ≥ 0".into())),
            None if spec.collar > 0 => 6.0 * speed / (spec.collar as f64 * hmin),
            None => 0.0,
        };
        Ok(Grid {
            spec: spec.clone(),
            d,
            dx,
            dt,
            nt,
            speed,
            courant,
            sponge,
        })
    }

    /// The same box with every axis and the time step refined `2^k` times.
    pub fn refined(&self, m: &MetricSpec, k: u32) -> Result<Grid, SolverError> {
        let f = 1usize << k;
        let mut spec = self.spec.clone();
        spec.cells = spec.cells.iter().map(|c| c * f).collect();
        spec.collar *= f;
        spec.dt = Some(self.dt / f as f64);
        spec.sponge = Some(self.sponge);
        Grid::new(m, &spec)
    }

    pub fn with_store_every(&self, k: usize) -> Grid {
        let mut g = self.clone();
        g.spec.store_every = k.max(1);
        g
    }

    pub fn cells(&self) -> &[usize] {
        &self.spec.cells
    }

    /// Nodes per axis.
    pub fn shape(&self) -> Vec<usize> {
        self.spec.cells.iter().map(|c| c + 1).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt
    }

    /// Multi-index of a flat node index (last axis fastest).
    pub fn index(&self, node: usize) -> [usize; 2] {
        if self.d == 1 {
            [node, 0]
        } else {
            let ny = self.spec.cells[1] + 1;
            [node / ny, node % ny]
        }
    }

    pub fn node(&self, idx: [usize; 2]) -> usize {
        if self.d == 1 {
            idx[0]
        } else {
            idx[0] * (self.spec.cells[1] + 1) + idx[1]
        }
    }

    /// Spatial coordinates of a node.
    pub fn coords(&self, node: usize) -> Vec<f64> {
        let idx = self.index(node);
        (0..self.d)
            .map(|k| self.spec.lo[k] + idx[k] as f64 * self.dx[k])
            .collect()
    }

    /// Space-time point `(t, x)` of a node at a level.
    pub fn point(&self, level: usize, node: usize) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.d + 1);
        p.push(self.time(level));
        p.extend(self.coords(node));
        p
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.index(node);
        (0..self.d).any(|k| idx[k] == 0 || idx[k] == self.spec.cells[k])
    }

    /// Outside the damping collar (and off the boundary).
    pub fn is_interior(&self, node: usize) -> bool {
        let idx = self.index(node);
        let c = self.spec.collar.max(1);
        (0..self.d).all(|k| idx[k] >= c && idx[k] + c <= self.spec.cells[k])
    }

    /// Damping rate at a node: quadratic ramp across the collar.
    pub fn damping(&self, node: usize) -> f64 {
        let c = self.spec.collar;
        if c == 0 || self.sponge == 0.0 {
            return 0.0;
        }
        let idx = self.index(node);
        let mut depth: f64 = 0.0;
        for k in 0..self.d {
            let from_edge = idx[k].min(self.spec.cells[k] - idx[k]);
            if from_edge < c {
                depth = depth.max((c - from_edge) as f64 / c as f64);
            }
        }
        self.sponge * depth * depth
    }

    /// Levels kept by a solver writing this grid.
    pub fn stored_levels(&self) -> Vec<usize> {
        let k = self.spec.store_every;
        let mut v: Vec<usize> = (0..=self.nt).step_by(k).collect();
        if *v.last().unwrap() != self.nt {
            v.push(self.nt);
        }
        v
    }

    /// Whether two grids share nodes and time levels.
    pub fn same_lattice(&self, other: &Grid) -> bool {
        self.spec.cells == other.spec.cells
            && self.spec.lo == other.spec.lo
            && self.spec.hi == other.spec.hi
            && self.nt == other.nt
            && (self.dt - other.dt).abs() <= 1e-14 * self.dt
    }
}

fn max_speed(m: &MetricSpec, spec: &GridSpec, dx: &[f64]) -> Result<f64, SolverError> {
    let d = dx.len();
    let times: Vec<f64> = if m.is_static() {
        vec![0.0]
    } else {
        (0..=8).map(|k| spec.t_end * k as f64 / 8.0).collect()
    };
    // Coefficients are smooth on the scale of the box, so a coarse lattice
    // (plus the corners) bounds the speed well enough for a Courant check.
    let samples = 33usize;
    let mut speed: f64 = 0.0;
    let mut x = vec![0.0; d + 1];
    let per_axis: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let n = samples.min(spec.cells[k] + 1);
            (0..n)
                .map(|i| spec.lo[k] + (spec.hi[k] - spec.lo[k]) * i as f64 / (n - 1) as f64)
                .collect()
        })
        .collect();
    let total: usize = per_axis.iter().map(|a| a.len()).product();
    for &t in &times {
        x[0] = t;
        for flat in 0..total {
            let mut r = flat;
            for k in (0..d).rev() {
                let n = per_axis[k].len();
                x[k + 1] = per_axis[k][r % n];
                r /= n;
            }
            let g = m.metric(&x);
            check_time_orthogonal(&g)?;
            let ginv = dual_metric(m, &x)?;
            let g00 = ginv[(0, 0)];
            if !(g00 < 0.0) {
                return Err(SolverError::UnsupportedMetric(
                    "g^00 must be negative (t must be a time function)".into(),
                ));
            }
            let b = DMatrix::from_fn(d, d, |r, c| ginv[(r + 1, c + 1)]);
            let lmax = SymmetricEigen::new(b).eigenvalues.max();
            speed = speed.max((lmax / -g00).sqrt());
        }
    }
    Ok(speed)
}

fn check_time_orthogonal(g: &DMatrix<f64>) -> Result<(), SolverError> {
    let scale = g.amax();
    for a in 1..g.nrows() {
        if g[(0, a)].abs() > 1e-12 * scale {
            return Err(SolverError::UnsupportedMetric(format!(
                "solver requires g_0a = 0 (found g_0{a} = {:e})",
                g[(0, a)]
            )));
        }
    }
    Ok(())
}

/// Pointwise coefficients of the divergence-form operator at one time.
///
/// With `g_{0a} = 0`, `√|g| □_g u = −∂_t(α ∂_t u) + ∂_a(β^{ab} ∂_b u)` where
/// `α = √|g| (−g^{00})` and `β^{ab} = √|g| g^{ab}`.
#[derive(Clone, Debug)]
pub(crate) struct Coeffs {
    pub sqrt_g: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Row-major `d×d` blocks of `β`.
    pub beta: Vec<[f64; 4]>,
    /// Row-major `(d+1)×(d+1)` blocks of `g^{ij}`.
    pub ginv: Vec<[f64; 9]>,
    pub cross: bool,
}

impl Coeffs {
    pub fn at(m: &MetricSpec, grid: &Grid, t: f64) -> Result<Coeffs, SolverError> {
        let n = grid.n_nodes();
        let d = grid.d;
        let mut c = Coeffs {
            sqrt_g: vec![0.0; n],
            alpha: vec![0.0; n],
            beta: vec![[0.0; 4]; n],
            ginv: vec![[0.0; 9]; n],
            cross: false,
        };
        let mut x = vec![0.0; d + 1];
        x[0] = t;
        for node in 0..n {
            for (k, v) in grid.coords(node).into_iter().enumerate() {
                x[k + 1] = v;
            }
            let g = m.metric(&x);
            check_time_orthogonal(&g)?;
            let det = g.determinant();
            let gi = dual_metric(m, &x)?;
            let s = (-det).abs().sqrt();
            c.sqrt_g[node] = s;
            c.alpha[node] = -s * gi[(0, 0)];
            for a in 0..d {
                for b in 0..d {
                    c.beta[node][a * d + b] = s * gi[(a + 1, b + 1)];
                }
            }
            for i in 0..=d {
                for j in 0..=d {
                    c.ginv[node][i * (d + 1) + j] = gi[(i, j)];
                }
            }
            if d == 2 && c.beta[node][1] != 0.0 {
                c.cross = true;
            }
        }
        Ok(c)
    }
}

/// Coefficient provider: computed once for static metrics, on demand
/// otherwise.
pub(crate) enum CoeffCache<'a> {
    Static(Coeffs),
    Dynamic(&'a MetricSpec, &'a Grid),
}

impl<'a> CoeffCache<'a> {
    pub fn new(m: &'a MetricSpec, grid: &'a Grid) -> Result<Self, SolverError> {
        if m.is_static() {
            Ok(CoeffCache::Static(Coeffs::at(m, grid, 0.0)?))
        } else {
            Ok(CoeffCache::Dynamic(m, grid))
        }
    }

    pub fn get(&self, t: f64) -> Result<Cow<'_, Coeffs>, SolverError> {
        match self {
            CoeffCache::Static(c) => Ok(Cow::Borrowed(c)),
            CoeffCache::Dynamic(m, g) => Ok(Cow::Owned(Coeffs::at(m, g, t)?)),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, CoeffCache::Static(_))
    }
}
