//! Compactly supported sources and the manufactured solution used for
//! convergence studies.

use serde::{Deserialize, Serialize};

use super::{Grid, GridField, SolverError};
use crate::geometry::{dual_metric, MetricSpec};

const BUMP_POWER: i32 = 6;

/// `(1 − s)^6` for `s < 1`, zero otherwise (`s` is a squared radius).
pub fn bump(s: f64) -> f64 {
    if s < 1.0 {
        (1.0 - s).powi(BUMP_POWER)
    } else {
        0.0
    }
}

fn bump_d1(s: f64) -> f64 {
    if s < 1.0 {
        -(BUMP_POWER as f64) * (1.0 - s).powi(BUMP_POWER - 1)
    } else {
        0.0
    }
}

fn bump_d2(s: f64) -> f64 {
    if s < 1.0 {
        (BUMP_POWER * (BUMP_POWER - 1)) as f64 * (1.0 - s).powi(BUMP_POWER - 2)
    } else {
        0.0
    }
}

/// Smooth monotone ramp from 0 (`s ≤ 0`) to 1 (`s ≥ 1`) with derivative
/// proportional to `(s(1−s))^6`. Returns value, first and second derivative.
fn ramp(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    // ∫_0^1 (σ(1−σ))^6 dσ = 6!·6!/13!.
    let norm = 518_400.0 / 6_227_020_800.0;
    let mut integral = 0.0;
    let mut binom = 1.0;
    for k in 0..=6 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        integral += sign * binom * s.powi(7 + k) / (7 + k) as f64;
        binom = binom * (6 - k) as f64 / (k + 1) as f64;
    }
    let q = s * (1.0 - s);
    (
        integral / norm,
        q.powi(6) / norm,
        6.0 * q.powi(5) * (1.0 - 2.0 * s) / norm,
    )
}

/// Unit-amplitude source profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pulse {
    /// `bump(Σ_k ((y_k − c_k)/r_k)²)` over space-time `y = (t, x)`, optionally
    /// multiplied by a narrow factor `bump((n·(y − c)/thickness)²)` across the
    /// hyperplane through `c` with normal `n`.
    Bump {
        center: Vec<f64>,
        radii: Vec<f64>,
        #[serde(default)]
        normal: Option<Vec<f64>>,
        #[serde(default)]
        thickness: Option<f64>,
    },
    /// Forcing that switches on a one-way pulse `φ(x − x0 − dir·(t − t_on))`
    /// over `[t_on, t_on + ramp]`; afterwards it emits nothing. Exact for
    /// 1+1 Minkowski only.
    Progressing {
        t_on: f64,
        ramp: f64,
        x0: f64,
        width: f64,
        direction: f64,
    },
}

impl Pulse {
    pub fn bump(center: Vec<f64>, radii: Vec<f64>) -> Self {
        Pulse::Bump {
            center,
            radii,
            normal: None,
            thickness: None,
        }
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            Pulse::Bump {
                center,
                radii,
                normal,
                thickness,
            } => {
                let s: f64 = y
                    .iter()
                    .zip(center)
                    .zip(radii)
                    .map(|((yk, ck), rk)| ((yk - ck) / rk).powi(2))
                    .sum();
                let mut v = bump(s);
                if v != 0.0 {
                    if let (Some(n), Some(h)) = (normal, thickness) {
                        let nn = n.iter().map(|a| a * a).sum::<f64>().sqrt();
                        let dist: f64 = y
                            .iter()
                            .zip(center)
                            .zip(n)
                            .map(|((yk, ck), nk)| (yk - ck) * nk)
                            .sum::<f64>()
                            / nn;
                        v *= bump((dist / h).powi(2));
                    }
                }
                v
            }
            Pulse::Progressing {
                t_on,
                ramp: tau,
                x0,
                width,
                direction,
            } => {
                let (_, c1, c2) = ramp((y[0] - t_on) / tau);
                if c1 == 0.0 && c2 == 0.0 {
                    return 0.0;
                }
                let xi = y[1] - x0 - direction * (y[0] - t_on);
                let s = (xi / width).powi(2);
                let phi = bump(s);
                let dphi = bump_d1(s) * 2.0 * xi / (width * width);
                // □(χ φ) with χ(t) = R((t − t_on)/τ).
                -(c2 / (tau * tau)) * phi + 2.0 * direction * (c1 / tau) * dphi
            }
        }
    }

    /// The wave a progressing pulse switches on (zero for bumps).
    pub fn progressing_target(&self, y: &[f64]) -> Option<f64> {
        match self {
            Pulse::Progressing {
                t_on,
                ramp: tau,
                x0,
                width,
                direction,
            } => {
                let (c0, _, _) = ramp((y[0] - t_on) / tau);
                let xi = y[1] - x0 - direction * (y[0] - t_on);
                Some(c0 * bump((xi / width).powi(2)))
            }
            Pulse::Bump { .. } => None,
        }
    }

    /// Space-time bounding box `(lo, hi)` of the support.
    pub fn support(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Pulse::Bump { center, radii, .. } => (
                center.iter().zip(radii).map(|(c, r)| c - r.abs()).collect(),
                center.iter().zip(radii).map(|(c, r)| c + r.abs()).collect(),
            ),
            Pulse::Progressing {
                t_on,
                ramp,
                x0,
                width,
                direction,
            } => {
                let a = x0 - width;
                let b = x0 + width;
                let shift = direction * ramp;
                (
                    vec![*t_on, a.min(a + shift)],
                    vec![t_on + ramp, b.max(b + shift)],
                )
            }
        }
    }

    /// Upper bound on `sup |f|`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Pulse::Bump { .. } => 1.0,
            Pulse::Progressing { ramp: tau, width, .. } => {
                let n = 2001;
                let (mut r1, mut r2, mut p1) = (0.0f64, 0.0f64, 0.0f64);
                for i in 0..=n {
                    let s = i as f64 / n as f64;
                    let (_, a, b) = ramp(s);
                    r1 = r1.max(a.abs());
                    r2 = r2.max(b.abs());
                    let xi = 2.0 * s - 1.0;
                    p1 = p1.max((bump_d1(xi * xi) * 2.0 * xi).abs());
                }
                r2 / (tau * tau) + 2.0 * r1 / tau * p1 / width
            }
        }
    }

    fn check(&self, dim: usize) -> Result<(), SolverError> {
        match self {
            Pulse::Bump {
                center,
                radii,
                normal,
                thickness,
            } => {
                if center.len() != dim || radii.len() != dim {
                    return Err(SolverError::InvalidSource(format!(
                        "bump center/radii need {dim} entries (t first)"
                    )));
                }
                if radii.iter().any(|r| !(*r > 0.0)) {
                    return Err(SolverError::InvalidSource("bump radii must be positive".into()));
                }
                match (normal, thickness) {
                    (None, None) => {}
                    (Some(n), Some(h)) if n.len() == dim && *h > 0.0 => {
                        if n.iter().all(|v| *v == 0.0) {
                            return Err(SolverError::InvalidSource("zero normal".into()));
                        }
                    }
                    _ => {
                        return Err(SolverError::InvalidSource(
                            "normal and thickness go together".into(),
                        ))
                    }
                }
                Ok(())
            }
            Pulse::Progressing {
                ramp,
                width,
                direction,
                ..
            } => {
                if dim != 2 {
                    return Err(SolverError::InvalidSource(
                        "progressing pulses need one spatial dimension".into(),
                    ));
                }
                if !(*ramp > 0.0) || !(*width > 0.0) || direction.abs() != 1.0 {
                    return Err(SolverError::InvalidSource(
                        "progressing pulse needs ramp, width > 0 and direction ±1".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceComponent {
    pub amplitude: f64,
    pub profile: Pulse,
}

/// `f = Σ ε_i f_i` with an optional space-time box `V` that must contain
/// every support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceTerm {
    pub components: Vec<SourceComponent>,
    #[serde(default)]
    pub region: Option<SpaceTimeBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceTimeBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SpaceTimeBox {
    pub fn contains_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        self.lo.iter().zip(lo).all(|(a, b)| a <= b) && self.hi.iter().zip(hi).all(|(a, b)| b <= a)
    }
}

impl SourceTerm {
    pub fn new(components: Vec<SourceComponent>) -> Self {
        SourceTerm {
            components,
            region: None,
        }
    }

    pub fn single(amplitude: f64, profile: Pulse) -> Self {
        Self::new(vec![SourceComponent { amplitude, profile }])
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Same profiles, new amplitudes.
    pub fn with_amplitudes(&self, eps: &[f64]) -> SourceTerm {
        let mut out = self.clone();
        for (c, e) in out.components.iter_mut().zip(eps) {
            c.amplitude = *e;
        }
        out
    }

    /// Only component `i`, with unit amplitude.
    pub fn unit_component(&self, i: usize) -> SourceTerm {
        SourceTerm {
            components: vec![SourceComponent {
                amplitude: 1.0,
                profile: self.components[i].profile.clone(),
            }],
            region: self.region.clone(),
        }
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.components
            .iter()
            .filter(|c| c.amplitude != 0.0)
            .map(|c| c.amplitude * c.profile.value(y))
            .sum()
    }

    /// `Σ |ε_i| · sup |f_i|`.
    pub fn size(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.amplitude.abs() * c.profile.sup_bound())
            .sum()
    }

    /// Structural checks against a grid: shapes, the amplitude cap, supports
    /// inside `V`, `V` inside the interior, and a quiet start.
    pub fn check(&self, m: &MetricSpec, grid: &Grid, cap: f64) -> Result<(), SolverError> {
        let dim = grid.d + 1;
        for c in &self.components {
            c.profile.check(dim)?;
            if matches!(c.profile, Pulse::Progressing { .. })
                && !matches!(m, MetricSpec::Minkowski { .. })
            {
                return Err(SolverError::InvalidSource(
                    "progressing pulses are exact only on Minkowski space".into(),
                ));
            }
        }
        let size = self.size();
        if size > cap {
            return Err(SolverError::AmplitudeGuard { total: size, cap });
        }
        let collar = grid.spec.collar.max(1) as f64;
        let mut inner_lo = vec![2.0 * grid.dt];
        let mut inner_hi = vec![grid.spec.t_end];
        for k in 0..grid.d {
            inner_lo.push(grid.spec.lo[k] + collar * grid.dx[k]);
            inner_hi.push(grid.spec.hi[k] - collar * grid.dx[k]);
        }
        let interior = SpaceTimeBox {
            lo: inner_lo,
            hi: inner_hi,
        };
        if let Some(v) = &self.region {
            if v.lo.len() != dim || v.hi.len() != dim {
                return Err(SolverError::InvalidSource(format!(
                    "region V needs {dim} coordinates"
                )));
            }
            if !interior.contains_box(&v.lo, &v.hi) {
                return Err(SolverError::InvalidSource(
                    "region V must lie inside the grid interior".into(),
                ));
            }
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.amplitude == 0.0 {
                continue;
            }
            let (lo, hi) = c.profile.support();
            if lo[0] < 2.0 * grid.dt {
                return Err(SolverError::SourceTooEarly {
                    index: i,
                    start: lo[0],
                    min: 2.0 * grid.dt,
                });
            }
            let region = self.region.as_ref().unwrap_or(&interior);
            if !region.contains_box(&lo, &hi) {
                return Err(SolverError::SupportOutsideV { index: i });
            }
        }
        Ok(())
    }

    pub fn sample(&self, grid: &Grid) -> GridField {
        GridField::from_fn(grid, |y| self.value(y))
    }
}

/// Right-hand side handed to the time stepper.
#[derive(Clone, Copy)]
pub enum Forcing<'a> {
    Zero,
    Field(&'a GridField),
    Source(&'a SourceTerm),
    Function(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

impl<'a> Forcing<'a> {
    /// Fills `out` with the forcing at time level `level`.
    pub(crate) fn fill(&self, grid: &Grid, level: usize, out: &mut [f64]) -> Result<(), SolverError> {
        match self {
            Forcing::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Forcing::Field(f) => {
                if !f.grid.same_lattice(grid) {
                    return Err(SolverError::GridMismatch);
                }
                let src = f.at_level(level).ok_or(SolverError::IncompleteField {
                    stored: f.levels.len(),
                    needed: grid.nt + 1,
                })?;
                out.copy_from_slice(src);
            }
            Forcing::Source(s) => {
                for (node, v) in out.iter_mut().enumerate() {
                    *v = s.value(&grid.point(level, node));
                }
            }
            Forcing::Function(f) => {
                for (node, v) in out.iter_mut().enumerate() {
                    *v = f(&grid.point(level, node));
                }
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Zero => true,
            Forcing::Source(s) => s.components.iter().all(|c| c.amplitude == 0.0),
            _ => false,
        }
    }
}

/// Manufactured solution `u = A · bump(|y − c|²/R²)` over space-time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manufactured {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl Manufactured {
    pub fn value(&self, y: &[f64]) -> f64 {
        self.amplitude * bump(self.s(y))
    }

    fn s(&self, y: &[f64]) -> f64 {
        y.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            / (self.radius * self.radius)
    }

    /// Exact `□_g u` via
    /// `g^{ij}∂_i∂_j u + (∂_i g^{ij}) ∂_j u + g^{ij} ∂_j u ∂_i ln √|g|`.
    pub fn box_value(&self, m: &MetricSpec, y: &[f64]) -> Result<f64, SolverError> {
        let s = self.s(y);
        if s >= 1.0 {
            return Ok(0.0);
        }
        let n = y.len();
        let r2 = self.radius * self.radius;
        let ds: Vec<f64> = (0..n).map(|k| 2.0 * (y[k] - self.center[k]) / r2).collect();
        let (b1, b2) = (bump_d1(s), bump_d2(s));
        let a = self.amplitude;
        let du: Vec<f64> = ds.iter().map(|d| a * b1 * d).collect();
        let ddu = |i: usize, j: usize| {
            a * (b2 * ds[i] * ds[j] + if i == j { b1 * 2.0 / r2 } else { 0.0 })
        };
        let gi = dual_metric(m, y)?;
        let dg = m.metric_derivatives(y);
        let mut out = 0.0;
        for i in 0..n {
            for j in 0..n {
                out += gi[(i, j)] * ddu(i, j);
            }
        }
        for i in 0..n {
            // ∂_i g^{ij} = −g^{ia} ∂_i g_ab g^{bj}; ∂_i ln√|g| = ½ g^{ab} ∂_i g_ab.
            let dgi = -(&gi * &dg[i] * &gi);
            let dlog = 0.5 * (&gi * &dg[i]).trace();
            for j in 0..n {
                out += dgi[(i, j)] * du[j] + gi[(i, j)] * du[j] * dlog;
            }
        }
        Ok(out)
    }
}
