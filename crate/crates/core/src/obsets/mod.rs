//! Light observation sets and earliest light observation sets.
//!
//! For a source point `q` and an open region `V`, the light observation set
//! `𝒫_V(q)` is the part of `V` on the boundary of the causal future of `q`;
//! the earliest set `ℰ_V(q)` keeps the first arrivals. First arrivals are
//! found along an observer foliation of `V` (coordinate-time lines for a box,
//! spatial translates of the central geodesic for a tube) and then filtered
//! so that no kept point lies strictly in the chronological future of another.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    first_conjugate_time, geodesic_trace_in, null_completion, quad, sphere_lattice, trace_until,
    CausalSearch, CoordBox, GeodesicPath, GeometryError, LightCone, MetricSpec, Point, Tangent,
};
use crate::Exec;


#[derive(Debug, Error)]
pub enum ObsError {
    #[error("earliest observation set of source {index} is empty")]
    EmptySet { index: usize },
    #[error("invalid observation region: {0}")]
    InvalidRegion(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shape of the observation region `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionShape {
    /// Open space-time box; corners list `t` first.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Points within spatial coordinate distance `radius` of the timelike
    /// geodesic `μ(s)`, `μ(0) = origin`, `μ'(0) = velocity`, `s ∈ (s_minus, s_plus)`.
    Tube {
        origin: Vec<f64>,
        velocity: Vec<f64>,
        s_minus: f64,
        s_plus: f64,
        radius: f64,
    },
}

fn default_observers() -> usize {
    9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRegion {
    pub shape: RegionShape,
    /// Observer curves per spatial axis.
    #[serde(default = "default_observers")]
    pub observers: usize,
}

impl ObservationRegion {
    /// Box of half-width 0.25 around the spatial point `(1, 0, …)`, for
    /// times in `(0.25, 2)`.
    pub fn standard(d: usize) -> Self {
        let mut lo = vec![0.25, 0.75];
        let mut hi = vec![2.0, 1.25];
        for _ in 1..d {
            lo.push(-0.25);
            hi.push(0.25);
        }
        ObservationRegion {
            shape: RegionShape::Box { lo, hi },
            observers: default_observers(),
        }
    }

    /// Tube of `radius` around the static observer at spatial `x`, for
    /// coordinate times in `(t0, t1)`.
    pub fn static_tube(x: &[f64], t0: f64, t1: f64, radius: f64) -> Self {
        let mut origin = vec![t0];
        origin.extend_from_slice(x);
        let mut velocity = vec![0.0; x.len() + 1];
        velocity[0] = 1.0;
        ObservationRegion {
            shape: RegionShape::Tube {
                origin,
                velocity,
                s_minus: 0.0,
                s_plus: t1 - t0,
                radius,
            },
            observers: default_observers(),
        }
    }

    pub fn with_observers(mut self, n: usize) -> Self {
        self.observers = n;
        self
    }

    /// Validates the region against `m` and traces the central geodesic.
    pub fn resolve(&self, m: &MetricSpec) -> Result<Region, ObsError> {
        let n = m.dim();
        let d = n - 1;
        if self.observers == 0 {
            return Err(ObsError::InvalidRegion("need at least one observer per axis".into()));
        }
        let per_axis = |lo: f64, hi: f64| -> Vec<f64> {
            let k = self.observers;
            (0..k)
                .map(|i| lo + (i as f64 + 0.5) * (hi - lo) / k as f64)
                .collect()
        };
        let lattice = |axes: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            axes.into_iter().fold(vec![Vec::new()], |acc, axis| {
                acc.into_iter()
                    .flat_map(|p| {
                        axis.iter().map(move |&c| {
                            let mut q = p.clone();
                            q.push(c);
                            q
                        })
                    })
                    .collect()
            })
        };
        match &self.shape {
            RegionShape::Box { lo, hi } => {
                check_len(lo.len(), n)?;
                check_len(hi.len(), n)?;
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(ObsError::InvalidRegion("box corners must satisfy lo < hi".into()));
                }
                let domain = CoordBox::natural(m);
                if !domain.contains(lo) || !domain.contains(hi) {
                    return Err(ObsError::InvalidRegion("box leaves the coordinate chart".into()));
                }
                let offsets = lattice((1..n).map(|a| per_axis(lo[a], hi[a])).collect());
                Ok(Region {
                    d,
                    t_range: (lo[0], hi[0]),
                    central: None,
                    lo: lo.clone(),
                    hi: hi.clone(),
                    radius: 0.0,
                    offsets,
                })
            }
            RegionShape::Tube {
                origin,
                velocity,
                s_minus,
                s_plus,
                radius,
            } => {
                check_len(origin.len(), n)?;
                check_len(velocity.len(), n)?;
                if !(0.0 <= *s_minus && s_minus < s_plus) || !(*radius > 0.0) {
                    return Err(ObsError::InvalidRegion(
                        "tube needs 0 ≤ s_minus < s_plus and a positive radius".into(),
                    ));
                }
                let v = DVector::from_column_slice(velocity);
                if !(quad(&m.metric(origin), &v, &v) < 0.0) || velocity[0] <= 0.0 {
                    return Err(ObsError::InvalidRegion(
                        "tube axis must be future-pointing timelike".into(),
                    ));
                }
                let h = (s_plus / 200.0).min(1e-2);
                let path = geodesic_trace_in(
                    m,
                    &Point::new(origin),
                    &Tangent(v),
                    *s_plus,
                    h,
                    &CoordBox::natural(m),
                )?;
                let t_lo = time_at_parameter(&path, *s_minus);
                let t_hi = path.end().x[0];
                let offsets: Vec<Vec<f64>> = lattice((0..d).map(|_| per_axis(-radius, *radius)).collect())
                    .into_iter()
                    .filter(|o| norm(o) < *radius)
                    .collect();
                Ok(Region {
                    d,
                    t_range: (t_lo, t_hi),
                    central: Some(path),
                    lo: Vec::new(),
                    hi: Vec::new(),
                    radius: *radius,
                    offsets,
                })
            }
        }
    }
}

fn check_len(got: usize, expected: usize) -> Result<(), ObsError> {
    if got != expected {
        return Err(ObsError::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Coordinate time at affine parameter `s`, linear between samples.
fn time_at_parameter(path: &GeodesicPath, s: f64) -> f64 {
    let k = path
        .samples
        .windows(2)
        .position(|w| w[1].s >= s)
        .unwrap_or(path.samples.len().saturating_sub(2));
    let (a, b) = (&path.samples[k], &path.samples[(k + 1).min(path.samples.len() - 1)]);
    if b.s > a.s {
        a.x[0] + (s - a.s) / (b.s - a.s) * (b.x[0] - a.x[0])
    } else {
        a.x[0]
    }
}

/// A validated observation region with its observer foliation.
#[derive(Clone, Debug)]
pub struct Region {
    pub d: usize,
    /// Open time interval covered by `V`.
    pub t_range: (f64, f64),
    central: Option<GeodesicPath>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    radius: f64,
    /// Spatial offsets labelling the observers.
    pub offsets: Vec<Vec<f64>>,
}

impl Region {
    pub fn n_observers(&self) -> usize {
        self.offsets.len()
    }

    /// Position of observer `k` at coordinate time `t`.
    pub fn observer_at(&self, k: usize, t: f64) -> Option<Vec<f64>> {
        let mut y = vec![t];
        match &self.central {
            None => y.extend(&self.offsets[k]),
            Some(path) => {
                let (c, _) = path.at_time(t)?;
                y.extend(c[1..].iter().zip(&self.offsets[k]).map(|(a, b)| a + b));
            }
        }
        Some(y)
    }

    /// Membership in the open region.
    pub fn contains(&self, y: &[f64]) -> bool {
        if y.len() != self.d + 1 {
            return false;
        }
        match &self.central {
            None => y
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| a < v && v < b),
            Some(path) => {
                if !(self.t_range.0 < y[0] && y[0] < self.t_range.1) {
                    return false;
                }
                match path.at_time(y[0]) {
                    Some((c, _)) => dist(&c[1..], &y[1..]) < self.radius,
                    None => false,
                }
            }
        }
    }
}

/// Sampling knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsConfig {
    /// Ray directions from the source.
    pub n_dirs: usize,
    /// Samples per ray (light sets) or per observer scan (earliest sets).
    pub samples: usize,
    /// Bisection steps refining each first arrival.
    pub bisection: usize,
    pub search: CausalSearch,
}

impl Default for ObsConfig {
    fn default() -> Self {
        ObsConfig {
            n_dirs: 64,
            samples: 128,
            bisection: 60,
            search: CausalSearch::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Light,
    Earliest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedPoint {
    pub point: Vec<f64>,
    /// Coordinate-time lapse from the source along the generating ray.
    pub parameter: f64,
    /// Ray index (light sets) or observer index (earliest sets).
    pub index: usize,
    pub earliest: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub source: Vec<f64>,
    pub kind: SetKind,
    /// Whether the cone was computed in closed form.
    pub exact: bool,
    pub points: Vec<ObservedPoint>,
}

impl ObservationSet {
    /// True when the cone never meets `V` (a valid, flagged outcome).
    pub fn no_intersection(&self) -> bool {
        self.selected().next().is_none()
    }

    /// The points the set stands for: all of them for light sets, the kept
    /// first arrivals for earliest sets.
    pub fn selected(&self) -> impl Iterator<Item = &ObservedPoint> {
        let all = self.kind == SetKind::Light;
        self.points.iter().filter(move |p| all || p.earliest)
    }

    /// Symmetric Hausdorff distance (Euclidean in coordinates) between the
    /// selected points; `None` if either side is empty.
    pub fn hausdorff(&self, other: &ObservationSet) -> Option<f64> {
        let a: Vec<&[f64]> = self.selected().map(|p| p.point.as_slice()).collect();
        let b: Vec<&[f64]> = other.selected().map(|p| p.point.as_slice()).collect();
        if a.is_empty() || b.is_empty() {
            return None;
        }
        let directed = |x: &[&[f64]], y: &[&[f64]]| {
            x.iter()
                .map(|p| y.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        Some(directed(&a, &b).max(directed(&b, &a)))
    }

    /// CSV rows `q_t, q_x1…, t, x1…, parameter, index, earliest`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.source.len() - 1;
        let mut header = vec!["q_t".to_string()];
        header.extend((1..=d).map(|a| format!("q_x{a}")));
        header.push("t".into());
        header.extend((1..=d).map(|a| format!("x{a}")));
        header.extend(["parameter".into(), "index".into(), "earliest".into()]);
        writeln!(w, "{}", header.join(","))?;
        let q: Vec<String> = self.source.iter().map(|v| format!("{v:.17e}")).collect();
        for p in &self.points {
            let y: Vec<String> = p.point.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(
                w,
                "{},{},{:.17e},{},{}",
                q.join(","),
                y.join(","),
                p.parameter,
                p.index,
                p.earliest as u8
            )?;
        }
        Ok(())
    }
}

fn check_source(m: &MetricSpec, q: &[f64]) -> Result<(), ObsError> {
    check_len(q.len(), m.dim())?;
    if !CoordBox::natural(m).contains(q) {
        return Err(ObsError::InvalidRegion("source outside the coordinate chart".into()));
    }
    Ok(())
}

/// Traces a null ray until coordinate time `t_stop`, ending it early where
/// it leaves the chart.
fn shoot(
    m: &MetricSpec,
    q: &Point,
    v: &Tangent,
    h: f64,
    t_stop: f64,
) -> Result<GeodesicPath, GeometryError> {
    let domain = CoordBox::natural(m);
    let max_steps = (10.0 * (t_stop - q.t()).max(0.0) / h).ceil() as usize + 10;
    match trace_until(m, q, v, h, max_steps, &domain, |p| p.x[0] >= t_stop) {
        Err(GeometryError::StepOutOfDomain { s }) => {
            let steps = ((s / h).round() as usize).saturating_sub(1);
            trace_until(m, q, v, h, steps, &domain, |p| p.x[0] >= t_stop)
        }
        other => other,
    }
}

/// Samples `𝒫_V(q)`. Cone-exact metrics use `t − t_q = |x − x_q|`; other
/// metrics shoot `n_dirs` null rays, each cut at its first conjugate point.
pub fn light_observation_set(
    m: &MetricSpec,
    q: &[f64],
    region: &ObservationRegion,
    cfg: &ObsConfig,
    exec: Exec,
) -> Result<ObservationSet, ObsError> {
    check_source(m, q)?;
    let reg = region.resolve(m)?;
    let exact = m.is_cone_exact() && !cfg.search.force_shooting;
    let mut set = ObservationSet {
        source: q.to_vec(),
        kind: SetKind::Light,
        exact,
        points: Vec::new(),
    };
    let (t_lo, t_hi) = reg.t_range;
    if q[0] >= t_hi {
        return Ok(set);
    }
    let t_start = t_lo.max(q[0]);
    let ns = cfg.samples.max(2);
    let times: Vec<f64> = (0..=ns)
        .map(|j| t_start + (t_hi - t_start) * j as f64 / ns as f64)
        .collect();
    let dirs = sphere_lattice(reg.d, cfg.n_dirs.max(4));
    let rays: Vec<Vec<ObservedPoint>> = if exact {
        exec.map(dirs.len(), |k| {
            let dir = &dirs[k];
            times
                .iter()
                .filter_map(|&t| {
                    let tau = t - q[0];
                    let mut y = vec![t];
                    y.extend(q[1..].iter().zip(dir).map(|(x, c)| x + tau * c));
                    reg.contains(&y).then(|| ObservedPoint {
                        point: y,
                        parameter: tau,
                        index: k,
                        earliest: false,
                    })
                })
                .collect()
        })
    } else {
        let apex = Point::new(q);
        let g = m.metric(q);
        exec.try_map(dirs.len(), |k| -> Result<Vec<ObservedPoint>, ObsError> {
            let v = null_completion(&g, &DVector::from_column_slice(&dirs[k])).ok_or_else(|| {
                GeometryError::InvalidMetric("null cone degenerate at the source".into())
            })?;
            let mut path = shoot(m, &apex, &Tangent(v), cfg.search.h, t_hi + cfg.search.h)?;
            if let Some(s) = first_conjugate_time(m, &path) {
                path.truncate_at(s);
            }
            Ok(times
                .iter()
                .filter_map(|&t| {
                    let (y, _) = path.at_time(t)?;
                    reg.contains(&y).then(|| ObservedPoint {
                        point: y,
                        parameter: t - q[0],
                        index: k,
                        earliest: false,
                    })
                })
                .collect())
        })?
    };
    set.points = rays.into_iter().flatten().collect();
    Ok(set)
}

/// Samples `ℰ_V(q)`: the first crossing of the cone boundary along every
/// observer, bisected to `cfg.bisection` steps, then the strict-precedence
/// filter. Filtered-out crossings stay in the set with `earliest = false`.
pub fn earliest_observation_set(
    m: &MetricSpec,
    q: &[f64],
    region: &ObservationRegion,
    cfg: &ObsConfig,
    exec: Exec,
) -> Result<ObservationSet, ObsError> {
    check_source(m, q)?;
    let reg = region.resolve(m)?;
    let exact = m.is_cone_exact() && !cfg.search.force_shooting;
    let mut set = ObservationSet {
        source: q.to_vec(),
        kind: SetKind::Earliest,
        exact,
        points: Vec::new(),
    };
    let (t_lo, t_hi) = reg.t_range;
    if q[0] >= t_hi {
        return Ok(set);
    }
    let cone = LightCone::new(m, &Point::new(q), t_hi, &cfg.search, exec)?;
    let ns = cfg.samples.max(2);
    let margin_on = |k: usize, t: f64| -> Option<f64> { cone.margin(&reg.observer_at(k, t)?) };
    let crossings: Vec<Option<ObservedPoint>> = exec.map(reg.n_observers(), |k| {
        let time = |j: usize| t_lo + (t_hi - t_lo) * j as f64 / ns as f64;
        if margin_on(k, time(0))? >= 0.0 {
            // Already inside the causal future when entering V.
            return None;
        }
        for j in 1..=ns {
            let cur = margin_on(k, time(j))?;
            if cur >= 0.0 {
                let (mut a, mut b) = (time(j - 1), time(j));
                for _ in 0..cfg.bisection {
                    let mid = 0.5 * (a + b);
                    match margin_on(k, mid) {
                        Some(v) if v >= 0.0 => b = mid,
                        Some(_) => a = mid,
                        None => return None,
                    }
                }
                let t = 0.5 * (a + b);
                let y = reg.observer_at(k, t)?;
                return reg.contains(&y).then(|| ObservedPoint {
                    point: y,
                    parameter: t - q[0],
                    index: k,
                    earliest: true,
                });
            }
        }
        None
    });
    let mut points: Vec<ObservedPoint> = crossings.into_iter().flatten().collect();

    precedence_filter(m, &mut points, &cfg.search, exec)?;
    set.points = points;
    Ok(set)
}

/// Clears the `earliest` flag of every point lying strictly inside the
/// chronological future of another candidate. Builds one cone per candidate.
pub(crate) fn precedence_filter(
    m: &MetricSpec,
    points: &mut [ObservedPoint],
    search: &CausalSearch,
    exec: Exec,
) -> Result<(), ObsError> {
    if points.is_empty() {
        return Ok(());
    }
    let t_max = points.iter().map(|p| p.point[0]).fold(f64::NEG_INFINITY, f64::max);
    let cands: &[ObservedPoint] = points;
    let dominated = exec.try_map(cands.len(), |a| -> Result<Vec<usize>, ObsError> {
        let pa = &cands[a];
        if pa.point[0] >= t_max {
            return Ok(Vec::new());
        }
        let cone = LightCone::new(m, &Point::new(&pa.point), t_max, search, Exec::Sequential)?;
        let band = if cone.exact { search.boundary_tol } else { search.margin };
        Ok(cands
            .iter()
            .enumerate()
            .filter(|(b, pb)| {
                *b != a
                    && pb.point[0] > pa.point[0]
                    && cone.margin(&pb.point).is_some_and(|mg| mg > band)
            })
            .map(|(b, _)| b)
            .collect())
    })?;
    for b in dominated.into_iter().flatten() {
        points[b].earliest = false;
    }
    Ok(())
}

/// Hausdorff distance between `ℰ_V(q1)` and `ℰ_V(q2)`.
pub fn distinguish(
    m: &MetricSpec,
    q1: &[f64],
    q2: &[f64],
    region: &ObservationRegion,
    cfg: &ObsConfig,
    exec: Exec,
) -> Result<f64, ObsError> {
    let a = earliest_observation_set(m, q1, region, cfg, exec)?;
    let b = earliest_observation_set(m, q2, region, cfg, exec)?;
    if a.no_intersection() {
        return Err(ObsError::EmptySet { index: 0 });
    }
    a.hausdorff(&b).ok_or(ObsError::EmptySet { index: 1 })
}

/// Pairwise Hausdorff distances between earliest sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinguishabilityMatrix {
    pub sources: Vec<Vec<f64>>,
    pub distances: Vec<Vec<f64>>,
}

impl DistinguishabilityMatrix {
    /// Smallest distance between distinct sources.
    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.sources.len();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.distances[i][j])
            .fold(f64::INFINITY, f64::min)
    }

    /// Square CSV with a header row and column of source indices.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.sources.len();
        let head: Vec<String> = (0..n).map(|j| j.to_string()).collect();
        writeln!(w, "source,{}", head.join(","))?;
        for (i, row) in self.distances.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{i},{}", vals.join(","))?;
        }
        Ok(())
    }
}

pub fn distinguishability_matrix(
    m: &MetricSpec,
    sources: &[Vec<f64>],
    region: &ObservationRegion,
    cfg: &ObsConfig,
    exec: Exec,
) -> Result<DistinguishabilityMatrix, ObsError> {
    let sets = exec.try_map(sources.len(), |i| {
        earliest_observation_set(m, &sources[i], region, cfg, Exec::Sequential)
    })?;
    if let Some(index) = sets.iter().position(|s| s.no_intersection()) {
        return Err(ObsError::EmptySet { index });
    }
    let n = sets.len();
    let mut distances = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let h = sets[i].hausdorff(&sets[j]).expect("nonempty sets");
            distances[i][j] = h;
            distances[j][i] = h;
        }
    }
    Ok(DistinguishabilityMatrix {
        sources: sources.to_vec(),
        distances,
    })
}
