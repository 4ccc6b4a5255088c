//! Causal relations: exact cone tests for cone-exact metrics, numerically
//! shot light cones otherwise.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::flowout::sphere_lattice;
use super::geodesic::trace_until;
use super::{dual_metric, null_completion, CoordBox, GeodesicPath, GeometryError, MetricSpec, Point, Tangent};
use crate::exec::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
    Undecided,
}

/// Knobs for the shooting search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CausalSearch {
    /// Rays in the direction lattice (ignored for d = 1, which has two).
    pub n_dirs: usize,
    /// RK4 step in the affine parameter.
    pub h: f64,
    /// Radial band around the shot cone reported as undecided.
    pub margin: f64,
    /// Shoot rays even for cone-exact metrics.
    pub force_shooting: bool,
    /// Slack for the exact test, so boundary points count as causal.
    pub boundary_tol: f64,
}

impl Default for CausalSearch {
    fn default() -> Self {
        CausalSearch {
            n_dirs: 64,
            h: 1e-2,
            margin: 1e-3,
            force_shooting: false,
            boundary_tol: 1e-12,
        }
    }
}

/// Future light cone of a point, either exact or sampled by null rays.
#[derive(Clone, Debug)]
pub struct LightCone {
    pub apex: Point,
    pub exact: bool,
    /// Null rays, each traced until coordinate time `t_max`.
    pub rays: Vec<GeodesicPath>,
    /// Timelike reference ray along `−∇t`.
    pub center: Option<GeodesicPath>,
    pub t_max: f64,
}

impl LightCone {
    pub fn new(
        m: &MetricSpec,
        apex: &Point,
        t_max: f64,
        cfg: &CausalSearch,
        exec: Exec,
    ) -> Result<Self, GeometryError> {
        if m.is_cone_exact() && !cfg.force_shooting {
            return Ok(LightCone {
                apex: apex.clone(),
                exact: true,
                rays: Vec::new(),
                center: None,
                t_max,
            });
        }
        let x = apex.coords();
        let g = m.metric(x);
        let d = m.spatial_dim();
        let domain = CoordBox::natural(m);
        let span = (t_max - apex.t()).max(0.0);
        let max_steps = (10.0 * span / cfg.h).ceil() as usize + 10;
        let t_stop = t_max + cfg.h;
        let dirs = sphere_lattice(d, cfg.n_dirs.max(4));
        let rays = exec.try_map(dirs.len(), |k| {
            let v = null_completion(&g, &DVector::from_column_slice(&dirs[k])).ok_or_else(|| {
                GeometryError::InvalidMetric("null cone degenerate at the apex".into())
            })?;
            trace_until(m, apex, &Tangent(v), cfg.h, max_steps, &domain, |p| p.x[0] >= t_stop)
        })?;
        let ginv = dual_metric(m, x)?;
        let up = Tangent(-ginv.column(0).into_owned());
        let center = trace_until(m, apex, &up, cfg.h, max_steps, &domain, |p| p.x[0] >= t_stop)?;
        Ok(LightCone {
            apex: apex.clone(),
            exact: false,
            rays,
            center: Some(center),
            t_max,
        })
    }

    /// Signed distance of `q` from the cone boundary, positive inside the
    /// causal future. Exact cones measure `Δt − |Δx|`; shot cones measure the
    /// radial gap in the spatial section through `q`. `None` when `q` lies
    /// beyond the traced range.
    pub fn margin(&self, q: &[f64]) -> Option<f64> {
        let p = self.apex.coords();
        let dt = q[0] - p[0];
        if self.exact || dt <= 0.0 {
            let r = spatial_dist(&q[1..], &p[1..]);
            return Some(if self.exact { dt - r } else { dt.min(0.0) - r });
        }
        if q[0] > self.t_max + 1e-12 {
            return None;
        }
        let (c, offs) = self.section(q[0])?;
        let oq: Vec<f64> = q[1..].iter().zip(&c).map(|(a, b)| a - b).collect();
        let rq = norm(&oq);
        let radius = interpolate_radius(&offs, &oq);
        Some(radius - rq)
    }

    /// Center and spatial offsets of the rays at coordinate time `t`.
    pub fn section(&self, t: f64) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        let (c, _) = self.center.as_ref()?.at_time(t)?;
        let c = c[1..].to_vec();
        let mut offs = Vec::with_capacity(self.rays.len());
        for r in &self.rays {
            let (y, _) = r.at_time(t)?;
            offs.push(y[1..].iter().zip(&c).map(|(a, b)| a - b).collect());
        }
        Some((c, offs))
    }

    pub fn verdict(&self, q: &[f64], cfg: &CausalSearch) -> Verdict {
        if q == self.apex.coords() {
            return Verdict::Yes;
        }
        match self.margin(q) {
            None => Verdict::Undecided,
            Some(mg) if self.exact => {
                if mg >= -cfg.boundary_tol {
                    Verdict::Yes
                } else {
                    Verdict::No
                }
            }
            Some(mg) => {
                if q[0] < self.apex.t() || mg < -cfg.margin {
                    Verdict::No
                } else if mg > cfg.margin {
                    Verdict::Yes
                } else {
                    Verdict::Undecided
                }
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn spatial_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Cone radius in the direction of `oq`, interpolated from the ray offsets.
fn interpolate_radius(offs: &[Vec<f64>], oq: &[f64]) -> f64 {
    let rq = norm(oq);
    let radii: Vec<f64> = offs.iter().map(|o| norm(o)).collect();
    if rq < 1e-14 {
        return radii.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    match oq.len() {
        1 => offs
            .iter()
            .zip(&radii)
            .filter(|(o, _)| o[0] * oq[0] >= 0.0)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max),
        2 => {
            let aq = oq[1].atan2(oq[0]);
            let mut angles: Vec<(f64, f64)> = offs
                .iter()
                .zip(&radii)
                .map(|(o, r)| (o[1].atan2(o[0]), *r))
                .collect();
            angles.sort_by(|a, b| a.0.total_cmp(&b.0));
            let tau = std::f64::consts::TAU;
            let n = angles.len();
            for k in 0..n {
                let (a0, r0) = angles[k];
                let (mut a1, r1) = angles[(k + 1) % n];
                if k + 1 == n {
                    a1 += tau;
                }
                let mut a = aq;
                while a < a0 {
                    a += tau;
                }
                if a <= a1 {
                    let f = if a1 > a0 { (a - a0) / (a1 - a0) } else { 0.0 };
                    return r0 + f * (r1 - r0);
                }
            }
            radii[0]
        }
        _ => {
            // Inverse-angle weighting over the nearest rays by direction.
            let mut near: Vec<(f64, f64)> = offs
                .iter()
                .zip(&radii)
                .map(|(o, r)| {
                    let cosang = o.iter().zip(oq).map(|(a, b)| a * b).sum::<f64>() / (r * rq);
                    (cosang.clamp(-1.0, 1.0).acos(), *r)
                })
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0));
            let k = near.len().min(4);
            if near[0].0 < 1e-12 {
                return near[0].1;
            }
            let (num, den) = near[..k]
                .iter()
                .fold((0.0, 0.0), |(n, d), (ang, r)| (n + r / ang, d + 1.0 / ang));
            num / den
        }
    }
}

/// `p ≤ q`: exact for cone-exact metrics, three-valued by shooting otherwise.
pub fn causally_precedes(m: &MetricSpec, p: &Point, q: &Point, cfg: &CausalSearch) -> Verdict {
    if p == q {
        return Verdict::Yes;
    }
    if q.t() < p.t() {
        return Verdict::No;
    }
    match LightCone::new(m, p, q.t(), cfg, Exec::Sequential) {
        Ok(cone) => cone.verdict(q.coords(), cfg),
        Err(_) => Verdict::Undecided,
    }
}

/// `p ≪ q` (strictly inside the causal future).
pub fn chronologically_precedes(
    m: &MetricSpec,
    p: &Point,
    q: &Point,
    cfg: &CausalSearch,
) -> Verdict {
    if q.t() <= p.t() {
        return Verdict::No;
    }
    let Ok(cone) = LightCone::new(m, p, q.t(), cfg, Exec::Sequential) else {
        return Verdict::Undecided;
    };
    match cone.margin(q.coords()) {
        None => Verdict::Undecided,
        Some(mg) if cone.exact => {
            if mg > cfg.boundary_tol {
                Verdict::Yes
            } else {
                Verdict::No
            }
        }
        Some(mg) if mg > cfg.margin => Verdict::Yes,
        Some(mg) if mg < -cfg.margin => Verdict::No,
        Some(_) => Verdict::Undecided,
    }
}

/// Signed cone margin of `q` relative to the light cone of `p`.
pub fn cone_margin(
    m: &MetricSpec,
    p: &Point,
    q: &Point,
    cfg: &CausalSearch,
) -> Result<Option<f64>, GeometryError> {
    let cone = LightCone::new(m, p, q.t().max(p.t()), cfg, Exec::Sequential)?;
    Ok(cone.margin(q.coords()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ScalarField;
    use std::f64::consts::PI;

    fn cfg() -> CausalSearch {
        CausalSearch::default()
    }

    #[test]
    fn minkowski_exact_examples() {
        let m = MetricSpec::minkowski(3);
        let o = Point::new(&[0.0; 4]);
        assert_eq!(causally_precedes(&m, &o, &Point::new(&[1.0, 0.0, 0.0, 0.0]), &cfg()), Verdict::Yes);
        assert_eq!(causally_precedes(&m, &o, &Point::new(&[0.5, 1.0, 0.0, 0.0]), &cfg()), Verdict::No);
        assert_eq!(causally_precedes(&m, &o, &Point::new(&[1.0, 1.0, 0.0, 0.0]), &cfg()), Verdict::Yes);
        assert_eq!(
            chronologically_precedes(&m, &o, &Point::new(&[1.0, 1.0, 0.0, 0.0]), &cfg()),
            Verdict::No
        );
        assert_eq!(causally_precedes(&m, &o, &o, &cfg()), Verdict::Yes);
    }

    #[test]
    fn conformal_answers_match_minkowski() {
        let m = MetricSpec::conformal(3, ScalarField::gaussian(0.5, vec![0.3, 0.2], 0.8));
        let o = Point::new(&[0.0; 4]);
        assert_eq!(causally_precedes(&m, &o, &Point::new(&[1.0, 0.0, 0.0, 0.0]), &cfg()), Verdict::Yes);
        assert_eq!(causally_precedes(&m, &o, &Point::new(&[0.5, 1.0, 0.0, 0.0]), &cfg()), Verdict::No);
    }

    #[test]
    fn forced_shooting_reproduces_exact_answers() {
        let m = MetricSpec::conformal(2, ScalarField::gaussian(0.4, vec![0.0, 0.3, 0.0], 0.7));
        let c = CausalSearch {
            force_shooting: true,
            n_dirs: 96,
            ..cfg()
        };
        let o = Point::new(&[0.0; 3]);
        let cases = [
            ([1.0, 0.0, 0.0], Verdict::Yes),
            ([1.0, 0.5, 0.5], Verdict::Yes),
            ([0.5, 1.0, 0.0], Verdict::No),
            ([1.0, 0.0, -1.2], Verdict::No),
        ];
        for (q, want) in cases {
            assert_eq!(causally_precedes(&m, &o, &Point::new(&q), &c), want, "{q:?}");
        }
        // The reference ray drifts under the conformal factor, so the radial
        // gap is measured from a shifted center; it stays close to Δt − |Δx|.
        let cone = LightCone::new(&m, &o, 1.0, &c, Exec::Parallel).unwrap();
        let mg = cone.margin(&[1.0, 0.3, 0.4]).unwrap();
        assert!((mg - 0.5).abs() < 0.02, "{mg}");
        let (_, offs) = cone.section(1.0).unwrap();
        assert_eq!(offs.len(), 96);
    }

    #[test]
    fn sphere_shooting() {
        let m = MetricSpec::UltrastaticSphere;
        let p = Point::new(&[0.0, PI / 2.0, 0.0]);
        // Null distance along the equator equals elapsed time.
        assert_eq!(causally_precedes(&m, &p, &Point::new(&[1.0, PI / 2.0, 0.5]), &cfg()), Verdict::Yes);
        assert_eq!(causally_precedes(&m, &p, &Point::new(&[0.5, PI / 2.0, 1.0]), &cfg()), Verdict::No);
        assert_eq!(
            causally_precedes(&m, &p, &Point::new(&[1.0, PI / 2.0, 1.0]), &cfg()),
            Verdict::Undecided
        );
        assert_eq!(causally_precedes(&m, &p, &p, &cfg()), Verdict::Yes);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pt() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-1.0f64..1.0, 3)
        }

        proptest! {
            #[test]
            fn reflexive(p in pt()) {
                let m = MetricSpec::minkowski(2);
                let p = Point::new(&p);
                prop_assert_eq!(causally_precedes(&m, &p, &p, &cfg()), Verdict::Yes);
            }

            #[test]
            fn transitive_minkowski(a in pt(), b in pt(), c in pt()) {
                let m = MetricSpec::minkowski(2);
                let (a, b, c) = (Point::new(&a), Point::new(&b), Point::new(&c));
                let ab = causally_precedes(&m, &a, &b, &cfg());
                let bc = causally_precedes(&m, &b, &c, &cfg());
                if ab == Verdict::Yes && bc == Verdict::Yes {
                    prop_assert_eq!(causally_precedes(&m, &a, &c, &cfg()), Verdict::Yes);
                }
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn transitive_when_decided_on_sphere(
                t1 in 0.2f64..0.6, t2 in 0.2f64..0.6,
                a1 in -0.4f64..0.4, b1 in -0.4f64..0.4,
                a2 in -0.4f64..0.4, b2 in -0.4f64..0.4,
            ) {
                let m = MetricSpec::UltrastaticSphere;
                let c = CausalSearch { n_dirs: 32, h: 2e-2, ..cfg() };
                let p = Point::new(&[0.0, PI / 2.0, 0.0]);
                let q = Point::new(&[t1, PI / 2.0 + a1, b1]);
                let r = Point::new(&[t1 + t2, PI / 2.0 + a1 + a2, b1 + b2]);
                let pq = causally_precedes(&m, &p, &q, &c);
                let qr = causally_precedes(&m, &q, &r, &c);
                let pr = causally_precedes(&m, &p, &r, &c);
                if pq == Verdict::Yes && qr == Verdict::Yes && pr != Verdict::Undecided {
                    prop_assert_eq!(pr, Verdict::Yes);
                }
            }
        }
    }
}
