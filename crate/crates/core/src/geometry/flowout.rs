//! Flow-out of a null geodesic: the family of null geodesics leaving
//! `x' = γ(t0)` in directions close to `γ'(t0)`, and its slice at `t = 2 t0`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::geodesic::trace_until;
use super::{
    causal_character, first_conjugate_time, geodesic_trace_in, quad, CausalCharacter, CoordBox,
    GeodesicPath, GeometryError, MetricSpec, Point, Tangent,
};
use crate::exec::Exec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowoutParams {
    pub t0: f64,
    pub s0: f64,
    pub n_dirs: usize,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowoutSurface {
    pub base_point: Point,
    pub base_direction: Tangent,
    pub params: FlowoutParams,
    /// `x' = γ(t0)` and `θ' = γ'(t0)`.
    pub apex: Point,
    pub apex_direction: Tangent,
    pub directions: Vec<Tangent>,
    pub paths: Vec<GeodesicPath>,
    /// Samples with `|t − 2 t0| ≤ h`.
    pub y_slice: Vec<Point>,
}

impl FlowoutSurface {
    /// Largest Euclidean distance between a sample and the sample at the same
    /// parameter on the central ray `γ_{x', θ'}`.
    pub fn max_transverse_spread(&self, m: &MetricSpec) -> Result<f64, GeometryError> {
        let s_max = self.paths.iter().map(|p| p.s_max()).fold(0.0, f64::max);
        let central = geodesic_trace_in(
            m,
            &self.apex,
            &self.apex_direction,
            s_max.max(self.params.h),
            self.params.h,
            &CoordBox::natural(m),
        )?;
        let mut worst: f64 = 0.0;
        for p in &self.paths {
            for (a, b) in p.samples.iter().zip(&central.samples) {
                let d = a.x.iter().zip(&b.x).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(d);
            }
        }
        Ok(worst)
    }

    /// Parameter range covered by the stored paths.
    pub fn parameter_range(&self) -> f64 {
        self.paths.iter().map(|p| p.s_max()).fold(0.0, f64::max)
    }
}

/// Deterministic offsets filling the ball of radius `r` in `dim` dimensions.
pub(crate) fn ball_lattice(dim: usize, n: usize, r: f64) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let frac = (i as f64 + 0.5) / n as f64;
            match dim {
                1 => vec![r * (2.0 * frac - 1.0)],
                2 => {
                    let rho = r * frac.sqrt();
                    let a = golden * i as f64;
                    vec![rho * a.cos(), rho * a.sin()]
                }
                _ => {
                    let rho = r * frac.cbrt();
                    let dir = &sphere_lattice(3, n)[i];
                    dir.iter().map(|c| c * rho).collect()
                }
            }
        })
        .collect()
}

/// Deterministic, roughly uniform unit vectors in `dim` dimensions.
pub(crate) fn sphere_lattice(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let a = golden * i as f64;
                vec![rho * a.cos(), rho * a.sin(), z]
            })
            .collect(),
    }
}

/// Replaces the time component of `w` so that it becomes future-pointing null.
pub(crate) fn complete_time_component(
    g: &nalgebra::DMatrix<f64>,
    w: &DVector<f64>,
) -> Option<DVector<f64>> {
    let mut sp = w.clone();
    sp[0] = 0.0;
    let mut e0 = DVector::zeros(w.len());
    e0[0] = 1.0;
    // g00 τ² + 2τ g(e0, sp) + g(sp, sp) = 0, root with τ > 0.
    let a = g[(0, 0)];
    let b = 2.0 * quad(g, &e0, &sp);
    let c = quad(g, &sp, &sp);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a >= 0.0 {
        return None;
    }
    let tau = (-b - disc.sqrt()) / (2.0 * a);
    if tau <= 0.0 {
        return None;
    }
    sp[0] = tau;
    Some(sp)
}

/// Samples the flow-out surface `K(x0, θ0; t0, s0)` and its slice `Y`.
///
/// `θ0` is rescaled so its time component is 1; parameters are affine.
pub fn flowout_surface(
    m: &MetricSpec,
    x0: &Point,
    theta0: &Tangent,
    params: &FlowoutParams,
    exec: Exec,
) -> Result<FlowoutSurface, GeometryError> {
    let FlowoutParams { t0, s0, n_dirs, h } = params.clone();
    if !(t0 > 0.0 && s0 > 0.0 && h > 0.0) || n_dirs == 0 {
        return Err(GeometryError::InvalidArgument(
            "flow-out needs t0 > 0, s0 > 0, h > 0 and n_dirs ≥ 1".into(),
        ));
    }
    if theta0[0] <= 0.0 || causal_character(m, x0.coords(), theta0)? != CausalCharacter::Null {
        return Err(GeometryError::InvalidArgument(
            "θ0 must be future-pointing null".into(),
        ));
    }
    let theta0 = theta0 * (1.0 / theta0[0]);
    let domain = CoordBox::natural(m);
    let base = geodesic_trace_in(m, x0, &theta0, t0, h, &domain)?;
    if let Some(tau0) = first_conjugate_time(m, &base) {
        return Err(GeometryError::ConjugateBeforeT0 { tau0, t0 });
    }
    let apex_sample = base.end();
    let apex = Point::new(&apex_sample.x);
    let apex_direction = Tangent::new(&apex_sample.v);
    let g_apex = m.metric(apex.coords());

    let d = m.spatial_dim();
    let radius = s0 / 3.0;
    let directions: Vec<Tangent> = ball_lattice(d, n_dirs, radius)
        .into_iter()
        .filter_map(|off| {
            let mut w = apex_direction.0.clone();
            for a in 0..d {
                w[a + 1] += off[a];
            }
            let th = complete_time_component(&g_apex, &w)?;
            ((&th - &apex_direction.0).norm() < s0).then_some(Tangent(th))
        })
        .collect();
    if directions.is_empty() {
        return Err(GeometryError::InvalidArgument(
            "no admissible direction in the s0-ball".into(),
        ));
    }
    let t_stop = 2.0 * t0 + h;
    let max_steps = (20.0 * t0 / h).ceil() as usize + 10;
    let paths = exec.try_map(directions.len(), |i| {
        trace_until(m, &apex, &directions[i], h, max_steps, &domain, |p| p.x[0] >= t_stop)
    })?;
    let y_slice = paths
        .iter()
        .flat_map(|p| p.samples.iter())
        .filter(|p| (p.x[0] - 2.0 * t0).abs() <= h)
        .map(|p| Point::new(&p.x))
        .collect();
    Ok(FlowoutSurface {
        base_point: x0.clone(),
        base_direction: theta0,
        params: params.clone(),
        apex,
        apex_direction,
        directions,
        paths,
        y_slice,
    })
}
