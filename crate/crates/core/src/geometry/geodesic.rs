//! Fixed-step RK4 geodesic integration and conjugate-point detection.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{causal_character, christoffel, quad, CausalCharacter, GeometryError, MetricSpec, Point, Tangent};
use crate::tolerances::TOL_CONJ;

/// Axis-aligned coordinate box; `±inf` bounds are allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CoordBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        CoordBox { lo, hi }
    }

    pub fn unbounded(n: usize) -> Self {
        CoordBox {
            lo: vec![f64::NEG_INFINITY; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    /// The chart on which `m` is regular (polar caps removed for the sphere).
    pub fn natural(m: &MetricSpec) -> Self {
        let mut b = Self::unbounded(m.dim());
        if let MetricSpec::UltrastaticSphere = m {
            b.lo[1] = 1e-6;
            b.hi[1] = std::f64::consts::PI - 1e-6;
        }
        b
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub samples: Vec<GeodesicSample>,
    pub character: CausalCharacter,
    pub h: f64,
    /// `g(ẋ(0), ẋ(0))`.
    pub c0: f64,
}

impl GeodesicPath {
    pub fn start(&self) -> &GeodesicSample {
        &self.samples[0]
    }

    pub fn end(&self) -> &GeodesicSample {
        self.samples.last().expect("paths are never empty")
    }

    pub fn s_max(&self) -> f64 {
        self.end().s
    }

    /// Largest `|g(ẋ, ẋ) − c0|` over the samples.
    pub fn conservation_defect(&self, m: &MetricSpec) -> f64 {
        self.samples
            .iter()
            .map(|p| {
                let v = nalgebra::DVector::from_column_slice(&p.v);
                (quad(&m.metric(&p.x), &v, &v) - self.c0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Drops samples with parameter beyond `s`.
    pub fn truncate_at(&mut self, s: f64) {
        self.samples.retain(|p| p.s <= s);
        if self.samples.is_empty() {
            panic!("truncation removed the initial sample");
        }
    }

    /// Point and velocity where the coordinate time first reaches `t`, using
    /// cubic Hermite interpolation within the bracketing step.
    pub fn at_time(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let k = self.samples.windows(2).position(|w| w[0].x[0] <= t && w[1].x[0] >= t)?;
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let ds = b.s - a.s;
        let herm = |i: usize, u: f64| {
            let (u2, u3) = (u * u, u * u * u);
            let (h00, h10, h01, h11) = (
                2.0 * u3 - 3.0 * u2 + 1.0,
                u3 - 2.0 * u2 + u,
                -2.0 * u3 + 3.0 * u2,
                u3 - u2,
            );
            h00 * a.x[i] + h10 * ds * a.v[i] + h01 * b.x[i] + h11 * ds * b.v[i]
        };
        let dherm = |i: usize, u: f64| {
            let u2 = u * u;
            let (d00, d10, d01, d11) = (
                6.0 * u2 - 6.0 * u,
                3.0 * u2 - 4.0 * u + 1.0,
                -6.0 * u2 + 6.0 * u,
                3.0 * u2 - 2.0 * u,
            );
            (d00 * a.x[i] + d01 * b.x[i]) / ds + d10 * a.v[i] + d11 * b.v[i]
        };
        let span = b.x[0] - a.x[0];
        let mut u = if span > 0.0 { (t - a.x[0]) / span } else { 0.0 };
        for _ in 0..30 {
            let f = herm(0, u) - t;
            let df = dherm(0, u) * ds;
            if df.abs() < 1e-300 {
                break;
            }
            let step = f / df;
            u = (u - step).clamp(0.0, 1.0);
            if step.abs() < 1e-15 {
                break;
            }
        }
        let n = a.x.len();
        Some((
            (0..n).map(|i| herm(i, u)).collect(),
            (0..n).map(|i| dherm(i, u)).collect(),
        ))
    }

    /// CSV with columns `s, x0..xd, v0..vd`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.start().x.len();
        let mut header = vec!["s".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("v{i}")));
        writeln!(w, "{}", header.join(","))?;
        for p in &self.samples {
            let mut row = vec![format!("{:.17e}", p.s)];
            row.extend(p.x.iter().map(|v| format!("{v:.17e}")));
            row.extend(p.v.iter().map(|v| format!("{v:.17e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn geodesic_accel(m: &MetricSpec, x: &[f64], v: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let gamma = christoffel(m, x)?;
    let vv = nalgebra::DVector::from_column_slice(v);
    Ok(gamma.iter().map(|gi| -quad(gi, &vv, &vv)).collect())
}

fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// One classical RK4 step of the geodesic spray.
fn rk4_step(
    m: &MetricSpec,
    x: &[f64],
    v: &[f64],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>), GeometryError> {
    let k1x = v.to_vec();
    let k1v = geodesic_accel(m, x, v)?;
    let (x2, v2) = (axpy(x, 0.5 * h, &k1x), axpy(v, 0.5 * h, &k1v));
    let k2v = geodesic_accel(m, &x2, &v2)?;
    let (x3, v3) = (axpy(x, 0.5 * h, &v2), axpy(v, 0.5 * h, &k2v));
    let k3v = geodesic_accel(m, &x3, &v3)?;
    let (x4, v4) = (axpy(x, h, &v3), axpy(v, h, &k3v));
    let k4v = geodesic_accel(m, &x4, &v4)?;
    let n = x.len();
    let xn = (0..n)
        .map(|i| x[i] + h / 6.0 * (k1x[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]))
        .collect();
    let vn = (0..n)
        .map(|i| v[i] + h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]))
        .collect();
    Ok((xn, vn))
}

fn path_character(m: &MetricSpec, x0: &[f64], v0: &Tangent) -> Result<(CausalCharacter, f64), GeometryError> {
    let c = causal_character(m, x0, v0)?;
    if c == CausalCharacter::Spacelike {
        return Err(GeometryError::InvalidArgument(
            "geodesics are traced only for null or timelike directions".into(),
        ));
    }
    let c0 = if c == CausalCharacter::Null {
        0.0
    } else {
        quad(&m.metric(x0), &v0.0, &v0.0)
    };
    Ok((c, c0))
}

/// Traces the geodesic through `x0` with initial velocity `θ0` on `[0, s_max]`
/// in the natural chart of `m`.
pub fn geodesic_trace(
    m: &MetricSpec,
    x0: &Point,
    theta0: &Tangent,
    s_max: f64,
    h: f64,
) -> Result<GeodesicPath, GeometryError> {
    geodesic_trace_in(m, x0, theta0, s_max, h, &CoordBox::natural(m))
}

/// As [`geodesic_trace`], failing with `StepOutOfDomain` outside `domain`.
/// The step is shrunk uniformly so that the last sample lands on `s_max`.
pub fn geodesic_trace_in(
    m: &MetricSpec,
    x0: &Point,
    theta0: &Tangent,
    s_max: f64,
    h: f64,
    domain: &CoordBox,
) -> Result<GeodesicPath, GeometryError> {
    if !(h > 0.0) || !(s_max > 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "need h > 0 and s_max > 0 (h = {h}, s_max = {s_max})"
        )));
    }
    let steps = (s_max / h - 1e-9).ceil().max(1.0) as usize;
    let h_eff = s_max / steps as f64;
    trace_until(m, x0, theta0, h_eff, steps, domain, |_| false)
}

/// Integrates at most `max_steps` steps of size `h`, stopping after the first
/// sample for which `stop` holds.
pub(crate) fn trace_until<F: Fn(&GeodesicSample) -> bool>(
    m: &MetricSpec,
    x0: &Point,
    theta0: &Tangent,
    h: f64,
    max_steps: usize,
    domain: &CoordBox,
    stop: F,
) -> Result<GeodesicPath, GeometryError> {
    let n = m.dim();
    if x0.dim() != n || theta0.dim() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            got: if x0.dim() != n { x0.dim() } else { theta0.dim() },
        });
    }
    let (character, c0) = path_character(m, x0.coords(), theta0)?;
    let mut samples = Vec::with_capacity(max_steps + 1);
    samples.push(GeodesicSample {
        s: 0.0,
        x: x0.coords().to_vec(),
        v: theta0.components().to_vec(),
    });
    for k in 0..max_steps {
        let last = samples.last().unwrap();
        if stop(last) {
            break;
        }
        let (x, v) = rk4_step(m, &last.x, &last.v, h)?;
        let s = (k + 1) as f64 * h;
        if !domain.contains(&x) || x.iter().chain(&v).any(|c| !c.is_finite()) {
            return Err(GeometryError::StepOutOfDomain { s });
        }
        samples.push(GeodesicSample { s, x, v });
    }
    Ok(GeodesicPath {
        samples,
        character,
        h,
        c0,
    })
}

/// Joint state of the geodesic and the Jacobi propagator `A = J`, `B = J'`.
#[derive(Clone)]
struct JacobiState {
    x: Vec<f64>,
    v: Vec<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

fn jacobi_rhs(m: &MetricSpec, st: &JacobiState) -> Result<JacobiState, GeometryError> {
    let n = st.x.len();
    let fd = 1e-5;
    let gamma = christoffel(m, &st.x)?;
    // P^i_k = Γ^i_jk v^j ; Q^i_m = ∂_m Γ^i_jk v^j v^k.
    let mut p = DMatrix::zeros(n, n);
    for (i, gi) in gamma.iter().enumerate() {
        for k in 0..n {
            p[(i, k)] = (0..n).map(|j| gi[(j, k)] * st.v[j]).sum::<f64>();
        }
    }
    let vv = nalgebra::DVector::from_column_slice(&st.v);
    let mut q = DMatrix::zeros(n, n);
    for mm in 0..n {
        let mut xp = st.x.clone();
        let mut xm = st.x.clone();
        xp[mm] += fd;
        xm[mm] -= fd;
        let gp = christoffel(m, &xp)?;
        let gm = christoffel(m, &xm)?;
        for i in 0..n {
            q[(i, mm)] = (quad(&gp[i], &vv, &vv) - quad(&gm[i], &vv, &vv)) / (2.0 * fd);
        }
    }
    let acc: Vec<f64> = gamma.iter().map(|gi| -quad(gi, &vv, &vv)).collect();
    Ok(JacobiState {
        x: st.v.clone(),
        v: acc,
        a: st.b.clone(),
        b: -(&q * &st.a) - (&p * &st.b) * 2.0,
    })
}

fn jacobi_axpy(a: &JacobiState, s: f64, d: &JacobiState) -> JacobiState {
    JacobiState {
        x: axpy(&a.x, s, &d.x),
        v: axpy(&a.v, s, &d.v),
        a: &a.a + &d.a * s,
        b: &a.b + &d.b * s,
    }
}

fn jacobi_step(m: &MetricSpec, st: &JacobiState, h: f64) -> Result<JacobiState, GeometryError> {
    let k1 = jacobi_rhs(m, st)?;
    let k2 = jacobi_rhs(m, &jacobi_axpy(st, 0.5 * h, &k1))?;
    let k3 = jacobi_rhs(m, &jacobi_axpy(st, 0.5 * h, &k2))?;
    let k4 = jacobi_rhs(m, &jacobi_axpy(st, h, &k3))?;
    let mut out = jacobi_axpy(st, h / 6.0, &k1);
    out = jacobi_axpy(&out, h / 3.0, &k2);
    out = jacobi_axpy(&out, h / 3.0, &k3);
    Ok(jacobi_axpy(&out, h / 6.0, &k4))
}

fn normalized_det(st: &JacobiState, s: f64) -> f64 {
    st.a.determinant() / s.powi(st.x.len() as i32)
}

/// Smallest parameter at which the Jacobi propagator with `J(0) = 0`,
/// `J'(0) = I` degenerates, searched over the parameter range of `path`.
///
/// Degeneracy means the normalized determinant `det J(s) / s^n` changes sign
/// or drops below the conjugate tolerance; the crossing is refined by
/// bisection inside the step. Integration failures end the search.
pub fn first_conjugate_time(m: &MetricSpec, path: &GeodesicPath) -> Option<f64> {
    first_conjugate_time_with(m, path, TOL_CONJ)
}

pub fn first_conjugate_time_with(m: &MetricSpec, path: &GeodesicPath, tol_conj: f64) -> Option<f64> {
    let n = m.dim();
    let start = path.start();
    let h = path.h;
    let steps = ((path.s_max() / h) - 1e-9).ceil() as usize;
    let mut st = JacobiState {
        x: start.x.clone(),
        v: start.v.clone(),
        a: DMatrix::zeros(n, n),
        b: DMatrix::identity(n, n),
    };
    let degenerate = |d: f64| d.abs() < tol_conj || d < 0.0;
    for k in 0..steps {
        let s0 = k as f64 * h;
        let next = jacobi_step(m, &st, h).ok()?;
        let d = normalized_det(&next, s0 + h);
        if !d.is_finite() {
            return None;
        }
        if degenerate(d) {
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let probe = jacobi_step(m, &st, mid).ok()?;
                if degenerate(normalized_det(&probe, s0 + mid)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(s0 + 0.5 * (lo + hi));
        }
        st = next;
    }
    None
}
