//! Leapfrog time stepping for the divergence-form wave operator, the discrete
//! `□_g`, lattice gradients and the discrete causal future.

use super::grid::{CoeffCache, Coeffs};
use super::nonlinear::{w_value, FormCache};
use super::{Forcing, Grid, GridField, SolverError};
use crate::geometry::MetricSpec;
use crate::Exec;

/// Below this many nodes per level the spatial update stays sequential.
const PAR_MIN_NODES: usize = 8192;

#[derive(Clone, Copy, Debug)]
pub(crate) struct MarchOptions {
    pub exec: Exec,
    /// Abort when `‖u^n‖_∞` exceeds this.
    pub guard: f64,
}

impl Default for MarchOptions {
    fn default() -> Self {
        MarchOptions {
            exec: Exec::default(),
            guard: f64::INFINITY,
        }
    }
}

fn effective_exec(exec: Exec, grid: &Grid) -> Exec {
    if grid.n_nodes() >= PAR_MIN_NODES {
        exec
    } else {
        Exec::Sequential
    }
}

/// Chunk length for the spatial update: whole rows in 2-D.
fn chunk_len(grid: &Grid) -> usize {
    if grid.d == 1 {
        1024
    } else {
        (grid.spec.cells[1] + 1) * 8
    }
}

/// Divergence-form spatial operator `∂_a(β^{ab} ∂_b u)` at an interior node.
#[inline]
fn spatial_operator(grid: &Grid, c: &Coeffs, u: &[f64], node: usize) -> f64 {
    let d = grid.d;
    if d == 1 {
        let h2 = grid.dx[0] * grid.dx[0];
        let b = |i: usize| c.beta[i][0];
        let bp = 0.5 * (b(node) + b(node + 1));
        let bm = 0.5 * (b(node) + b(node - 1));
        return (bp * (u[node + 1] - u[node]) - bm * (u[node] - u[node - 1])) / h2;
    }
    let ny = grid.spec.cells[1] + 1;
    let (hx, hy) = (grid.dx[0], grid.dx[1]);
    let e = node + ny;
    let w = node - ny;
    let n = node + 1;
    let s = node - 1;
    let bxx = |i: usize| c.beta[i][0];
    let byy = |i: usize| c.beta[i][3];
    let mut out = (0.5 * (bxx(node) + bxx(e)) * (u[e] - u[node])
        - 0.5 * (bxx(node) + bxx(w)) * (u[node] - u[w]))
        / (hx * hx)
        + (0.5 * (byy(node) + byy(n)) * (u[n] - u[node])
            - 0.5 * (byy(node) + byy(s)) * (u[node] - u[s]))
            / (hy * hy);
    if c.cross {
        let bxy = |i: usize| c.beta[i][1];
        let byx = |i: usize| c.beta[i][2];
        let q = 1.0 / (4.0 * hx * hy);
        out += q
            * (bxy(e) * (u[e + 1] - u[e - 1]) - bxy(w) * (u[w + 1] - u[w - 1]))
            + q * (byx(n) * (u[n + ny] - u[n - ny]) - byx(s) * (u[s + ny] - u[s - ny]));
    }
    out
}

/// Second-order spatial derivatives `∂_a u` at any node (one-sided on the
/// boundary).
#[inline]
pub(crate) fn spatial_gradient(grid: &Grid, u: &[f64], node: usize) -> [f64; 2] {
    let idx = grid.index(node);
    let mut out = [0.0; 2];
    for k in 0..grid.d {
        let stride = if k == 0 && grid.d == 2 {
            grid.spec.cells[1] + 1
        } else {
            1
        };
        let n = grid.spec.cells[k];
        let h = grid.dx[k];
        let i = idx[k];
        out[k] = if i == 0 {
            (-3.0 * u[node] + 4.0 * u[node + stride] - u[node + 2 * stride]) / (2.0 * h)
        } else if i == n {
            (3.0 * u[node] - 4.0 * u[node - stride] + u[node - 2 * stride]) / (2.0 * h)
        } else {
            (u[node + stride] - u[node - stride]) / (2.0 * h)
        };
    }
    out
}

/// Explicit leapfrog for `□_g u + w = f` with zero data before the source.
///
/// The nonlinearity, when present, is evaluated at the current level with a
/// second-order backward time derivative.
pub(crate) fn march(
    m: &MetricSpec,
    grid: &Grid,
    forcing: Forcing<'_>,
    nl: Option<&FormCache<'_>>,
    opts: MarchOptions,
) -> Result<GridField, SolverError> {
    let n = grid.n_nodes();
    let levels = grid.stored_levels();
    let mut out = GridField {
        grid: grid.clone(),
        values: vec![0.0; levels.len() * n],
        levels,
    };
    if forcing.is_zero() {
        return Ok(out);
    }
    let coeffs = CoeffCache::new(m, grid)?;
    let damping: Vec<f64> = (0..n).map(|i| grid.damping(i)).collect();
    let boundary: Vec<bool> = (0..n).map(|i| grid.is_boundary(i)).collect();
    let exec = effective_exec(opts.exec, grid);
    let chunk = chunk_len(grid);
    let dt = grid.dt;

    let mut prev2 = vec![0.0; n];
    let mut prev = vec![0.0; n];
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut alpha_minus = coeffs.get(-0.5 * dt)?.alpha.clone();
    let mut slot = 1usize;

    for lvl in 0..grid.nt {
        let t = grid.time(lvl);
        forcing.fill(grid, lvl, &mut f)?;
        let c = coeffs.get(t)?;
        let alpha_plus = if coeffs.is_static() {
            c.alpha.clone()
        } else {
            coeffs.get(t + 0.5 * dt)?.alpha.clone()
        };
        let forms = match nl {
            Some(fc) => Some(fc.at(t)?),
            None => None,
        };
        let (cur_r, prev_r, prev2_r, f_r) = (&cur, &prev, &prev2, &f);
        let (c_r, ap, am) = (&*c, &alpha_plus, &alpha_minus);
        let (damp, bnd) = (&damping, &boundary);
        let forms_r = forms.as_deref();
        exec.for_each_chunk(&mut next, chunk, |ci, out_chunk| {
            let base = ci * chunk;
            for (k, v) in out_chunk.iter_mut().enumerate() {
                let node = base + k;
                if bnd[node] {
                    *v = 0.0;
                    continue;
                }
                let mut w = 0.0;
                if let Some(fm) = forms_r {
                    let sg = spatial_gradient(grid, cur_r, node);
                    let du = [
                        (3.0 * cur_r[node] - 4.0 * prev_r[node] + prev2_r[node]) / (2.0 * dt),
                        sg[0],
                        sg[1],
                    ];
                    w = w_value(fm, &c_r.ginv[node], grid.d + 1, node, cur_r[node], &du);
                }
                let rhs = spatial_operator(grid, c_r, cur_r, node)
                    - c_r.sqrt_g[node] * (f_r[node] - w);
                let (a_p, a_m) = (ap[node], am[node]);
                let sigma = 0.5 * damp[node] * dt * 0.5 * (a_p + a_m);
                *v = (a_p * cur_r[node] + a_m * (cur_r[node] - prev_r[node])
                    + sigma * prev_r[node]
                    + dt * dt * rhs)
                    / (a_p + sigma);
            }
        });
        let mut norm: f64 = 0.0;
        for v in &next {
            if !v.is_finite() {
                return Err(SolverError::NaNDetected { level: lvl + 1 });
            }
            norm = norm.max(v.abs());
        }
        if norm > opts.guard {
            return Err(SolverError::DivergenceDetected {
                level: lvl + 1,
                norm,
                guard: opts.guard,
            });
        }
        if slot < out.levels.len() && out.levels[slot] == lvl + 1 {
            out.slot_mut(slot).copy_from_slice(&next);
            slot += 1;
        }
        alpha_minus = alpha_plus;
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(out)
}

/// Discrete `□_g u` in divergence form with face-averaged coefficients.
///
/// Defined at levels `1..nt` on non-boundary nodes; zero elsewhere. It is the
/// exact left inverse of the undamped stepper.
pub fn apply_box(m: &MetricSpec, u: &GridField) -> Result<GridField, SolverError> {
    u.require_complete()?;
    let grid = &u.grid;
    let coeffs = CoeffCache::new(m, grid)?;
    let mut out = GridField::zeros(grid);
    let dt = grid.dt;
    for lvl in 1..grid.nt {
        let t = grid.time(lvl);
        let c = coeffs.get(t)?;
        let ap = coeffs.get(t + 0.5 * dt)?;
        let am = coeffs.get(t - 0.5 * dt)?;
        let (um, u0, up) = (u.slot(lvl - 1), u.slot(lvl), u.slot(lvl + 1));
        let dst = out.slot_mut(lvl);
        for node in 0..dst.len() {
            if grid.is_boundary(node) {
                continue;
            }
            let time_part =
                (ap.alpha[node] * (up[node] - u0[node]) - am.alpha[node] * (u0[node] - um[node]))
                    / (dt * dt);
            dst[node] = (spatial_operator(grid, &c, u0, node) - time_part) / c.sqrt_g[node];
        }
    }
    Ok(out)
}

/// Covariant derivative `∂_i u` at a node of a complete field, central in
/// time (one-sided at the first and last level).
#[inline]
pub(crate) fn covector_at(u: &GridField, lvl: usize, node: usize) -> [f64; 3] {
    let grid = &u.grid;
    let nt = grid.nt;
    let dt = grid.dt;
    let at = |l: usize| u.slot(l)[node];
    let d0 = if nt < 2 {
        if nt == 0 {
            0.0
        } else {
            (at(1) - at(0)) / dt
        }
    } else if lvl == 0 {
        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * dt)
    } else if lvl == nt {
        (3.0 * at(nt) - 4.0 * at(nt - 1) + at(nt - 2)) / (2.0 * dt)
    } else {
        (at(lvl + 1) - at(lvl - 1)) / (2.0 * dt)
    };
    let s = spatial_gradient(grid, u.slot(lvl), node);
    [d0, s[0], s[1]]
}

/// `∇_g u = g^{ij} ∂_j u`, one field per component `i = 0..=d`.
pub fn gradient_field(m: &MetricSpec, u: &GridField) -> Result<Vec<GridField>, SolverError> {
    u.require_complete()?;
    let grid = &u.grid;
    let n = grid.d + 1;
    let coeffs = CoeffCache::new(m, grid)?;
    let mut out = vec![GridField::zeros(grid); n];
    for lvl in 0..=grid.nt {
        let c = coeffs.get(grid.time(lvl))?;
        for node in 0..grid.n_nodes() {
            let du = covector_at(u, lvl, node);
            for i in 0..n {
                let v: f64 = (0..n).map(|j| c.ginv[node][i * n + j] * du[j]).sum();
                out[i].slot_mut(lvl)[node] = v;
            }
        }
    }
    Ok(out)
}

/// Pointwise `Σ_ij A_ij(x) ∂_i a ∂_j b`, with `A` supplied per level and
/// node; central time differences.
pub(crate) fn contract_gradients<F>(
    a: &GridField,
    b: &GridField,
    mut weight: F,
) -> Result<GridField, SolverError>
where
    F: FnMut(usize, usize, &[f64; 3], &[f64; 3]) -> f64,
{
    a.require_complete()?;
    b.require_complete()?;
    if !a.grid.same_lattice(&b.grid) {
        return Err(SolverError::GridMismatch);
    }
    let grid = &a.grid;
    let mut out = GridField::zeros(grid);
    for lvl in 0..=grid.nt {
        for node in 0..grid.n_nodes() {
            let da = covector_at(a, lvl, node);
            let db = covector_at(b, lvl, node);
            out.slot_mut(lvl)[node] = weight(lvl, node, &da, &db);
        }
    }
    Ok(out)
}

/// Largest `|u|` outside the discrete causal future of the forcing support.
///
/// The discrete future grows by one node (a 3×3 block in 2-D) per step and
/// absorbs the support of `f^n` at level `n + 1`, mirroring the stencil of
/// the stepper; values outside it are identically zero unless something
/// leaks.
pub fn causality_leak(u: &GridField, forcing: Forcing<'_>) -> Result<f64, SolverError> {
    let grid = &u.grid;
    let n = grid.n_nodes();
    let mut mask = vec![false; n];
    let mut f = vec![0.0; n];
    let mut leak: f64 = 0.0;
    let mut slot = 0usize;
    for lvl in 0..=grid.nt {
        if slot < u.levels.len() && u.levels[slot] == lvl {
            for (node, v) in u.slot(slot).iter().enumerate() {
                if !mask[node] {
                    leak = leak.max(v.abs());
                }
            }
            slot += 1;
        }
        if lvl == grid.nt {
            break;
        }
        forcing.fill(grid, lvl, &mut f)?;
        let mut grown = dilate(grid, &mask);
        for (g, fv) in grown.iter_mut().zip(&f) {
            *g |= *fv != 0.0;
        }
        mask = grown;
    }
    Ok(leak)
}

fn dilate(grid: &Grid, mask: &[bool]) -> Vec<bool> {
    let mut out = mask.to_vec();
    for node in 0..mask.len() {
        if !mask[node] {
            continue;
        }
        let idx = grid.index(node);
        let lo0 = idx[0].saturating_sub(1);
        let hi0 = (idx[0] + 1).min(grid.spec.cells[0]);
        if grid.d == 1 {
            for i in lo0..=hi0 {
                out[i] = true;
            }
        } else {
            let lo1 = idx[1].saturating_sub(1);
            let hi1 = (idx[1] + 1).min(grid.spec.cells[1]);
            for i in lo0..=hi0 {
                for j in lo1..=hi1 {
                    out[grid.node([i, j])] = true;
                }
            }
        }
    }
    out
}
