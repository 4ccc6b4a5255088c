//! Fourth-order asymptotic expansion: direct evaluation of the terms of
//! `∂_{ε1}∂_{ε2}∂_{ε3}∂_{ε4} u` and their extraction by mixed differences.
//!
//! Writing `B(a, b) = g(∇_g a, ∇_g b)` and `u = v − Q_g[w(u)]` with
//! `w = C0 B(u, u) + C1 u B(u, u) + u² M(∇u, ∇u)`, the order-`ε_i ε_j` part of
//! `u` is `−2 Q_g[C0 B(v_i, v_j)]` (`i ≠ j`), and collecting
//! `ε1 ε2 ε3 ε4` gives, with `P_kl = Q_g[C0 B(v_k, v_l)]`,
//! `R_{j,kl} = Q_g[C1 v_j B(v_k, v_l)]`, `S_{j,kl} = Q_g[C0 B(v_j, P_kl)]` and
//! sums over all 24 orderings `(i, j, k, l)`:
//!
//! * `ℳ1 = −Σ Q_g[v_i v_j M(∇v_k, ∇v_l)]`
//! * `ℳ2 = Σ 2Q_g[C0 B(v_i, R_{j,kl})] + Σ Q_g[C1 P_ij B(v_k, v_l)]
//!   + Σ 2Q_g[C1 v_i B(v_j, P_kl)]`
//! * `ℳ3 = −Σ 4Q_g[C0 B(v_i, S_{j,kl})] − Σ Q_g[C0 B(P_ij, P_kl)]`

use std::collections::HashMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::grid::CoeffCache;
use super::nonlinear::{
    metric_pairing, solve_linear, solve_linear_with, solve_nonlinear, FormCache, NullCoefficients,
    SolveOptions,
};
use super::stepper::{causality_leak, contract_gradients};
use super::{Forcing, Grid, GridField, SolverError, SourceTerm};
use crate::geometry::MetricSpec;
use crate::nullform::NonlinearTerm;
use crate::tolerances::CANCELLATION_FACTOR;
use crate::Exec;

/// Default `δ` as a fraction of the amplitude cap.
pub const DEFAULT_DELTA_FRACTION: f64 = 5e-2;

/// The three groups of the order-`ε1ε2ε3ε4` coefficient and their sum.
#[derive(Clone, Debug)]
pub struct ExpansionTerms {
    pub m1: GridField,
    pub m2: GridField,
    pub m3: GridField,
    pub total: GridField,
}

/// All orderings of `(0, 1, 2, 3)`.
pub fn permutations4() -> Vec<[usize; 4]> {
    (0..4)
        .permutations(4)
        .map(|p| [p[0], p[1], p[2], p[3]])
        .collect()
}

/// Distinct products `v_i v_j M(∇v_k, ∇v_l)` in the first sum, keyed by
/// `(i < j, k, l)`, with their multiplicities. `v_i v_j` is symmetric, the
/// `M` factor need not be.
pub fn m1_distinct_terms() -> Vec<([usize; 4], usize)> {
    let mut counts: Vec<([usize; 4], usize)> = Vec::new();
    for p in permutations4() {
        let key = [p[0].min(p[1]), p[0].max(p[1]), p[2], p[3]];
        match counts.iter_mut().find(|(k, _)| *k == key) {
            Some((_, c)) => *c += 1,
            None => counts.push((key, 1)),
        }
    }
    counts
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Pointwise `out(lvl, node) = f(lvl, node)` on the lattice of `like`.
fn pointwise(like: &GridField, mut f: impl FnMut(usize, usize) -> f64) -> GridField {
    let mut out = GridField::zeros(&like.grid);
    let n = like.n_nodes();
    for lvl in 0..=like.grid.nt {
        let s = out.slot_mut(lvl);
        for (node, v) in s.iter_mut().enumerate().take(n) {
            *v = f(lvl, node);
        }
    }
    out
}

/// `M(∇_g a, ∇_g b)` with the full (not symmetrized) `M`.
fn form_pairing(
    m: &MetricSpec,
    forms: &FormCache<'_>,
    a: &GridField,
    b: &GridField,
) -> Result<GridField, SolverError> {
    let grid = a.grid.clone();
    let coeffs = CoeffCache::new(m, &grid)?;
    let n = grid.d + 1;
    // Cache per level; static metrics and forms hit the first entry only.
    let mut level: Option<usize> = None;
    let mut ginv: Vec<[f64; 9]> = Vec::new();
    let mut mm: Vec<[f64; 9]> = Vec::new();
    let mut err = None;
    let out = contract_gradients(a, b, |lvl, node, da, db| {
        if level != Some(lvl) {
            let t = grid.time(lvl);
            match (coeffs.get(t), forms.at(t)) {
                (Ok(c), Ok(f)) => {
                    ginv = c.ginv.clone();
                    mm = f.m.clone();
                }
                (Err(e), _) | (_, Err(e)) => {
                    err = Some(e);
                    return 0.0;
                }
            }
            level = Some(lvl);
        }
        let gi = &ginv[node];
        let mut ua = [0.0; 3];
        let mut ub = [0.0; 3];
        for i in 0..n {
            for j in 0..n {
                ua[i] += gi[i * n + j] * da[j];
                ub[i] += gi[i * n + j] * db[j];
            }
        }
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += mm[node][i * n + j] * ua[i] * ub[j];
            }
        }
        s
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Direct evaluation of `ℳ1`, `ℳ2`, `ℳ3` from the four linear waves; every
/// inner `Q_g` is a linear solve on the common grid.
pub fn expansion_terms(
    m: &MetricSpec,
    nl: &NonlinearTerm,
    v: &[GridField; 4],
    exec: Exec,
) -> Result<ExpansionTerms, SolverError> {
    nl.check(m)?;
    for f in v.iter() {
        f.require_complete()?;
        if !f.grid.same_lattice(&v[0].grid) {
            return Err(SolverError::GridMismatch);
        }
    }
    let grid = v[0].grid.clone();
    let coef = NullCoefficients::new(m, nl, &grid)?;
    let forms = FormCache::new(nl, m, &grid);
    let perms = permutations4();
    let q = |f: &GridField| solve_linear(m, f, &grid, exec);

    // ℳ1.
    let mut src1 = GridField::zeros(&grid);
    if !nl.m_form.is_zero() {
        for (key, mult) in m1_distinct_terms() {
            let [i, j, k, l] = key;
            let mkl = form_pairing(m, &forms, &v[k], &v[l])?;
            let (vi, vj) = (&v[i], &v[j]);
            let term = pointwise(&mkl, |lvl, node| {
                vi.slot(lvl)[node] * vj.slot(lvl)[node] * mkl.slot(lvl)[node]
            });
            src1.axpy(-(mult as f64), &term)?;
        }
    }

    // B(v_k, v_l) for the six unordered pairs.
    let pairs: Vec<(usize, usize)> = (0..4).tuple_combinations().collect();
    let b_vv: HashMap<(usize, usize), GridField> = pairs
        .iter()
        .map(|&(k, l)| Ok(((k, l), metric_pairing(m, &v[k], &v[l])?)))
        .collect::<Result<_, SolverError>>()?;

    let mut src2 = GridField::zeros(&grid);
    let mut src3 = GridField::zeros(&grid);
    let c0_active = !nl.n0.is_zero();
    let c1_active = !nl.n1.is_zero();

    // Every term of ℳ2 and ℳ3 carries at least one C0 through some P_kl.
    if c0_active {
        // P_kl.
        let p_list = exec.try_map(pairs.len(), |idx| {
            let (k, l) = pairs[idx];
            let b = &b_vv[&(k, l)];
            q(&pointwise(b, |lvl, node| coef.c0(lvl, node) * b.slot(lvl)[node]))
        })?;
        let p: HashMap<(usize, usize), GridField> = pairs.iter().cloned().zip(p_list).collect();

        // Triples (j, {k, l}) with j outside the pair.
        let triples: Vec<(usize, (usize, usize))> = (0..4)
            .flat_map(|j| {
                pairs
                    .iter()
                    .filter(move |&&(k, l)| k != j && l != j)
                    .map(move |&kl| (j, kl))
            })
            .collect();

        if c1_active {
            let r_list = exec.try_map(triples.len(), |idx| {
                let (j, kl) = triples[idx];
                let b = &b_vv[&kl];
                let vj = &v[j];
                q(&pointwise(b, |lvl, node| {
                    coef.c1(lvl, node) * vj.slot(lvl)[node] * b.slot(lvl)[node]
                }))
            })?;
            for (&(j, kl), r) in triples.iter().zip(&r_list) {
                for pm in perms.iter().filter(|pm| pm[1] == j && pair_key(pm[2], pm[3]) == kl) {
                    let b = metric_pairing(m, &v[pm[0]], r)?;
                    let term = pointwise(&b, |lvl, node| 2.0 * coef.c0(lvl, node) * b.slot(lvl)[node]);
                    src2.axpy(1.0, &term)?;
                }
            }
            let mut b_vp: HashMap<(usize, (usize, usize)), GridField> = HashMap::new();
            for pm in &perms {
                let [i, j, k, l] = *pm;
                let pij = &p[&pair_key(i, j)];
                let bkl = &b_vv[&pair_key(k, l)];
                let t1 = pointwise(pij, |lvl, node| {
                    coef.c1(lvl, node) * pij.slot(lvl)[node] * bkl.slot(lvl)[node]
                });
                src2.axpy(1.0, &t1)?;
                let key = (j, pair_key(k, l));
                if !b_vp.contains_key(&key) {
                    b_vp.insert(key, metric_pairing(m, &v[j], &p[&key.1])?);
                }
                let b = &b_vp[&key];
                let vi = &v[i];
                let t2 = pointwise(b, |lvl, node| {
                    2.0 * coef.c1(lvl, node) * vi.slot(lvl)[node] * b.slot(lvl)[node]
                });
                src2.axpy(1.0, &t2)?;
            }
        }

        // ℳ3.
        let s_list = exec.try_map(triples.len(), |idx| {
            let (j, kl) = triples[idx];
            let b = metric_pairing(m, &v[j], &p[&kl])?;
            q(&pointwise(&b, |lvl, node| coef.c0(lvl, node) * b.slot(lvl)[node]))
        })?;
        for (&(j, kl), s) in triples.iter().zip(&s_list) {
            for pm in perms.iter().filter(|pm| pm[1] == j && pair_key(pm[2], pm[3]) == kl) {
                let b = metric_pairing(m, &v[pm[0]], s)?;
                let term = pointwise(&b, |lvl, node| 4.0 * coef.c0(lvl, node) * b.slot(lvl)[node]);
                src3.axpy(-1.0, &term)?;
            }
        }
        let mut b_pp: HashMap<((usize, usize), (usize, usize)), GridField> = HashMap::new();
        for pm in &perms {
            let key = (pair_key(pm[0], pm[1]), pair_key(pm[2], pm[3]));
            if !b_pp.contains_key(&key) {
                b_pp.insert(key, metric_pairing(m, &p[&key.0], &p[&key.1])?);
            }
            let b = &b_pp[&key];
            let term = pointwise(b, |lvl, node| coef.c0(lvl, node) * b.slot(lvl)[node]);
            src3.axpy(-1.0, &term)?;
        }
    }

    let solved = exec.try_map(3, |k| q([&src1, &src2, &src3][k]))?;
    let [m1, m2, m3]: [GridField; 3] = solved.try_into().expect("three fields");
    let mut total = m1.clone();
    total.axpy(1.0, &m2)?;
    total.axpy(1.0, &m3)?;
    Ok(ExpansionTerms { m1, m2, m3, total })
}

/// `−2 Q_g[C0 g(∇_g v_1, ∇_g v_2)]`: the `ε_1 ε_2` coefficient.
pub fn order2_reference(
    m: &MetricSpec,
    nl: &NonlinearTerm,
    v1: &GridField,
    v2: &GridField,
    exec: Exec,
) -> Result<GridField, SolverError> {
    let grid = v1.grid.clone();
    let coef = NullCoefficients::new(m, nl, &grid)?;
    let b = metric_pairing(m, v1, v2)?;
    let src = pointwise(&b, |lvl, node| -2.0 * coef.c0(lvl, node) * b.slot(lvl)[node]);
    solve_linear(m, &src, &grid, exec)
}

/// Mixed-difference estimate of `∂_{ε_{i1}} ⋯ ∂_{ε_{ik}} u` at `ε = 0`.
#[derive(Clone, Debug)]
pub struct MixedDifference {
    pub order: usize,
    pub delta: f64,
    /// Richardson combination: `2 D(δ/2) − D(δ)` at order 2,
    /// `(4 D(δ/2) − D(δ)) / 3` at order 4.
    pub estimate: GridField,
    pub coarse: GridField,
    pub fine: GridField,
}

impl MixedDifference {
    /// Interior relative change between `D(δ)` and `D(δ/2)`.
    pub fn richardson_change(&self) -> f64 {
        self.coarse
            .interior_relative_error(&self.fine)
            .unwrap_or(f64::NAN)
    }
}

/// Stencil `Σ_{s ∈ {0,1}^k} (−1)^{k−|s|} u(δ s) / δ^k` over the sources in
/// `indices` (others off), with one Richardson halving of `δ`.
#[allow(clippy::too_many_arguments)]
pub fn mixed_difference(
    m: &MetricSpec,
    nl: &NonlinearTerm,
    src: &SourceTerm,
    grid: &Grid,
    indices: &[usize],
    delta: f64,
    opts: &SolveOptions,
    allow_zero: bool,
) -> Result<MixedDifference, SolverError> {
    let order = indices.len();
    if !(order == 2 || order == 4) {
        return Err(SolverError::InvalidSource(format!(
            "mixed differences of order {order} are not supported"
        )));
    }
    if indices.iter().any(|&i| i >= src.len()) || indices.iter().unique().count() != order {
        return Err(SolverError::InvalidSource("bad source indices".into()));
    }
    if !(delta > 0.0) {
        return Err(SolverError::InvalidSource("δ must be positive".into()));
    }
    // Order 2 uses the corners {0, h}²; order 4 the symmetric corners
    // {-h, +h}⁴, whose truncation error is O(h²) and keeps h large enough
    // to stay clear of round-off in the sixteen-term sum.
    let symmetric = order == 4;
    let stencil = |h: f64| -> Result<GridField, SolverError> {
        let corners = 1usize << order;
        let fields = opts.exec.try_map(corners, |mask| {
            let mut eps = vec![0.0; src.len()];
            for (b, &i) in indices.iter().enumerate() {
                let on = mask >> b & 1 == 1;
                eps[i] = match (symmetric, on) {
                    (_, true) => h,
                    (true, false) => -h,
                    (false, false) => 0.0,
                };
            }
            let inner = opts.clone().with_exec(Exec::Sequential);
            solve_nonlinear(m, nl, &src.with_amplitudes(&eps), grid, &inner)
        })?;
        let mut sum = GridField {
            grid: fields[0].grid.clone(),
            levels: fields[0].levels.clone(),
            values: vec![0.0; fields[0].values.len()],
        };
        let mut scale: f64 = 0.0;
        for (mask, f) in fields.iter().enumerate() {
            let sign = if (order - mask.count_ones() as usize) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            sum.axpy(sign, f)?;
            scale = scale.max(f.norm_inf());
        }
        let floor = CANCELLATION_FACTOR * f64::EPSILON * scale;
        let magnitude = sum.norm_inf();
        if magnitude < floor && !allow_zero {
            return Err(SolverError::CancellationLoss {
                order,
                magnitude,
                floor,
            });
        }
        let width = if symmetric { 2.0 * h } else { h };
        Ok(sum.scaled(width.powi(-(order as i32))))
    };
    let coarse = stencil(delta)?;
    let fine = stencil(0.5 * delta)?;
    // Richardson extrapolation against the leading truncation order.
    let (a, b) = if symmetric { (4.0 / 3.0, -1.0 / 3.0) } else { (2.0, -1.0) };
    let mut estimate = fine.scaled(a);
    estimate.axpy(b, &coarse)?;
    Ok(MixedDifference {
        order,
        delta,
        estimate,
        coarse,
        fine,
    })
}

/// One resolution of an expansion study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub cells: Vec<usize>,
    pub dt: f64,
    /// Interior relative `L²` error of the order-4 mixed difference against
    /// `ℳ1 + ℳ2 + ℳ3`.
    pub order4_error: f64,
    /// Same for the order-2 difference against its reference.
    pub order2_error: f64,
    pub m1_norm: f64,
    pub m2_norm: f64,
    pub m3_norm: f64,
    pub direct_norm: f64,
    pub mixed_norm: f64,
    pub richardson_change: f64,
    /// Largest value of any expansion term outside the discrete causal future
    /// of the sources, relative to `sup |f|`.
    pub causality_leak: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub delta: f64,
    pub rows: Vec<ExpansionRow>,
    pub order4_error_decreasing: bool,
}

impl ExpansionReport {
    pub fn finest(&self) -> &ExpansionRow {
        self.rows.last().expect("at least one resolution")
    }
}

/// Mixed differences against direct evaluation on `grid` and `refinements`
/// successive halvings of it.
pub fn expansion_study(
    m: &MetricSpec,
    nl: &NonlinearTerm,
    src: &SourceTerm,
    grid: &Grid,
    refinements: u32,
    delta: Option<f64>,
    opts: &SolveOptions,
) -> Result<ExpansionReport, SolverError> {
    if src.len() != 4 {
        return Err(SolverError::InvalidSource(
            "expansion studies need exactly four sources".into(),
        ));
    }
    let delta = delta.unwrap_or(DEFAULT_DELTA_FRACTION * opts.amplitude_cap);
    let mut rows = Vec::new();
    for k in 0..=refinements {
        let g = grid.refined(m, k)?.with_store_every(1);
        let v: Vec<GridField> = opts.exec.try_map(4, |i| {
            solve_linear_with(m, &g, Forcing::Source(&src.unit_component(i)), Exec::Sequential)
        })?;
        let v: [GridField; 4] = v.try_into().expect("four waves");
        let terms = expansion_terms(m, nl, &v, opts.exec)?;
        let mixed4 = mixed_difference(m, nl, src, &g, &[0, 1, 2, 3], delta, opts, false)?;
        let mixed2 = mixed_difference(m, nl, src, &g, &[0, 1], delta, opts, false)?;
        let ref2 = order2_reference(m, nl, &v[0], &v[1], opts.exec)?;
        let unit = src.with_amplitudes(&[1.0; 4]);
        let fnorm = unit.size().max(f64::MIN_POSITIVE);
        let mut leak: f64 = 0.0;
        for f in [&terms.m1, &terms.m2, &terms.m3] {
            leak = leak.max(causality_leak(f, Forcing::Source(&unit))? / fnorm);
        }
        rows.push(ExpansionRow {
            cells: g.cells().to_vec(),
            dt: g.dt,
            order4_error: mixed4.estimate.interior_relative_error(&terms.total)?,
            order2_error: mixed2.estimate.interior_relative_error(&ref2)?,
            m1_norm: terms.m1.interior_l2(),
            m2_norm: terms.m2.interior_l2(),
            m3_norm: terms.m3.interior_l2(),
            direct_norm: terms.total.interior_l2(),
            mixed_norm: mixed4.estimate.interior_l2(),
            richardson_change: mixed4.richardson_change(),
            causality_leak: leak,
        });
    }
    let order4_error_decreasing = rows.windows(2).all(|w| w[1].order4_error < w[0].order4_error);
    Ok(ExpansionReport {
        delta,
        rows,
        order4_error_decreasing,
    })
}
