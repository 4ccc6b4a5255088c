//! Grid-refinement studies.

use serde::{Deserialize, Serialize};

use super::nonlinear::{solve_linear_with, solve_nonlinear, SolveOptions};
use super::{Forcing, Grid, GridField, GridSpec, Manufactured, SolverError, SourceTerm};
use crate::geometry::MetricSpec;
use crate::nullform::NonlinearTerm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvergenceKind {
    /// Linear solve with `f = □_g u*` for a known `u*`; errors against `u*`.
    Manufactured { solution: Manufactured },
    /// Nonlinear solve; errors between consecutive resolutions.
    Nonlinear {
        nonlinearity: NonlinearTerm,
        source: SourceTerm,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceScenario {
    pub metric: MetricSpec,
    /// Coarsest grid; finer ones halve every step.
    pub grid: GridSpec,
    #[serde(flatten)]
    pub kind: ConvergenceKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub cells: Vec<usize>,
    pub dt: f64,
    /// Interior `L²` error at the final time (manufactured), or the
    /// difference to the next finer resolution (nonlinear).
    pub error: f64,
    /// `log2` of the ratio to the previous row's error.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub courant: f64,
    /// Order between the two finest comparisons.
    pub observed_order: f64,
    pub min_order: f64,
    pub max_order: f64,
}

/// Interior spatial `L²` norm at the final level of `fine` sampled on the
/// coarse lattice minus `coarse`.
fn restricted_difference(coarse: &GridField, fine: &GridField) -> f64 {
    let cg = &coarse.grid;
    let fg = &fine.grid;
    let (cu, fu) = (coarse.last(), fine.last());
    let cell: f64 = cg.dx.iter().product();
    let mut s = 0.0;
    for node in 0..cg.n_nodes() {
        if !cg.is_interior(node) {
            continue;
        }
        let idx = cg.index(node);
        let fnode = fg.node([2 * idx[0], 2 * idx[1]]);
        let d = cu[node] - fu[fnode];
        s += d * d;
    }
    (s * cell).sqrt()
}

/// Observed orders over `resolutions ≥ 3` nested grids.
pub fn convergence_study(
    scenario: &ConvergenceScenario,
    resolutions: usize,
    opts: &SolveOptions,
) -> Result<ConvergenceTable, SolverError> {
    if resolutions < 3 {
        return Err(SolverError::InvalidGrid("need at least 3 resolutions".into()));
    }
    let m = &scenario.metric;
    let mut spec = scenario.grid.clone();
    // Only the final level is compared.
    spec.store_every = usize::MAX / 2;
    let base = Grid::new(m, &spec)?;
    let grids = (0..resolutions)
        .map(|k| base.refined(m, k as u32))
        .collect::<Result<Vec<_>, _>>()?;
    let mut errors = Vec::new();
    match &scenario.kind {
        ConvergenceKind::Manufactured { solution } => {
            let rhs = |y: &[f64]| solution.box_value(m, y).unwrap_or(f64::NAN);
            for g in &grids {
                let u = solve_linear_with(m, g, Forcing::Function(&rhs), opts.exec)?;
                let t = g.time(g.nt);
                let cell: f64 = g.dx.iter().product();
                let last = u.last();
                let mut s = 0.0;
                for node in 0..g.n_nodes() {
                    if g.is_interior(node) {
                        let mut y = vec![t];
                        y.extend(g.coords(node));
                        let e = last[node] - solution.value(&y);
                        s += e * e;
                    }
                }
                errors.push((s * cell).sqrt());
            }
        }
        ConvergenceKind::Nonlinear {
            nonlinearity,
            source,
        } => {
            let fields = grids
                .iter()
                .map(|g| solve_nonlinear(m, nonlinearity, source, g, opts))
                .collect::<Result<Vec<_>, _>>()?;
            for w in fields.windows(2) {
                errors.push(restricted_difference(&w[0], &w[1]));
            }
        }
    }
    let mut rows = Vec::new();
    let mut orders = Vec::new();
    for (k, &e) in errors.iter().enumerate() {
        let order = if k == 0 {
            None
        } else {
            let p = (errors[k - 1] / e).log2();
            orders.push(p);
            Some(p)
        };
        rows.push(ConvergenceRow {
            cells: grids[k].cells().to_vec(),
            dt: grids[k].dt,
            error: e,
            order,
        });
    }
    let observed_order = *orders.last().unwrap_or(&f64::NAN);
    Ok(ConvergenceTable {
        rows,
        courant: base.courant,
        observed_order,
        min_order: orders.iter().cloned().fold(f64::INFINITY, f64::min),
        max_order: orders.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}
