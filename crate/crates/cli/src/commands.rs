//! Subcommand implementations. Each returns the checks and result payload
//! for its report and writes any tables next to it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nullwave::geometry::{first_conjugate_time, geodesic_trace};
use nullwave::nullform::{classify_nonlinearity, decompose_null_form};
use nullwave::obsets::{
    distinguishability_matrix, earliest_observation_set, light_observation_set,
};
use nullwave::symbolcalc::{
    conformal_relation, interaction_batch, nonvanishing_witness, sample_quadruple_stream,
    write_batch_csv, SymbolError, WitnessOutcome, KAPPA_A, KAPPA_B,
};
use nullwave::wavesolver::{
    causality_leak, convergence_study, expansion_study, expansion_terms, solve_linear_with,
    solve_nonlinear, ConvergenceKind, ConvergenceScenario, Forcing, Grid, GridField, GridSpec,
    SourceTerm,
};
use nullwave::{Exec, NonlinearTerm, Point, QuadraticForm, Tangent};
use serde_json::{json, Value};

use crate::config::ScenarioConfig;
use crate::report::{Check, Outcome};
use crate::CliError;

/// Fields with more values than this are written in binary only.
const CSV_VALUE_LIMIT: usize = 200_000;

pub struct Ctx<'a> {
    pub cfg: &'a ScenarioConfig,
    pub dir: &'a Path,
    pub exec: Exec,
}

struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(dir: &'a Path) -> Self {
        Artifacts {
            dir,
            names: Vec::new(),
        }
    }

    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let err = |e| CliError::Write {
            path: path.clone(),
            source: e,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(err)?);
        f(&mut w).and_then(|_| w.flush()).map_err(err)?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn finish(self, checks: Vec<Check>, result: Value) -> Outcome {
        Outcome {
            checks,
            result,
            artifacts: self.names,
        }
    }
}

fn m_form(cfg: &ScenarioConfig) -> Result<QuadraticForm, CliError> {
    cfg.nonlinearity
        .as_ref()
        .map(|n| n.m_form.clone())
        .ok_or(CliError::Missing("nonlinearity"))
}

fn grid(cfg: &ScenarioConfig) -> Result<(&GridSpec, Grid), CliError> {
    let spec = cfg.grid.as_ref().ok_or(CliError::Missing("grid"))?;
    let g = Grid::new(&cfg.metric, spec).map_err(|e| CliError::context("grid", e))?;
    Ok((spec, g))
}

fn sources(cfg: &ScenarioConfig) -> Result<&SourceTerm, CliError> {
    cfg.sources.as_ref().ok_or(CliError::Missing("sources"))
}

fn max_abs(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |a, b| a.max(b.abs()))
}

pub fn decompose(ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let m = &cfg.metric;
    let x = cfg.base_point();
    let mut labeled: Vec<(String, &QuadraticForm)> = cfg
        .forms
        .iter()
        .enumerate()
        .map(|(k, f)| (format!("forms[{k}]"), f))
        .collect();
    if let Some(nl) = &cfg.nonlinearity {
        labeled.push(("n0".into(), &nl.n0));
        labeled.push(("n1".into(), &nl.n1));
        labeled.push(("m".into(), &nl.m_form));
    }
    let mut checks = Vec::new();
    let mut entries = Vec::new();
    for (label, f) in labeled {
        match decompose_null_form(f, m, &x) {
            Ok(d) => {
                let err = (d.reconstruct(m) - f.matrix(m, &x)).amax();
                checks.push(Check::at_most(
                    &format!("{label}.reconstruction"),
                    err,
                    cfg.tolerances.decomposition,
                ));
                entries.push(json!({
                    "label": label,
                    "form": f.to_string(),
                    "null": true,
                    "decomposition": d,
                    "reconstruction_error": err,
                }));
            }
            Err(e) => entries.push(json!({
                "label": label,
                "form": f.to_string(),
                "null": false,
                "reason": e.to_string(),
            })),
        }
    }
    let assumption = cfg
        .nonlinearity
        .as_ref()
        .map(|nl| classify_nonlinearity(nl, m, &[x.clone()], 200, cfg.seed));
    Ok(Artifacts::new(ctx.dir).finish(
        checks,
        json!({ "base_point": x, "forms": entries, "assumption": assumption }),
    ))
}

pub fn witness(ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let s = &cfg.sampler;
    let x = cfg.base_point();
    let mf = m_form(cfg)?;
    let arts = Artifacts::new(ctx.dir);
    match nonvanishing_witness(&cfg.metric, &mf, &x, s.attempts, s.threshold, cfg.seed, ctx.exec) {
        Ok(out) => {
            let check = match &out {
                WitnessOutcome::Witness { normalized, .. } => {
                    Check::above("normalized_p", *normalized, s.threshold)
                }
                WitnessOutcome::MNullCertificate { .. } => Check::holds("m_null_certificate", true),
            };
            Ok(arts.finish(vec![check], serde_json::to_value(out)?))
        }
        Err(SymbolError::SearchFailed { attempts, max_seen }) => Ok(arts.finish(
            vec![Check::above("normalized_p", max_seen, s.threshold)],
            json!({ "outcome": "search_failed", "attempts": attempts, "max_seen": max_seen }),
        )),
        Err(e) => Err(CliError::context("witness search", e)),
    }
}

pub fn interact(ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let s = &cfg.sampler;
    let tol = &cfg.tolerances;
    let x = cfg.base_point();
    let mf = m_form(cfg)?;
    let seeds: Vec<u64> = (0..s.count as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let rows = interaction_batch(&cfg.metric, &mf, &x, &seeds, s.require_null_sum, ctx.exec);
    let mut arts = Artifacts::new(ctx.dir);
    arts.write("interact.csv", |w| write_batch_csv(&rows, w))?;
    let mut checks = vec![Check::holds("quadruples_sampled", !rows.is_empty())];
    if s.require_null_sum {
        checks.push(Check::at_most(
            "max_abs_a",
            max_abs(rows.iter().map(|r| r.a)),
            tol.cancellation,
        ));
        checks.push(Check::at_most(
            "max_abs_b",
            max_abs(rows.iter().map(|r| r.b)),
            tol.cancellation,
        ));
    } else {
        let spread = |kappa: f64, f: &dyn Fn(&nullwave::symbolcalc::BatchRow) -> f64| {
            max_abs(
                rows.iter()
                    .filter(|r| r.g_star_zeta.abs() > 1e-6)
                    .map(|r| (f(r) / r.g_star_zeta - kappa) / kappa),
            )
        };
        checks.push(Check::at_most("a_ratio_spread", spread(KAPPA_A, &|r| r.a), tol.proportionality));
        checks.push(Check::at_most("b_ratio_spread", spread(KAPPA_B, &|r| r.b), tol.proportionality));
    }
    let mut ranks = [0usize; 3];
    for r in &rows {
        ranks[r.rank.min(2)] += 1;
    }
    Ok(arts.finish(
        checks,
        json!({
            "rows": rows.len(),
            "require_null_sum": s.require_null_sum,
            "max_abs_p": max_abs(rows.iter().map(|r| r.p)),
            "max_abs_g_star_zeta": max_abs(rows.iter().map(|r| r.g_star_zeta)),
            "rank_counts": ranks,
        }),
    ))
}

pub fn conformal(ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let s = &cfg.sampler;
    let m = &cfg.metric;
    let x = cfg.base_point();
    let mf = m_form(cfg)?;
    let n = s.count.max(1);
    let reports = ctx.exec.try_map(n, |k| {
        let quad = sample_quadruple_stream(m, &x, cfg.seed, k as u64, s.require_null_sum, 200)?;
        conformal_relation(m, &cfg.conformal.gamma, &mf, &quad)
    });
    let reports = reports.map_err(|e| CliError::context("conformal relation", e))?;
    let worst = reports
        .iter()
        .map(|r| r.ratio_error / r.expected_ratio)
        .fold(0.0, f64::max);
    let first = &reports[0];
    let checks = vec![
        Check::at_most("relative_ratio_error", worst, cfg.tolerances.conformal),
        Check::holds("net_exponent_is_minus_five", first.exponents.net == -5),
    ];
    Ok(Artifacts::new(ctx.dir).finish(
        checks,
        json!({ "draws": n, "max_relative_ratio_error": worst, "first": first }),
    ))
}

fn write_field(arts: &mut Artifacts, stem: &str, u: &GridField) -> Result<(), CliError> {
    arts.write(&format!("{stem}.bin"), |w| u.write_binary(w))?;
    if u.values.len() <= CSV_VALUE_LIMIT {
        arts.write(&format!("{stem}.csv"), |w| u.write_csv(w))?;
    }
    Ok(())
}

pub fn solve(ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let m = &cfg.metric;
    let (_, g) = grid(cfg)?;
    let src = sources(cfg)?;
    let nl = cfg.nonlinearity();
    let opts = cfg.solver.clone().with_exec(ctx.exec);
    let u = solve_nonlinear(m, &nl, src, &g, &opts).map_err(|e| CliError::context("solve", e))?;
    let leak = causality_leak(&u, Forcing::Source(src)).map_err(|e| CliError::context("solve", e))?
        / src.size().max(f64::MIN_POSITIVE);
    let mut arts = Artifacts::new(ctx.dir);
    write_field(&mut arts, "solve_field", &u)?;
    Ok(arts.finish(
        vec![Check::at_most("causality_leak", leak, cfg.tolerances.causality)],
        json!({
            "cells": g.cells(),
            "dt": g.dt,
            "steps": g.nt,
            "courant": g.courant,
            "stored_levels": u.levels.len(),
            "norm_inf": u.norm_inf(),
            "final_interior_l2": u.interior_l2(),
            "causality_leak": leak,
        }),
    ))
}

pub fn expand(ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let m = &cfg.metric;
    let tol = &cfg.tolerances;
    let (_, g) = grid(cfg)?;
    let src = sources(cfg)?;
    let nl = cfg.nonlinearity();
    let opts = cfg.solver.clone().with_exec(ctx.exec);
    let mut arts = Artifacts::new(ctx.dir);
    if nl.is_zero() {
        if !cfg.expansion.zero_interaction_check {
            return Ok(arts.finish(
                vec![Check::holds("nonzero_interaction", false)],
                json!({ "zero_interaction": true, "checked": false }),
            ));
        }
        if src.len() != 4 {
            return Err(CliError::Invalid(vec!["expand needs exactly four sources".into()]));
        }
        let full = g.with_store_every(1);
        let v = ctx
            .exec
            .try_map(4, |i| {
                solve_linear_with(m, &full, Forcing::Source(&src.unit_component(i)), Exec::Sequential)
            })
            .map_err(|e| CliError::context("expand", e))?;
        let v: [GridField; 4] = v.try_into().expect("four waves");
        let terms = expansion_terms(m, &nl, &v, ctx.exec).map_err(|e| CliError::context("expand", e))?;
        write_field(&mut arts, "expand_total", &terms.total)?;
        let norms = [terms.m1.norm_inf(), terms.m2.norm_inf(), terms.m3.norm_inf()];
        return Ok(arts.finish(
            vec![Check::at_most("expansion_sup", max_abs(norms), 0.0)],
            json!({ "zero_interaction": true, "checked": true, "sup_norms": norms }),
        ));
    }
    let rep = expansion_study(m, &nl, src, &g, cfg.expansion.refinements, cfg.expansion.delta, &opts)
        .map_err(|e| CliError::context("expand", e))?;
    arts.write("expand.csv", |w| {
        writeln!(w, "cells,dt,order4_error,order2_error,m1_norm,m2_norm,m3_norm,richardson_change,causality_leak")?;
        for r in &rep.rows {
            let cells: Vec<String> = r.cells.iter().map(|c| c.to_string()).collect();
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                cells.join("x"),
                r.dt,
                r.order4_error,
                r.order2_error,
                r.m1_norm,
                r.m2_norm,
                r.m3_norm,
                r.richardson_change,
                r.causality_leak
            )?;
        }
        Ok(())
    })?;
    let fin = rep.finest();
    let checks = vec![
        Check::at_most("order4_error", fin.order4_error, tol.order4),
        Check::holds("order4_error_decreasing", rep.order4_error_decreasing),
        Check::at_most("order2_error", fin.order2_error, tol.order2),
        Check::at_most(
            "causality_leak",
            rep.rows.iter().map(|r| r.causality_leak).fold(0.0, f64::max),
            tol.causality,
        ),
    ];
    Ok(arts.finish(checks, serde_json::to_value(&rep)?))
}

pub fn geodesics(ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let m = &cfg.metric;
    let gc = &cfg.geodesics;
    if gc.directions.is_empty() {
        return Err(CliError::Missing("geodesics.directions"));
    }
    let start = gc.start.clone().unwrap_or_else(|| cfg.base_point());
    let x0 = Point::new(&start);
    let paths = ctx
        .exec
        .try_map(gc.directions.len(), |k| {
            geodesic_trace(m, &x0, &Tangent::new(&gc.directions[k]), gc.s_max, gc.h)
        })
        .map_err(|e| CliError::context("geodesic trace", e))?;
    let mut arts = Artifacts::new(ctx.dir);
    let mut checks = Vec::new();
    let mut entries = Vec::new();
    for (k, p) in paths.iter().enumerate() {
        arts.write(&format!("geodesic_{k}.csv"), |w| p.write_csv(w))?;
        let defect = p.conservation_defect(m);
        checks.push(Check::at_most(
            &format!("geodesic_{k}.conservation"),
            defect,
            cfg.tolerances.conservation,
        ));
        entries.push(json!({
            "index": k,
            "character": p.character,
            "samples": p.samples.len(),
            "end": p.end().x,
            "conjugate_time": first_conjugate_time(m, p),
            "conservation_defect": defect,
        }));
    }
    Ok(arts.finish(checks, json!({ "start": start, "paths": entries })))
}

pub fn obset(ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let m = &cfg.metric;
    let oc = &cfg.observation;
    if oc.sources.is_empty() {
        return Err(CliError::Missing("observation.sources"));
    }
    let region = cfg.region();
    let reg = region
        .resolve(m)
        .map_err(|e| CliError::context("observation region", e))?;
    let ctxerr = |e| CliError::context("observation sets", e);
    let mut arts = Artifacts::new(ctx.dir);
    let mut checks = Vec::new();
    let mut entries = Vec::new();
    let mut all_nonempty = true;
    for (k, q) in oc.sources.iter().enumerate() {
        let light = light_observation_set(m, q, &region, &oc.settings, ctx.exec).map_err(ctxerr)?;
        let early = earliest_observation_set(m, q, &region, &oc.settings, ctx.exec).map_err(ctxerr)?;
        arts.write(&format!("obset_light_{k}.csv"), |w| light.write_csv(w))?;
        arts.write(&format!("obset_earliest_{k}.csv"), |w| early.write_csv(w))?;
        let nonempty = !early.no_intersection();
        all_nonempty &= nonempty;
        checks.push(Check::holds(&format!("source_{k}.nonempty"), nonempty));
        checks.push(Check::holds(
            &format!("source_{k}.inside_v"),
            early.selected().all(|p| reg.contains(&p.point)),
        ));
        if early.exact {
            let off = max_abs(early.selected().map(|p| {
                let r2: f64 = p.point[1..].iter().zip(&q[1..]).map(|(a, b)| (a - b).powi(2)).sum();
                (p.point[0] - q[0]) - r2.sqrt()
            }));
            checks.push(Check::at_most(&format!("source_{k}.on_cone"), off, cfg.tolerances.cone));
        }
        entries.push(json!({
            "source": q,
            "exact": early.exact,
            "light_points": light.points.len(),
            "earliest_points": early.selected().count(),
            "crossings": early.points.len(),
        }));
    }
    let mut matrix = None;
    if oc.sources.len() >= 2 && all_nonempty {
        let mat = distinguishability_matrix(m, &oc.sources, &region, &oc.settings, ctx.exec)
            .map_err(ctxerr)?;
        arts.write("obset_matrix.csv", |w| mat.write_csv(w))?;
        checks.push(Check::above("min_off_diagonal", mat.min_off_diagonal(), 0.0));
        matrix = Some(mat);
    }
    Ok(arts.finish(checks, json!({ "sets": entries, "distinguishability": matrix })))
}

pub fn convergence(ctx: &Ctx) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg;
    let (spec, _) = grid(cfg)?;
    let kind = match &cfg.convergence.manufactured {
        Some(solution) => ConvergenceKind::Manufactured {
            solution: solution.clone(),
        },
        None => ConvergenceKind::Nonlinear {
            nonlinearity: cfg.nonlinearity.clone().unwrap_or_else(NonlinearTerm::zero),
            source: sources(cfg)?.clone(),
        },
    };
    let scenario = ConvergenceScenario {
        metric: cfg.metric.clone(),
        grid: spec.clone(),
        kind,
    };
    let opts = cfg.solver.clone().with_exec(ctx.exec);
    let table = convergence_study(&scenario, cfg.convergence.resolutions, &opts)
        .map_err(|e| CliError::context("convergence study", e))?;
    let mut arts = Artifacts::new(ctx.dir);
    arts.write("convergence.csv", |w| {
        writeln!(w, "cells,dt,error,order")?;
        for r in &table.rows {
            let cells: Vec<String> = r.cells.iter().map(|c| c.to_string()).collect();
            let order = r.order.map_or(String::new(), |p| format!("{p:.17e}"));
            writeln!(w, "{},{:.17e},{:.17e},{}", cells.join("x"), r.dt, r.error, order)?;
        }
        Ok(())
    })?;
    let checks = vec![Check::within(
        "observed_order",
        table.observed_order,
        cfg.tolerances.order_band,
    )];
    Ok(arts.finish(checks, serde_json::to_value(&table)?))
}
