use super::*;
use crate::geometry::MetricSpec;
use crate::nullform::{NonlinearTerm, QuadraticForm};
use crate::scalar::ScalarField;
use crate::Exec;
use approx::assert_relative_eq;

fn bump_source(t: f64, x: f64, r: f64) -> SourceComponent {
    SourceComponent {
        amplitude: 1.0,
        profile: Pulse::bump(vec![t, x], vec![r, r]),
    }
}

fn four_sources() -> SourceTerm {
    SourceTerm::new(vec![
        bump_source(0.5, -1.0, 0.25),
        bump_source(0.5, 1.0, 0.25),
        bump_source(1.2, -0.3, 0.25),
        bump_source(1.3, 0.4, 0.25),
    ])
}

fn line_grid(t_end: f64, half: f64, cells: usize, collar: usize) -> Grid {
    let m = MetricSpec::minkowski(1);
    Grid::new(&m, &GridSpec::new_1d(t_end, -half, half, cells).with_collar(collar)).unwrap()
}

fn generic_nl() -> NonlinearTerm {
    NonlinearTerm::new(
        QuadraticForm::parse("1*g + 0.5*E01").unwrap(),
        QuadraticForm::parse("0.7*g").unwrap(),
        QuadraticForm::parse("1*G0 + 0.5*G1").unwrap(),
    )
}

fn linear_waves(m: &MetricSpec, src: &SourceTerm, grid: &Grid) -> [GridField; 4] {
    let v: Vec<GridField> = (0..4)
        .map(|i| solve_linear_with(m, grid, Forcing::Source(&src.unit_component(i)), Exec::Parallel).unwrap())
        .collect();
    v.try_into().unwrap()
}

/// Final-level interior `L²` distance, `fine` sampled on the coarse lattice.
fn restricted(coarse: &GridField, fine: &GridField) -> f64 {
    let (cg, fg) = (&coarse.grid, &fine.grid);
    let mut s = 0.0;
    for node in (0..cg.n_nodes()).filter(|&n| cg.is_interior(n)) {
        let idx = cg.index(node);
        let d = coarse.last()[node] - fine.last()[fg.node([2 * idx[0], 2 * idx[1]])];
        s += d * d;
    }
    (s * cg.dx[0]).sqrt()
}

#[test]
fn gradient_of_coordinates() {
    let m = MetricSpec::minkowski(1);
    let grid = line_grid(1.0, 1.0, 40, 0);
    let t = GridField::from_fn(&grid, |y| y[0]);
    let x = GridField::from_fn(&grid, |y| y[1]);
    let gt = gradient_field(&m, &t).unwrap();
    let gx = gradient_field(&m, &x).unwrap();
    for node in [3, 20, 37] {
        for lvl in [0, grid.nt / 2, grid.nt] {
            assert_relative_eq!(gt[0].slot(lvl)[node], -1.0, epsilon = 1e-12);
            assert_relative_eq!(gt[1].slot(lvl)[node], 0.0, epsilon = 1e-12);
            assert_relative_eq!(gx[0].slot(lvl)[node], 0.0, epsilon = 1e-12);
            assert_relative_eq!(gx[1].slot(lvl)[node], 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn plane_wave_gradient_is_null_to_second_order() {
    let m = MetricSpec::minkowski(1);
    let null_norm = |cells: usize| {
        let grid = line_grid(1.0, 1.0, cells, 0);
        let u = GridField::from_fn(&grid, |y| (y[0] + y[1]).sin());
        let b = super::nonlinear::metric_pairing(&m, &u, &u).unwrap();
        let lvl = grid.nt / 2;
        (0..grid.n_nodes())
            .filter(|&n| !grid.is_boundary(n))
            .map(|n| b.slot(lvl)[n].abs())
            .fold(0.0, f64::max)
    };
    let (a, b) = (null_norm(40), null_norm(80));
    assert!(a < 1e-2, "{a}");
    let p = (a / b).log2();
    assert!((p - 2.0).abs() < 0.2, "order {p}");
}

#[test]
fn box_of_simple_fields() {
    let m = MetricSpec::minkowski(1);
    let grid = line_grid(1.0, 1.0, 50, 0);
    let t2 = apply_box(&m, &GridField::from_fn(&grid, |y| y[0] * y[0])).unwrap();
    let x2 = apply_box(&m, &GridField::from_fn(&grid, |y| y[1] * y[1])).unwrap();
    for lvl in 1..grid.nt {
        for node in 1..grid.n_nodes() - 1 {
            assert_relative_eq!(t2.slot(lvl)[node], -2.0, epsilon = 1e-9);
            assert_relative_eq!(x2.slot(lvl)[node], 2.0, epsilon = 1e-9);
        }
    }
    let wave = |cells: usize| {
        let g = line_grid(1.0, 1.0, cells, 0);
        apply_box(&m, &GridField::from_fn(&g, |y| (y[0] + y[1]).sin()))
            .unwrap()
            .norm_inf()
    };
    let (a, b) = (wave(40), wave(80));
    assert!(a < 1e-2);
    assert!(((a / b).log2() - 2.0).abs() < 0.2);
}

#[test]
fn box_matches_manufactured_operator_on_curved_metric() {
    let m = MetricSpec::conformal(1, ScalarField::gaussian(0.3, vec![0.0, 0.2], 0.7));
    let sol = Manufactured {
        center: vec![0.5, 0.1],
        radius: 0.4,
        amplitude: 1.0,
    };
    let err = |cells: usize| {
        let g = Grid::new(&m, &GridSpec::new_1d(1.0, -1.0, 1.0, cells)).unwrap();
        let b = apply_box(&m, &GridField::from_fn(&g, |y| sol.value(y))).unwrap();
        let mut e: f64 = 0.0;
        for lvl in 1..g.nt {
            for node in (0..g.n_nodes()).filter(|&n| !g.is_boundary(n)) {
                let exact = sol.box_value(&m, &g.point(lvl, node)).unwrap();
                e = e.max((b.slot(lvl)[node] - exact).abs());
            }
        }
        e
    };
    let (a, b) = (err(100), err(200));
    let p = (a / b).log2();
    assert!((p - 2.0).abs() < 0.3, "order {p} ({a:e}, {b:e})");
}

#[test]
fn zero_forcing_gives_zero() {
    let m = MetricSpec::minkowski(2);
    let grid = Grid::new(&m, &GridSpec::new_2d(0.5, [-1.0, -1.0], [1.0, 1.0], [16, 16])).unwrap();
    let u = solve_linear_with(&m, &grid, Forcing::Zero, Exec::Sequential).unwrap();
    assert_eq!(u.norm_inf(), 0.0);
    let u = solve_nonlinear(&m, &generic_nl(), &SourceTerm::new(vec![]), &grid, &SolveOptions::default())
        .unwrap();
    assert_eq!(u.norm_inf(), 0.0);
}

/// `u_tt − u_xx = −f` from rest: `u(t, x) = −½ ∫∫_{past cone} f`.
fn dalembert(src: &SourceTerm, t: f64, x: f64, n: usize) -> f64 {
    let (lo, hi) = (0.0, t);
    let ds = (hi - lo) / n as f64;
    let mut total = 0.0;
    for a in 0..n {
        let s = lo + (a as f64 + 0.5) * ds;
        let w = t - s;
        let dy = 2.0 * w / n as f64;
        let mut inner = 0.0;
        for b in 0..n {
            let y = x - w + (b as f64 + 0.5) * dy;
            inner += src.value(&[s, y]);
        }
        total += inner * dy * ds;
    }
    -0.5 * total
}

#[test]
fn linear_solve_matches_dalembert_quadrature() {
    let m = MetricSpec::minkowski(1);
    let src = SourceTerm::single(1.0, Pulse::bump(vec![0.8, 0.2], vec![0.3, 0.3]));
    let grid = line_grid(2.0, 3.0, 1200, 20);
    let u = solve_linear_with(&m, &grid, Forcing::Source(&src), Exec::Parallel).unwrap();
    let t = grid.time(grid.nt);
    let peak = (0..grid.n_nodes()).map(|n| u.last()[n].abs()).fold(0.0, f64::max);
    for x in [-1.5, -0.9, 0.0, 0.2, 0.7, 1.4] {
        let node = grid.node([((x + 3.0) / grid.dx[0]).round() as usize, 0]);
        let exact = dalembert(&src, t, grid.coords(node)[0], 800);
        let got = u.last()[node];
        assert!((got - exact).abs() <= 1e-3 * peak, "x={x}: {got} vs {exact}");
    }
}

#[test]
fn solutions_vanish_outside_the_discrete_future() {
    let m = MetricSpec::conformal(1, ScalarField::gaussian(0.3, vec![0.0, 0.2], 0.7));
    let src = four_sources();
    let grid = Grid::new(&m, &GridSpec::new_1d(2.0, -3.0, 3.0, 200).with_collar(6)).unwrap();
    let u = solve_linear_with(&m, &grid, Forcing::Source(&src), Exec::Sequential).unwrap();
    assert!(u.norm_inf() > 0.0);
    assert_eq!(causality_leak(&u, Forcing::Source(&src)).unwrap(), 0.0);
    let opts = SolveOptions::default();
    let small = src.with_amplitudes(&[0.05; 4]);
    let w = solve_nonlinear(&m, &generic_nl(), &small, &grid, &opts).unwrap();
    assert_eq!(causality_leak(&w, Forcing::Source(&small)).unwrap(), 0.0);
    let p = solve_nonlinear(&m, &generic_nl(), &small, &grid, &opts.clone().with_mode(NonlinearMode::Picard))
        .unwrap();
    assert_eq!(causality_leak(&p, Forcing::Source(&small)).unwrap(), 0.0);
}

#[test]
fn zero_nonlinearity_reproduces_linear_solve() {
    let m = MetricSpec::minkowski(1);
    let src = four_sources().with_amplitudes(&[0.1, 0.2, 0.1, 0.05]);
    let grid = line_grid(2.0, 3.0, 120, 6);
    let lin = solve_linear_with(&m, &grid, Forcing::Source(&src), Exec::Sequential).unwrap();
    let opts = SolveOptions::default().with_exec(Exec::Sequential);
    let nl = solve_nonlinear(&m, &NonlinearTerm::zero(), &src, &grid, &opts).unwrap();
    assert_eq!(lin.values, nl.values);
    let zero = solve_nonlinear(&m, &generic_nl(), &src.with_amplitudes(&[0.0; 4]), &grid, &opts).unwrap();
    assert_eq!(zero.norm_inf(), 0.0);
}

#[test]
fn quadratic_response_has_slope_two() {
    let m = MetricSpec::minkowski(1);
    let src = SourceTerm::single(1.0, Pulse::bump(vec![0.6, 0.0], vec![0.3, 0.3]));
    let grid = line_grid(2.0, 3.0, 200, 8);
    let v = solve_linear_with(&m, &grid, Forcing::Source(&src), Exec::Sequential).unwrap();
    let nl = NonlinearTerm::new(QuadraticForm::metric(1.0), QuadraticForm::zero(), QuadraticForm::zero());
    let defect = |eps: f64| {
        let u = solve_nonlinear(&m, &nl, &src.with_amplitudes(&[eps]), &grid, &SolveOptions::default()).unwrap();
        let mut d = u.clone();
        d.axpy(-eps, &v).unwrap();
        d.interior_l2()
    };
    let slope = (defect(0.04) / defect(0.02)).log2();
    assert!((slope - 2.0).abs() <= 0.1, "slope {slope}");
}

#[test]
fn picard_agrees_with_time_stepping() {
    let m = MetricSpec::minkowski(1);
    let nl = generic_nl();
    let src = four_sources().with_amplitudes(&[0.2; 4]);
    let opts = SolveOptions::default();
    let spec = GridSpec::new_1d(2.0, -3.0, 3.0, 150).with_collar(6);
    let coarse = Grid::new(&m, &spec).unwrap();
    let fine = coarse.refined(&m, 1).unwrap();
    let ts = solve_nonlinear(&m, &nl, &src, &coarse, &opts).unwrap();
    let ts_fine = solve_nonlinear(&m, &nl, &src, &fine, &opts).unwrap();
    let (pc, history) = picard(&m, &nl, Forcing::Source(&src), &coarse, &opts).unwrap();
    assert!(history.windows(2).all(|w| w[1] <= w[0]));
    let disc = restricted(&ts, &ts_fine);
    let mut s = 0.0;
    for node in (0..coarse.n_nodes()).filter(|&n| coarse.is_interior(n)) {
        let d = ts.last()[node] - pc.last()[node];
        s += d * d;
    }
    let gap = (s * coarse.dx[0]).sqrt();
    assert!(gap <= 3.0 * disc, "Picard gap {gap:e} vs discretisation {disc:e}");
}

#[test]
fn expansion_vanishes_for_trivial_nonlinearities() {
    let m = MetricSpec::minkowski(1);
    let grid = line_grid(2.0, 3.0, 80, 4);
    let v = linear_waves(&m, &four_sources(), &grid);
    let zero = expansion_terms(&m, &NonlinearTerm::zero(), &v, Exec::Sequential).unwrap();
    assert_eq!(zero.total.norm_inf(), 0.0);
    // Without N0 every term of ℳ2 and ℳ3 drops.
    let only_m = NonlinearTerm::new(
        QuadraticForm::zero(),
        QuadraticForm::metric(1.0),
        QuadraticForm::parse("G0").unwrap(),
    );
    let t = expansion_terms(&m, &only_m, &v, Exec::Sequential).unwrap();
    assert_eq!(t.m2.norm_inf(), 0.0);
    assert_eq!(t.m3.norm_inf(), 0.0);
    assert!(t.m1.norm_inf() > 0.0);
}

#[test]
fn m1_matches_brute_force_permutation_sum() {
    let m = MetricSpec::minkowski(1);
    let grid = line_grid(2.0, 3.0, 80, 4);
    let v = linear_waves(&m, &four_sources(), &grid);
    // A non-symmetric M exposes any ordering slip.
    let mform = QuadraticForm::from_rows(vec![vec![1.0, 0.3], vec![-0.8, 0.5]]).unwrap();
    let nl = NonlinearTerm::new(QuadraticForm::zero(), QuadraticForm::zero(), mform.clone());
    let grads: Vec<Vec<GridField>> = v.iter().map(|f| gradient_field(&m, f).unwrap()).collect();
    let mut src = GridField::zeros(&grid);
    for p in permutations4() {
        let [i, j, k, l] = p;
        for lvl in 0..=grid.nt {
            for node in 0..grid.n_nodes() {
                let y = grid.point(lvl, node);
                let w = mform.matrix(&m, &y);
                let mut q = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        q += w[(a, b)] * grads[k][a].slot(lvl)[node] * grads[l][b].slot(lvl)[node];
                    }
                }
                src.slot_mut(lvl)[node] -= v[i].slot(lvl)[node] * v[j].slot(lvl)[node] * q;
            }
        }
    }
    let brute = solve_linear(&m, &src, &grid, Exec::Sequential).unwrap();
    let terms = expansion_terms(&m, &nl, &v, Exec::Sequential).unwrap();
    let rel = terms.m1.interior_relative_error(&brute).unwrap();
    assert!(rel < 1e-10, "{rel:e}");
}

#[test]
fn m1_term_bookkeeping() {
    let perms = permutations4();
    assert_eq!(perms.len(), 24);
    let distinct = m1_distinct_terms();
    assert_eq!(distinct.len(), 12);
    assert_eq!(distinct.iter().map(|d| d.1).sum::<usize>(), 24);
    for ([i, j, _, _], mult) in distinct {
        assert!(i < j);
        assert_eq!(mult, 2);
    }
}

#[test]
fn expansion_is_symmetric_under_relabeling() {
    let m = MetricSpec::minkowski(1);
    let grid = line_grid(2.0, 3.0, 80, 4);
    let src = four_sources();
    let v = linear_waves(&m, &src, &grid);
    let nl = generic_nl();
    let base = expansion_terms(&m, &nl, &v, Exec::Parallel).unwrap();
    let [a, b, c, d] = v;
    let swapped = expansion_terms(&m, &nl, &[c, a, d, b], Exec::Parallel).unwrap();
    let rel = swapped.total.interior_relative_error(&base.total).unwrap();
    assert!(rel < 1e-10, "{rel:e}");
}

#[test]
fn linear_mixed_difference_is_pure_cancellation() {
    let m = MetricSpec::minkowski(1);
    let grid = line_grid(2.0, 3.0, 80, 4);
    let src = four_sources();
    let opts = SolveOptions::default();
    let lin = NonlinearTerm::zero();
    match mixed_difference(&m, &lin, &src, &grid, &[0, 1], 0.01, &opts, false) {
        Err(SolverError::CancellationLoss { order: 2, .. }) => {}
        other => panic!("expected cancellation loss, got {other:?}"),
    }
    let d = mixed_difference(&m, &lin, &src, &grid, &[0, 1], 0.01, &opts, true).unwrap();
    assert!(d.estimate.norm_inf() < 1e-8);
}

#[test]
fn order_two_difference_matches_reference() {
    let m = MetricSpec::minkowski(1);
    let grid = line_grid(2.0, 3.0, 200, 6);
    let src = four_sources();
    let nl = generic_nl();
    let v = linear_waves(&m, &src, &grid);
    let reference = order2_reference(&m, &nl, &v[0], &v[1], Exec::Parallel).unwrap();
    let d = mixed_difference(&m, &nl, &src, &grid, &[0, 1], 0.05, &SolveOptions::default(), false).unwrap();
    let rel = d.estimate.interior_relative_error(&reference).unwrap();
    assert!(rel < 5e-2, "{rel:e}");
}

#[test]
fn mixed_difference_rejects_bad_requests() {
    let m = MetricSpec::minkowski(1);
    let grid = line_grid(1.0, 3.0, 40, 2);
    let src = four_sources();
    let opts = SolveOptions::default();
    let nl = generic_nl();
    for idx in [vec![0, 1, 2], vec![0, 0], vec![0, 7]] {
        assert!(matches!(
            mixed_difference(&m, &nl, &src, &grid, &idx, 0.01, &opts, false),
            Err(SolverError::InvalidSource(_))
        ));
    }
}

#[test]
fn manufactured_convergence_at_halved_courant() {
    let m = MetricSpec::conformal(1, ScalarField::gaussian(0.3, vec![0.0, 0.2], 0.7));
    for cfl in [0.5, 0.25] {
        let scn = ConvergenceScenario {
            metric: m.clone(),
            grid: GridSpec::new_1d(1.0, -1.5, 1.5, 128).with_collar(4).with_cfl(cfl),
            kind: ConvergenceKind::Manufactured {
                solution: Manufactured {
                    center: vec![1.0, 0.1],
                    radius: 0.8,
                    amplitude: 1.0,
                },
            },
        };
        let tab = convergence_study(&scn, 3, &SolveOptions::default()).unwrap();
        assert!((1.7..=2.3).contains(&tab.observed_order), "{tab:?}");
        assert!(tab.courant <= cfl + 1e-12);
    }
}

#[test]
fn nonlinear_self_convergence() {
    let scn = ConvergenceScenario {
        metric: MetricSpec::minkowski(1),
        grid: GridSpec::new_1d(2.0, -3.0, 3.0, 100).with_collar(4),
        kind: ConvergenceKind::Nonlinear {
            nonlinearity: generic_nl(),
            source: four_sources().with_amplitudes(&[0.2; 4]),
        },
    };
    let tab = convergence_study(&scn, 4, &SolveOptions::default()).unwrap();
    assert!((1.7..=2.3).contains(&tab.observed_order), "{tab:?}");
}

#[test]
fn field_files_round_trip() {
    let m = MetricSpec::minkowski(2);
    let grid = Grid::new(
        &m,
        &GridSpec::new_2d(0.3, [-1.0, -0.5], [1.0, 0.5], [8, 4]).with_store_every(3),
    )
    .unwrap();
    let u = GridField::from_fn(&grid, |y| y[0] + 2.0 * y[1] - y[2]);
    let mut bytes = Vec::new();
    u.write_binary(&mut bytes).unwrap();
    assert_eq!(&bytes[..8], FIELD_MAGIC);
    let snap = FieldSnapshot::read(bytes.as_slice()).unwrap();
    assert_eq!(snap, u.snapshot());
    assert_eq!(snap.shape, vec![9, 5]);
    assert_eq!(snap.levels, u.levels);

    bytes[8] = 9;
    assert!(matches!(FieldSnapshot::read(bytes.as_slice()), Err(SolverError::Format(_))));
    assert!(FieldSnapshot::read(&b"NWFIELD"[..]).is_err());

    let mut csv = Vec::new();
    u.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,value"));
    assert_eq!(lines.count(), u.levels.len() * grid.n_nodes());
}

#[test]
fn guards_and_limits() {
    let m = MetricSpec::minkowski(1);
    assert!(matches!(
        Grid::new(&m, &GridSpec::new_1d(1.0, -1.0, 1.0, 20).with_cfl(0.95)),
        Err(SolverError::CourantViolation { .. })
    ));
    let mut spec = GridSpec::new_1d(1.0, -1.0, 1.0, 20);
    spec.dt = Some(0.2);
    assert!(matches!(Grid::new(&m, &spec), Err(SolverError::CourantViolation { .. })));
    assert!(matches!(
        Grid::new(&MetricSpec::minkowski(3), &GridSpec::new_1d(1.0, -1.0, 1.0, 20)),
        Err(SolverError::UnsupportedMetric(_)) | Err(SolverError::InvalidGrid(_))
    ));

    let grid = line_grid(2.0, 3.0, 100, 4);
    let src = four_sources().with_amplitudes(&[0.2; 4]);
    let opts = SolveOptions {
        divergence_guard: 1e-4,
        ..SolveOptions::default()
    };
    assert!(matches!(
        solve_nonlinear(&m, &generic_nl(), &src, &grid, &opts),
        Err(SolverError::DivergenceDetected { .. })
    ));
    assert!(matches!(
        solve_nonlinear(&m, &generic_nl(), &four_sources(), &grid, &SolveOptions::default()),
        Err(SolverError::AmplitudeGuard { .. })
    ));
    let early = SourceTerm::single(0.1, Pulse::bump(vec![0.0, 0.0], vec![0.2, 0.2]));
    assert!(matches!(
        solve_nonlinear(&m, &generic_nl(), &early, &grid, &SolveOptions::default()),
        Err(SolverError::SourceTooEarly { .. })
    ));
}

#[test]
fn null_self_interaction_is_negligible_for_a_progressing_pulse() {
    let m = MetricSpec::minkowski(1);
    let src = SourceTerm::single(
        0.1,
        Pulse::Progressing {
            t_on: 0.2,
            ramp: 0.4,
            x0: -2.0,
            width: 0.3,
            direction: 1.0,
        },
    );
    let grid = line_grid(4.0, 3.0, 600, 20);
    let null = self_interaction_energy(&m, &QuadraticForm::metric(1.0), &src, &grid, Exec::Parallel).unwrap();
    let generic = self_interaction_energy(&m, &QuadraticForm::parse("G0").unwrap(), &src, &grid, Exec::Parallel)
        .unwrap();
    assert!(generic > 0.0);
    assert!(null / generic <= 1e-2, "{}", null / generic);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn linear_solve_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, x1 in -1.0f64..1.0, x2 in -1.0f64..1.0) {
            let m = MetricSpec::conformal(1, ScalarField::gaussian(0.2, vec![0.5, 0.0], 0.6));
            let grid = Grid::new(&m, &GridSpec::new_1d(1.5, -2.0, 2.0, 60).with_collar(3)).unwrap();
            let f = SourceTerm::single(1.0, Pulse::bump(vec![0.5, x1], vec![0.2, 0.3]));
            let g = SourceTerm::single(1.0, Pulse::bump(vec![0.7, x2], vec![0.3, 0.2]));
            let both = SourceTerm::new(vec![
                SourceComponent { amplitude: a, profile: f.components[0].profile.clone() },
                SourceComponent { amplitude: b, profile: g.components[0].profile.clone() },
            ]);
            let solve = |s: &SourceTerm| solve_linear_with(&m, &grid, Forcing::Source(s), Exec::Sequential).unwrap();
            let mut lhs = solve(&f).scaled(a);
            lhs.axpy(b, &solve(&g)).unwrap();
            let rhs = solve(&both);
            let scale = rhs.norm_inf().max(lhs.norm_inf()).max(1e-300);
            let diff = lhs.sub(&rhs).unwrap().norm_inf();
            prop_assert!(diff <= 1e-12 * scale);
        }

        #[test]
        fn no_leak_for_random_placements(t0 in 0.3f64..1.0, x0 in -1.0f64..1.0, r in 0.1f64..0.25) {
            let m = MetricSpec::minkowski(1);
            let grid = line_grid(1.5, 2.0, 60, 3);
            let src = SourceTerm::single(0.2, Pulse::bump(vec![t0, x0], vec![r, r]));
            let u = solve_nonlinear(&m, &generic_nl(), &src, &grid, &SolveOptions::default()).unwrap();
            prop_assert_eq!(causality_leak(&u, Forcing::Source(&src)).unwrap(), 0.0);
        }
    }
}
