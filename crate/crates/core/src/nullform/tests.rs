use super::*;
use crate::geometry::CausalCharacter;

fn catalog() -> Vec<(MetricSpec, Vec<f64>)> {
    vec![
        (MetricSpec::minkowski(3), vec![0.0, 0.0, 0.0, 0.0]),
        (
            MetricSpec::conformal(3, ScalarField::gaussian(0.6, vec![0.1, 0.2], 0.9)),
            vec![0.2, 0.1, -0.3, 0.4],
        ),
        (
            MetricSpec::Product {
                d: 3,
                log_lapse: ScalarField::gaussian(0.3, vec![0.0, 0.2], 0.7),
                log_scale: ScalarField::affine(0.0, vec![0.0, 0.2, -0.1, 0.05]),
                spatial: Some(vec![
                    vec![1.0, 0.2, 0.0],
                    vec![0.2, 1.3, 0.1],
                    vec![0.0, 0.1, 0.8],
                ]),
            },
            vec![0.3, 0.5, -0.2, 0.1],
        ),
    ]
}

fn t(v: &[f64]) -> Tangent {
    Tangent::new(v)
}

fn random_null_form(rng: &mut ChaCha8Rng, n: usize) -> (QuadraticForm, f64, Vec<(usize, usize, f64)>) {
    let c0 = rng.gen_range(-5.0..5.0);
    let mut w = QuadraticForm::metric(c0);
    let mut a = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.gen_range(-5.0..5.0);
            w = w.plus(v, Basis::E { a: i, b: j });
            a.push((i, j, v));
        }
    }
    (w, c0, a)
}

/// Random symmetric matrix that is not a multiple of `g`, scaled so its
/// distance from `span(g)` in the symmetric-coefficient norm is `eps`.
fn non_null_perturbation(rng: &mut ChaCha8Rng, g: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let n = g.nrows();
    let s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let s = (&s + s.transpose()) * 0.5;
    let proj = s.dot(g) / g.dot(g);
    let perp = &s - g * proj;
    let scale = perp.amax();
    perp * (eps / scale)
}

#[test]
fn evaluate_examples() {
    let m = MetricSpec::minkowski(3);
    let x = [0.0; 4];
    let v = t(&[1.0, 1.0, 0.0, 0.0]);
    assert_eq!(QuadraticForm::metric(1.0).eval(&m, &x, &v, &v), 0.0);
    let e01 = QuadraticForm::parse("E01").unwrap();
    let (a, b) = (t(&[1.0, 0.0, 0.0, 0.0]), t(&[0.0, 1.0, 0.0, 0.0]));
    assert_eq!(e01.eval(&m, &x, &a, &b), 1.0);
    assert_eq!(e01.eval(&m, &x, &b, &a), -1.0);
    assert_eq!(QuadraticForm::parse("G0").unwrap().eval(&m, &x, &v, &v), 1.0);
    let err = evaluate(
        &e01,
        &m,
        &x,
        &OneVector::Tangent(a),
        &OneVector::Cotangent(crate::geometry::Cotangent::new(&[0.0, 1.0, 0.0, 0.0])),
    );
    assert_eq!(err, Err(NullFormError::KindMismatch));
}

#[test]
fn grammar() {
    let w = QuadraticForm::parse("3*g + 2*E01 - 1*E23").unwrap();
    assert_eq!(w.terms.len(), 3);
    assert_eq!(w.to_string(), "3*g + 2*E01 - 1*E23");
    let w = QuadraticForm::parse(" -g+0.5 F12 + 1e-3*G3 ").unwrap();
    assert_eq!(w.terms[0].coeff, ScalarField::constant(-1.0));
    assert_eq!(w.terms[1].basis, Basis::F { a: 1, b: 2 });
    assert_eq!(w.terms[2].coeff, ScalarField::constant(1e-3));
    assert_eq!(QuadraticForm::parse("2E01").unwrap().terms[0].basis, Basis::E { a: 0, b: 1 });
    for bad in ["", "3*", "g g", "E0", "E11", "X12", "2*E0x"] {
        assert!(matches!(QuadraticForm::parse(bad), Err(NullFormError::Parse { .. })), "{bad}");
    }
}

#[test]
fn serde_forms() {
    let w: QuadraticForm = serde_json::from_str("\"g - E01\"").unwrap();
    assert_eq!(w.terms.len(), 2);
    let w: QuadraticForm = serde_json::from_str("[[1,0],[0,2]]").unwrap();
    let m = MetricSpec::minkowski(1);
    assert_eq!(w.matrix(&m, &[0.0, 0.0])[(1, 1)], 2.0);
    let back: QuadraticForm = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
    assert_eq!(back, w);
    assert!(serde_json::from_str::<QuadraticForm>("\"g + Q1\"").is_err());
}

#[test]
fn dimension_checked() {
    let m = MetricSpec::minkowski(1);
    let w = QuadraticForm::parse("E03").unwrap();
    assert!(matches!(w.check(&m), Err(NullFormError::DimensionMismatch { .. })));
}

#[test]
fn null_cone_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = MetricSpec::minkowski(3);
    for v in sample_null_cone(&m, &[0.0; 4], 20, &mut rng).unwrap() {
        assert_eq!(v[0], 1.0);
        assert!(((v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt() - 1.0).abs() < 1e-14);
    }
    // Conformal factor leaves the cone, and hence these samples, unchanged.
    let c = MetricSpec::conformal(3, ScalarField::constant(0.8));
    let mut r1 = ChaCha8Rng::seed_from_u64(9);
    let mut r2 = ChaCha8Rng::seed_from_u64(9);
    let a = sample_null_cone(&m, &[0.0; 4], 10, &mut r1).unwrap();
    let b = sample_null_cone(&c, &[0.0; 4], 10, &mut r2).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((&u.0 - &v.0).amax() < 1e-14);
    }
    for (m, x) in catalog() {
        for v in sample_null_cone(&m, &x, 50, &mut rng).unwrap() {
            let g = m.metric(&x);
            assert!(quad(&g, &v.0, &v.0).abs() <= 1e-12 * v.0.norm_squared());
            assert_eq!(
                crate::geometry::causal_character(&m, &x, &v).unwrap(),
                CausalCharacter::Null
            );
        }
    }
}

#[test]
fn degenerate_cone_reported() {
    // Riemannian "metric": no null directions.
    let m = MetricSpec::constant(&DMatrix::identity(3, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        sample_null_cone(&m, &[0.0; 3], 3, &mut rng),
        Err(NullFormError::ConeDegenerate)
    );
}

#[test]
fn null_form_examples() {
    let m = MetricSpec::minkowski(3);
    let x = [0.0; 4];
    assert!(is_null_form(&QuadraticForm::metric(1.0), &m, &x, 64));
    for (a, b) in [(0, 1), (0, 3), (1, 2), (2, 3)] {
        assert!(is_null_form(&QuadraticForm::single(1.0, Basis::E { a, b }), &m, &x, 64));
    }
    let g1 = QuadraticForm::single(1.0, Basis::G { a: 1 });
    // (1,0,1,0) is a null vector on which G1 vanishes; the sampler must find
    // one where it does not, such as (√2,1,1,0) with value 1.
    let zero = t(&[1.0, 0.0, 1.0, 0.0]);
    assert_eq!(g1.eval(&m, &x, &zero, &zero), 0.0);
    let wit = t(&[2f64.sqrt(), 1.0, 1.0, 0.0]);
    assert_eq!(g1.eval(&m, &x, &wit, &wit), 1.0);
    assert!(!is_null_form(&g1, &m, &x, 64));
    let (v, r) = null_form_witness(&g1, &m, &x, 64, 0, TOL_NULL).unwrap().unwrap();
    assert!(quad(&m.metric(&x), &v.0, &v.0).abs() < 1e-14);
    assert!((g1.eval(&m, &x, &v, &v) / v.0.norm_squared() - r).abs() < 1e-15 && r > 0.1);
}

#[test]
fn decomposition_example() {
    let m = MetricSpec::minkowski(3);
    let w = QuadraticForm::parse("3*g + 2*E01 - 1*E23").unwrap();
    let d = decompose_null_form(&w, &m, &[0.0; 4]).unwrap();
    assert_eq!(d.c0, 3.0);
    assert_eq!(d.coeff(0, 1), 2.0);
    assert_eq!(d.coeff(2, 3), -1.0);
    assert_eq!(d.coeff(3, 2), 1.0);
    assert_eq!(d.coeff(1, 2), 0.0);
    let err = decompose_null_form(&QuadraticForm::parse("G1").unwrap(), &m, &[0.0; 4]);
    assert!(matches!(err, Err(NullFormError::NotANullForm { .. })));
}

#[test]
fn pivot_not_found_for_zero_metric() {
    let m = MetricSpec::constant(&DMatrix::zeros(2, 2));
    let r = decompose_null_form(&QuadraticForm::parse("E01").unwrap(), &m, &[0.0, 0.0]);
    assert_eq!(r, Err(NullFormError::PivotNotFound));
}

#[test]
fn random_round_trip_all_metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (m, x) in catalog() {
        for _ in 0..100 {
            let (w, c0, a) = random_null_form(&mut rng, 4);
            let d = decompose_null_form(&w, &m, &x).unwrap();
            assert!((d.c0 - c0).abs() < 1e-10);
            for (i, j, v) in a {
                assert!((d.coeff(i, j) - v).abs() < 1e-10);
            }
            let rec = d.reconstruct(&m);
            let wm = w.matrix(&m, &x);
            for _ in 0..100 {
                let p = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
                let q = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
                assert!((quad(&rec, &p, &q) - quad(&wm, &p, &q)).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn pivot_independence() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for (m, x) in catalog() {
        let g = m.metric(&x);
        let (w, _, _) = random_null_form(&mut rng, 4);
        let base = decompose_null_form(&w, &m, &x).unwrap();
        for (label, gk) in sym_coefficients(&g) {
            if gk.abs() < 1e-6 {
                continue;
            }
            let d = decompose_null_form_with(&w, &m, &x, Pivot::At(label), TOL_DEC).unwrap();
            assert!((d.c0 - base.c0).abs() < 1e-9);
            for (p, q) in d.a.iter().zip(&base.a) {
                assert!((p.value - q.value).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn decomposition_agrees_with_null_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cat = catalog();
    let mut agree = 0;
    for k in 0..500 {
        let (m, x) = &cat[k % cat.len()];
        let (w, _, _) = random_null_form(&mut rng, 4);
        let w = if k % 2 == 0 {
            w
        } else {
            let eps = 10f64.powf(rng.gen_range(-3.0..0.0));
            let s = non_null_perturbation(&mut rng, &m.metric(x), eps);
            w.plus(1.0, QuadraticForm::from_matrix(&s).terms[0].basis.clone())
        };
        let dec = decompose_null_form(&w, m, x).is_ok();
        let null = is_null_form_with(&w, m, x, 64, k as u64, TOL_NULL);
        assert_eq!(dec, null, "form {k}");
        assert_eq!(dec, k % 2 == 0);
        agree += 1;
    }
    assert_eq!(agree, 500);
}

#[test]
fn classification_examples() {
    let m = MetricSpec::minkowski(3);
    let pts = vec![vec![0.0; 4], vec![0.5, 0.1, 0.2, 0.3]];
    let nl = NonlinearTerm::new(
        QuadraticForm::metric(1.0),
        QuadraticForm::metric(2.0),
        QuadraticForm::parse("G0").unwrap(),
    );
    let r = classify_nonlinearity(&nl, &m, &pts, 64, 1);
    assert!(r.satisfied, "{:?}", r.violations);
    assert_eq!(r.coefficients().unwrap(), vec![(1.0, 2.0), (1.0, 2.0)]);

    let null_m = NonlinearTerm::new(
        QuadraticForm::metric(1.0),
        QuadraticForm::metric(2.0),
        QuadraticForm::metric(1.0),
    );
    let r = classify_nonlinearity(&null_m, &m, &pts, 64, 1);
    assert!(!r.satisfied);
    assert!(r.points.iter().all(|p| p.m_is_null));

    let bad_n0 = NonlinearTerm::new(
        QuadraticForm::parse("F01").unwrap(),
        QuadraticForm::zero(),
        QuadraticForm::parse("G0").unwrap(),
    );
    let r = classify_nonlinearity(&bad_n0, &m, &pts, 64, 1);
    assert!(!r.satisfied);
    assert!(r.violations[0].contains("N0"));
    assert!(r.points[0].n0.as_ref().unwrap_err().contains("F01"));
}

#[test]
fn zero_form_is_null_with_zero_coefficient() {
    let m = MetricSpec::minkowski(1);
    let d = decompose_null_form(&QuadraticForm::zero(), &m, &[0.0, 0.0]).unwrap();
    assert_eq!(d.c0, 0.0);
    assert!(QuadraticForm::zero().is_zero());
}

mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    proptest! {
        #[test]
        fn antisymmetric_forms_always_pass(seed in 0u64..1000, k in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, x) = &catalog()[k];
            let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-3.0..3.0));
            let w = QuadraticForm::from_matrix(&(&a - a.transpose()));
            prop_assert!(is_null_form_with(&w, m, x, 60, seed, TOL_NULL));
            let d = decompose_null_form(&w, m, x).unwrap();
            prop_assert!(d.c0.abs() < 1e-12);
        }

        #[test]
        fn symmetric_perturbations_fail(seed in 0u64..1000, k in 0usize..3, eps in 1e-3f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, x) = &catalog()[k];
            let g = m.metric(x);
            let s = non_null_perturbation(&mut rng, &g, eps);
            let w = QuadraticForm::from_matrix(&(&g + s));
            prop_assert!(decompose_null_form(&w, m, x).is_err());
            prop_assert!(!is_null_form_with(&w, m, x, 60, seed, TOL_NULL));
        }

        #[test]
        fn bilinearity(seed in 0u64..1000, c in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, x) = &catalog()[2];
            let w = QuadraticForm::from_matrix(&DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0)));
            let r = |rng: &mut ChaCha8Rng| Tangent(DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0)));
            let (a, b, e) = (r(&mut rng), r(&mut rng), r(&mut rng));
            let lhs = w.eval(m, x, &(&(&a * c) + &b), &e);
            let rhs = c * w.eval(m, x, &a, &e) + w.eval(m, x, &b, &e);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
