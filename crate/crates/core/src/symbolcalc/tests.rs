use super::*;
use crate::geometry::MetricSpec;
use crate::nullform::Basis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example_quad() -> CovectorQuadruple {
    let m = MetricSpec::minkowski(3);
    CovectorQuadruple::new(
        &m,
        &[0.0; 4],
        [
            Cotangent::new(&[1.0, 1.0, 0.0, 0.0]),
            Cotangent::new(&[1.0, -1.0, 0.0, 0.0]),
            Cotangent::new(&[1.0, 0.0, 1.0, 0.0]),
            Cotangent::new(&[1.0, 0.0, 0.0, 1.0]),
        ],
    )
    .unwrap()
}

pub(super) fn curved_metrics() -> Vec<(MetricSpec, Vec<f64>)> {
    vec![
        (MetricSpec::minkowski(3), vec![0.0; 4]),
        (
            MetricSpec::conformal(3, ScalarField::gaussian(0.7, vec![0.0, 0.3, -0.2], 1.0)),
            vec![0.1, 0.4, 0.0, -0.3],
        ),
        (
            MetricSpec::Product {
                d: 3,
                log_lapse: ScalarField::gaussian(0.4, vec![0.0, 0.1], 0.8),
                log_scale: ScalarField::affine(0.1, vec![0.0, 0.3, 0.0, -0.2]),
                spatial: Some(vec![
                    vec![1.2, 0.3, 0.0],
                    vec![0.3, 0.9, -0.1],
                    vec![0.0, -0.1, 1.1],
                ]),
            },
            vec![0.2, -0.1, 0.3, 0.2],
        ),
    ]
}

fn identity_form() -> QuadraticForm {
    QuadraticForm::from_matrix(&DMatrix::identity(4, 4))
}

#[test]
fn gradient_symbol_examples() {
    let m = MetricSpec::minkowski(3);
    let s = gradient_symbol(&m, &[0.0; 4], &Cotangent::new(&[1.0, 0.0, 0.0, 1.0])).unwrap();
    assert_eq!(s.re, vec![0.0; 4]);
    assert_eq!(s.im, vec![-1.0, 0.0, 0.0, 1.0]);
    let s2 = gradient_symbol(&m, &[0.0; 4], &Cotangent::new(&[2.0, 0.0, 0.0, 2.0])).unwrap();
    assert_eq!(s2.im, vec![-2.0, 0.0, 0.0, 2.0]);
    let c = MetricSpec::conformal(3, ScalarField::constant(0.3));
    let s3 = gradient_symbol(&c, &[0.0; 4], &Cotangent::new(&[1.0, 0.0, 0.0, 1.0])).unwrap();
    for (a, b) in s3.im.iter().zip(&s.im) {
        assert!((a - (-0.6f64).exp() * b).abs() < 1e-15);
    }
}

#[test]
fn example_p_is_twenty() {
    let m = MetricSpec::minkowski(3);
    let q = example_quad();
    assert_eq!(q.sum().components(), &[4.0, 0.0, 1.0, 1.0]);
    assert_eq!(q.g_star_sum(&m).unwrap(), -14.0);
    assert_eq!(interaction_p(&m, &identity_form(), &q).unwrap(), 20.0);
}

#[test]
fn p_matches_permutation_sum_route() {
    // P = Σ_σ M(ζ_k^#, ζ_l^#), evaluated term by term.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (m, x) in curved_metrics() {
        let mm = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let form = QuadraticForm::from_matrix(&mm);
        let q = sample_quadruple(&m, &x, 11, false, 100).unwrap();
        let ginv = dual_metric(&m, &x).unwrap();
        let up: Vec<DVector<f64>> = q.vectors().iter().map(|z| &ginv * z).collect();
        let mut direct = 0.0;
        for p in (0..4).permutations(4) {
            direct += up[p[2]].dot(&(&mm * &up[p[3]]));
        }
        let p = interaction_p(&m, &form, &q).unwrap();
        assert!((p - direct).abs() < 1e-11 * direct.abs().max(1.0));
    }
}

#[test]
fn example_cancellation_coefficients() {
    let m = MetricSpec::minkowski(3);
    let q = example_quad();
    assert!((coefficient_a(&m, &q).unwrap() - KAPPA_A * -14.0).abs() < 1e-12);
    assert!((coefficient_b(&m, &q).unwrap() - KAPPA_B * -14.0).abs() < 1e-12);
}

#[test]
fn m_equal_g_kills_p_on_null_sums() {
    for (m, x) in curved_metrics() {
        for seed in 0..50 {
            let q = sample_quadruple(&m, &x, seed, true, 200).unwrap();
            let p = interaction_p(&m, &QuadraticForm::metric(1.0), &q).unwrap();
            assert!(p.abs() <= 1e-10 * q.norm_squared(), "{p}");
        }
    }
}

#[test]
fn homogeneity_and_relabeling() {
    let m = MetricSpec::minkowski(3);
    let q = example_quad();
    let form = identity_form();
    let (p, a, b) = (
        interaction_p(&m, &form, &q).unwrap(),
        coefficient_a(&m, &q).unwrap(),
        coefficient_b(&m, &q).unwrap(),
    );
    for lam in [0.5, 3.0, -2.0] {
        let s = q.scaled(lam);
        assert!((interaction_p(&m, &form, &s).unwrap() - lam * lam * p).abs() < 1e-10);
        assert!((coefficient_a(&m, &s).unwrap() - lam * lam * a).abs() < 1e-9);
        assert!((coefficient_b(&m, &s).unwrap() - lam * lam * b).abs() < 1e-9);
    }
    for perm in (0..4).permutations(4) {
        let pq = q.permuted([perm[0], perm[1], perm[2], perm[3]]);
        assert!((coefficient_a(&m, &pq).unwrap() - a).abs() < 1e-10);
        assert!((coefficient_b(&m, &pq).unwrap() - b).abs() < 1e-10);
        assert!((interaction_p(&m, &form, &pq).unwrap() - p).abs() < 1e-10);
    }
}

#[test]
fn degenerate_denominator_reported() {
    let m = MetricSpec::minkowski(3);
    let q = CovectorQuadruple {
        q0: vec![0.0; 4],
        zetas: [
            Cotangent::new(&[1.0, 1.0, 0.0, 0.0]),
            Cotangent::new(&[2.0, 2.0, 0.0, 0.0]),
            Cotangent::new(&[1.0, 0.0, 1.0, 0.0]),
            Cotangent::new(&[1.0, 0.0, 0.0, 1.0]),
        ],
        orientation_flipped: false,
    };
    match coefficient_a(&m, &q) {
        Err(SymbolError::DegenerateDenominator { indices, .. }) => assert_eq!(indices, vec![0, 1]),
        other => panic!("{other:?}"),
    }
    assert!(matches!(q.validate(&m), Err(SymbolError::Dependent { .. })));
}

#[test]
fn quadruple_validation() {
    let m = MetricSpec::minkowski(3);
    let err = CovectorQuadruple::new(
        &m,
        &[0.0; 4],
        [
            Cotangent::new(&[1.0, 0.0, 0.0, 0.0]),
            Cotangent::new(&[1.0, -1.0, 0.0, 0.0]),
            Cotangent::new(&[1.0, 0.0, 1.0, 0.0]),
            Cotangent::new(&[1.0, 0.0, 0.0, 1.0]),
        ],
    );
    assert!(matches!(err, Err(SymbolError::NotNull { index: 0, .. })));
    let m2 = MetricSpec::minkowski(2);
    assert!(matches!(
        sample_quadruple(&m2, &[0.0; 3], 0, false, 10),
        Err(SymbolError::DimensionNotThree(2))
    ));
}

#[test]
fn null_sum_sampling() {
    for (m, x) in curved_metrics() {
        for seed in 0..100 {
            let q = sample_quadruple(&m, &x, seed, true, 200).unwrap();
            q.validate(&m).unwrap();
            assert!(q.g_star_sum(&m).unwrap().abs() <= 1e-10 * q.norm_squared().max(1.0));
            assert!(q.has_null_sum(&m, 1e-10).unwrap());
        }
    }
    // Reproducible from the seed.
    let m = MetricSpec::minkowski(3);
    assert_eq!(
        sample_quadruple(&m, &[0.0; 4], 5, true, 100).unwrap(),
        sample_quadruple(&m, &[0.0; 4], 5, true, 100).unwrap()
    );
}

#[test]
fn cancellation_constants_over_random_draws() {
    let mut checked = 0;
    for (m, x) in curved_metrics() {
        for seed in 0..80 {
            let q = sample_quadruple(&m, &x, 1000 + seed, false, 200).unwrap();
            let gz = q.g_star_sum(&m).unwrap();
            let a = coefficient_a(&m, &q).unwrap();
            let b = coefficient_b(&m, &q).unwrap();
            assert!((a / gz - KAPPA_A).abs() < 1e-8 * KAPPA_A, "{}", a / gz);
            assert!((b / gz - KAPPA_B).abs() < 1e-8 * KAPPA_B, "{}", b / gz);
            let qn = sample_quadruple(&m, &x, 5000 + seed, true, 200).unwrap();
            assert!(coefficient_a(&m, &qn).unwrap().abs() <= 1e-9);
            assert!(coefficient_b(&m, &qn).unwrap().abs() <= 1e-9);
            checked += 1;
        }
    }
    assert!(checked >= 200);
}

// With `G` the dual-metric matrix, `G⁻¹` is the metric matrix itself.
fn inverse_dual_form(m: &MetricSpec, x: &[f64], c: f64) -> QuadraticForm {
    QuadraticForm::from_matrix(&(m.metric(x) * c))
}

#[test]
fn rank_examples() {
    let m = MetricSpec::minkowski(3);
    let q = example_quad();
    let r = rank_certificate(&m, &identity_form(), &q).unwrap();
    assert_eq!(r.rank, 2);
    let r7 = rank_certificate(
        &m,
        &QuadraticForm::from_matrix(&(DMatrix::identity(4, 4) * 7.0)),
        &q,
    )
    .unwrap();
    assert_eq!(r7.rank, 2);
    for (m, x) in curved_metrics() {
        let q = sample_quadruple(&m, &x, 3, true, 200).unwrap();
        for c in [1.0, 2.0 / 3.0, -4.5] {
            let r = rank_certificate(&m, &inverse_dual_form(&m, &x, c), &q).unwrap();
            assert_eq!(r.rank, 1, "c = {c}, sv = {:?}", r.singular_values);
        }
    }
}

#[test]
fn witness_examples() {
    let m = MetricSpec::minkowski(3);
    let g0 = QuadraticForm::single(1.0, Basis::G { a: 0 });
    let out = nonvanishing_witness(&m, &g0, &[0.0; 4], 100, 1e-4, 7, Exec::Sequential).unwrap();
    let WitnessOutcome::Witness { quadruple, p, .. } = &out else {
        panic!("expected a witness");
    };
    assert_eq!(interaction_p(&m, &g0, quadruple).unwrap(), *p);
    assert!(quadruple.has_null_sum(&m, 1e-10).unwrap());
    let again = nonvanishing_witness(&m, &g0, &[0.0; 4], 100, 1e-4, 7, Exec::Parallel).unwrap();
    assert_eq!(out, again);
    let cert = nonvanishing_witness(&m, &QuadraticForm::metric(2.0), &[0.0; 4], 100, 1e-4, 7, Exec::Sequential)
        .unwrap();
    assert!(matches!(cert, WitnessOutcome::MNullCertificate { .. }));
    let fail = nonvanishing_witness(&m, &g0, &[0.0; 4], 3, 1e6, 7, Exec::Sequential);
    assert!(matches!(fail, Err(SymbolError::SearchFailed { attempts: 3, .. })));
}

#[test]
fn conformal_examples() {
    let m = MetricSpec::minkowski(3);
    let q = example_quad();
    let form = identity_form();
    let r = conformal_relation(&m, &ScalarField::constant(2f64.ln()), &form, &q).unwrap();
    assert!((r.ratio - 1.0 / 16.0).abs() < 1e-15);
    assert_eq!(r.exponents.net, -5);
    assert!((r.net_factor - 1.0 / 32.0).abs() < 1e-15);
    let r0 = conformal_relation(&m, &ScalarField::constant(0.0), &form, &q).unwrap();
    assert_eq!(r0.ratio, 1.0);
    assert_eq!(r0.net_factor, 1.0);
    // Same value as evaluating P under an actual conformal metric.
    let gamma = ScalarField::constant(0.37);
    let conf = MetricSpec::conformal(3, gamma.clone());
    let r1 = conformal_relation(&m, &gamma, &form, &q).unwrap();
    let direct = interaction_p(&conf, &form, &q).unwrap();
    assert!((r1.p_conformal - direct).abs() < 1e-13);
}

#[test]
fn batch_csv() {
    let m = MetricSpec::minkowski(3);
    let rows = interaction_batch(&m, &identity_form(), &[0.0; 4], &[1, 2, 3], true, Exec::Parallel);
    assert_eq!(rows.len(), 3);
    let mut buf = Vec::new();
    write_batch_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("seed,g_star_zeta,P,A,B,rank\n1,"));
    assert_eq!(text.lines().count(), 4);
}

/// Exact rational evaluation of the cancellation sums on Minkowski null
/// quadruples with rational components; this is where the constants come
/// from.
mod exact {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, Zero};

    type Q = BigRational;
    type V = [Q; 4];

    fn q(n: i64, d: i64) -> Q {
        Q::new(BigInt::from(n), BigInt::from(d))
    }

    fn gs(a: &V, b: &V) -> Q {
        -(&a[0] * &b[0]) + &a[1] * &b[1] + &a[2] * &b[2] + &a[3] * &b[3]
    }

    fn add(vs: &[&V]) -> V {
        let mut out: V = [Q::zero(), Q::zero(), Q::zero(), Q::zero()];
        for v in vs {
            for i in 0..4 {
                out[i] += &v[i];
            }
        }
        out
    }

    /// `s · (1, ω)` with `ω` the inverse stereographic image of `(p, r)`.
    fn rational_null(p: Q, r: Q, s: Q) -> V {
        let d = &p * &p + &r * &r + Q::one();
        let two = q(2, 1);
        [
            s.clone(),
            &s * &two * &p / &d,
            &s * &two * &r / &d,
            &s * (&p * &p + &r * &r - Q::one()) / &d,
        ]
    }

    fn exact_ab(z: &[V; 4]) -> (Q, Q) {
        let mut a = Q::zero();
        let mut b = Q::zero();
        let two = q(2, 1);
        let four = q(4, 1);
        for p in (0..4).permutations(4) {
            let (i, j, k, l) = (p[0], p[1], p[2], p[3]);
            let jkl = add(&[&z[j], &z[k], &z[l]]);
            let kl = add(&[&z[k], &z[l]]);
            let ij = add(&[&z[i], &z[j]]);
            let gkl = gs(&z[k], &z[l]);
            let gij = gs(&z[i], &z[j]);
            a += &two * gs(&z[i], &jkl) / gs(&jkl, &jkl) * &gkl
                + &gij / gs(&ij, &ij) * &gkl
                + &two * &gkl / gs(&kl, &kl) * gs(&z[j], &kl);
            b += &four * gs(&z[i], &jkl) / gs(&jkl, &jkl) * gs(&z[j], &kl) / gs(&kl, &kl) * &gkl
                + gs(&kl, &ij) / (gs(&kl, &kl) * gs(&ij, &ij)) * &gij * &gkl;
        }
        (a, b)
    }

    fn to_f64(x: &Q) -> f64 {
        use num_traits::ToPrimitive;
        x.to_f64().unwrap()
    }

    #[test]
    fn constants_are_seven_and_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut seen = 0;
        while seen < 25 {
            let z: [V; 4] = std::array::from_fn(|_| {
                let p = q(rng.gen_range(-9..=9), rng.gen_range(1..=5));
                let r = q(rng.gen_range(-9..=9), rng.gen_range(1..=5));
                let sign = if rng.gen_bool(0.7) { 1 } else { -1 };
                let s = q(sign * rng.gen_range(1..=7), rng.gen_range(1..=3));
                rational_null(p, r, s)
            });
            for v in &z {
                assert!(gs(v, v).is_zero());
            }
            let zeta = add(&[&z[0], &z[1], &z[2], &z[3]]);
            let gz = gs(&zeta, &zeta);
            let pairs_ok = (0..4).combinations(2).all(|c| !gs(&z[c[0]], &z[c[1]]).is_zero());
            let triples_ok = (0..4).combinations(3).all(|c| {
                let t = add(&[&z[c[0]], &z[c[1]], &z[c[2]]]);
                !gs(&t, &t).is_zero()
            });
            if gz.is_zero() || !pairs_ok || !triples_ok {
                continue;
            }
            let (a, b) = exact_ab(&z);
            assert_eq!(&a / &gz, q(KAPPA_A as i64, 1));
            assert_eq!(&b / &gz, q(KAPPA_B as i64, 1));

            // Floating-point evaluation agrees with the exact value.
            let m = MetricSpec::minkowski(3);
            let quad = CovectorQuadruple {
                q0: vec![0.0; 4],
                zetas: std::array::from_fn(|i| {
                    Cotangent::new(&z[i].iter().map(to_f64).collect::<Vec<_>>())
                }),
                orientation_flipped: false,
            };
            let scale = quad.norm_squared();
            if denominators(&m, &quad).is_ok() {
                assert!((coefficient_a(&m, &quad).unwrap() - to_f64(&a)).abs() < 1e-9 * scale);
                assert!((coefficient_b(&m, &quad).unwrap() - to_f64(&b)).abs() < 1e-9 * scale);
            }
            seen += 1;
        }
    }

    #[test]
    fn example_quadruple_exact() {
        let z: [V; 4] = [
            [q(1, 1), q(1, 1), q(0, 1), q(0, 1)],
            [q(1, 1), q(-1, 1), q(0, 1), q(0, 1)],
            [q(1, 1), q(0, 1), q(1, 1), q(0, 1)],
            [q(1, 1), q(0, 1), q(0, 1), q(1, 1)],
        ];
        let (a, b) = exact_ab(&z);
        assert_eq!(a, q(-98, 1));
        assert_eq!(b, q(-84, 1));
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn sampled_quadruples_are_valid(seed in 0u64..1_000_000, k in 0usize..3, null_sum in any::<bool>()) {
            let (m, x) = &curved_metrics()[k];
            let q = sample_quadruple(m, x, seed, null_sum, 200).unwrap();
            q.validate(m).unwrap();
            prop_assert!(denominators(m, &q).is_ok());
            if null_sum {
                prop_assert!(q.g_star_sum(m).unwrap().abs() <= 1e-10 * q.norm_squared().max(1.0));
            }
        }

        #[test]
        fn rank_one_iff_inverse_metric(seed in 0u64..100_000, k in 0usize..3, perturb in any::<bool>(), eps in 1e-3f64..1.0) {
            let (m, x) = &curved_metrics()[k];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = sample_quadruple(m, x, seed, true, 200).unwrap();
            let gm = m.metric(x);
            let c = rng.gen_range(0.2..3.0);
            let mut mm = &gm * c;
            if perturb {
                let s = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
                let s = (&s + s.transpose()) * 0.5;
                // Remove the G⁻¹ component so the perturbation is genuine.
                let s = &s - &gm * (s.dot(&gm) / gm.dot(&gm));
                let scale = eps / s.amax() * mm.amax();
                mm += s * scale;
            }
            let r = rank_certificate(m, &QuadraticForm::from_matrix(&mm), &q).unwrap();
            prop_assert_eq!(r.rank, if perturb { 2 } else { 1 }, "sv {:?}", r.singular_values);
        }

        #[test]
        fn conformal_covariance(gamma in -1.0f64..1.0, seed in 0u64..10_000) {
            let m = MetricSpec::minkowski(3);
            let q = sample_quadruple(&m, &[0.0; 4], seed, true, 200).unwrap();
            let form = QuadraticForm::single(1.0, Basis::G { a: 0 }).plus(0.5, Basis::F { a: 1, b: 2 });
            let r = conformal_relation(&m, &ScalarField::constant(gamma), &form, &q).unwrap();
            prop_assert!(r.ratio_error <= 1e-10);
            prop_assert_eq!(r.exponents.net, -5);
        }
    }
}
