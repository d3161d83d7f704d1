use super::*;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn flat2() -> ChartMetric {
    let samples = vec![vec![0.0, 0.0], vec![1.0, -1.0]];
    ChartMetric::flat(2)
        .schouten_override(&["0", "0", "0"], &samples)
        .unwrap()
}

fn minkowski2() -> ChartMetric {
    let samples = vec![vec![0.0, 0.0], vec![1.0, -1.0]];
    ChartMetric::minkowski(2)
        .schouten_override(&["0", "0", "0"], &samples)
        .unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rational_circle() -> CurveSpec {
    CurveSpec::parse(flat2(), &["(1 - t^2)/(1 + t^2)", "2*t/(1 + t^2)"]).unwrap()
}

fn rational_circle_at(t: f64) -> [f64; 2] {
    [(1.0 - t * t) / (1.0 + t * t), 2.0 * t / (1.0 + t * t)]
}

fn arclength_circle(r: f64) -> CurveSpec {
    CurveSpec::parse(flat2(), &[&format!("{r}*cos(t/{r})"), &format!("{r}*sin(t/{r})")]).unwrap()
}

/// Great circle through the poles of the polar S³ chart, parametrized as
/// the stereographic image of a line through the origin.
fn s3_great_circle() -> CurveSpec {
    CurveSpec::parse(
        ChartMetric::round_sphere_polar(3),
        &["pi/2", "pi/2", "2*atan(t)"],
    )
    .unwrap()
}

#[test]
fn alpha_examples() {
    let line = CurveSpec::parse(flat2(), &["t", "0"]).unwrap();
    assert_eq!(alpha_from_curve(line.chart(), &line.jets(0.3).unwrap()).unwrap(), vec![0.0, 0.0]);

    let c = arclength_circle(1.0);
    for t in [0.0, 0.4, 2.0] {
        let k = c.kinematics(t).unwrap();
        let a = k.alpha_sharp().unwrap();
        assert!((a[0] + t.cos()).abs() < 1e-14 && (a[1] + t.sin()).abs() < 1e-14);
        assert_relative_eq!(k.dot(&a, &a), 1.0, epsilon = 1e-14);
    }
}

#[test]
fn alpha_under_rescaling_matches_lambda_derivative() {
    let base = rational_circle();
    let fast = base.reparametrize(&Expr::parse("2*t", &["t"]).unwrap()).unwrap();
    for t in [-0.6, 0.1, 0.35] {
        let k = base.kinematics(2.0 * t).unwrap();
        let kf = fast.kinematics(t).unwrap();
        // α^♯ is unchanged, α(γ̇) doubles, λ doubles.
        let (a, af) = (k.alpha_sharp().unwrap(), kf.alpha_sharp().unwrap());
        assert!((a[0] - af[0]).abs() < 1e-13 && (a[1] - af[1]).abs() < 1e-13);
        let alpha_v = |k: &Kinematics| {
            let a = k.alpha().unwrap();
            a[0] * k.v[0] + a[1] * k.v[1]
        };
        assert_relative_eq!(alpha_v(&kf), 2.0 * alpha_v(&k), epsilon = 1e-13);
        for k in [&k, &kf] {
            assert!((k.lambda_dot().unwrap() + k.lambda() * alpha_v(k)).abs() < 1e-13);
        }
    }
}

#[test]
fn null_velocity_is_rejected() {
    let null = CurveSpec::parse(minkowski2(), &["t", "t"]).unwrap();
    let jets = null.jets(0.5).unwrap();
    assert_eq!(alpha_from_curve(null.chart(), &jets), Err(Error::NullVelocity { t: 0.5 }));
    assert_eq!(cg_residual_third_order(null.chart(), &jets), Err(Error::NullVelocity { t: 0.5 }));
}

#[test]
fn first_order_rhs_examples() {
    let s = CGState::new(0.0, vec![0.3, 0.1], vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
    let d = cg_rhs_first_order(&flat2(), &s).unwrap();
    assert_eq!((d.v, d.a), (vec![0.0, 0.0], vec![0.0, 0.0]));

    let s = CGState::new(0.0, vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
    let d = cg_rhs_first_order(&minkowski2(), &s).unwrap();
    assert_eq!((d.v, d.a), (vec![0.0, 0.0], vec![0.0, 0.0]));

    assert!(matches!(
        cg_rhs_first_order(&ChartMetric::flat(2), &s),
        Err(Error::UnsupportedSchouten)
    ));
}

#[test]
fn great_circle_on_s3_solves_the_system() {
    let c = s3_great_circle();
    for t0 in [-0.7, 0.0, 0.4] {
        let s = CGState::from_curve(&c, t0).unwrap();
        let d = cg_rhs_first_order(c.chart(), &s).unwrap();
        let jets = c.jets(t0).unwrap();
        for i in 0..3 {
            assert!((d.v[i] - jets.d[2][i]).abs() < 1e-9, "v' component {i}");
        }
        // a' against a five-point difference of α along the curve.
        let h = 1e-3;
        let a_at = |t: f64| CGState::from_curve(&c, t).unwrap().a;
        let (m2, m1, p1, p2) = (a_at(t0 - 2.0 * h), a_at(t0 - h), a_at(t0 + h), a_at(t0 + 2.0 * h));
        for i in 0..3 {
            let fd = (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * h);
            assert!((d.a[i] - fd).abs() < 1e-9, "a' component {i}: {} vs {fd}", d.a[i]);
        }
        let r = c.kinematics(t0).unwrap().cg_residual().unwrap();
        assert!(norm(&r) < 1e-12);
    }
}

#[test]
fn third_order_residual_examples() {
    let line = CurveSpec::parse(flat2(), &["t", "0"]).unwrap();
    assert_eq!(norm(&line.kinematics(1.0).unwrap().cg_residual().unwrap()), 0.0);

    let c = rational_circle();
    for t in [-1.0, 0.0, 0.5, 2.0] {
        assert!(norm(&cg_residual_third_order(c.chart(), &c.jets(t).unwrap()).unwrap()) < 1e-9);
    }

    for r in [1.0, 2.0, 0.5] {
        let c = arclength_circle(r);
        for t in [0.0, 0.3, 1.7] {
            let k = c.kinematics(t).unwrap();
            let res = k.cg_residual().unwrap();
            for i in 0..2 {
                assert!((res[i] - k.v[i] / (2.0 * r * r)).abs() < 1e-12);
            }
        }
    }
    let res = arclength_circle(1.0).kinematics(0.0).unwrap().cg_residual().unwrap();
    assert!((norm(&res) - 0.5).abs() < 1e-12);
}

#[test]
fn integrates_a_straight_line() {
    let s = CGState::new(0.0, vec![0.0, 0.0], vec![1.0, 0.5], vec![0.0, 0.0]).unwrap();
    let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
    let tr = integrate_cg(&flat2(), &s, &times, &Options::default()).unwrap();
    for smp in &tr.samples {
        let t = smp.state.t;
        assert!((smp.state.gamma[0] - t).abs() < 1e-12);
        assert!((smp.state.gamma[1] - 0.5 * t).abs() < 1e-12);
    }
}

#[test]
fn reproduces_the_rational_circle() {
    let s = CGState::new(0.0, vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 0.0]).unwrap();
    assert_eq!(CGState::from_curve(&rational_circle(), 0.0).unwrap(), s);
    let times: Vec<f64> = (0..=60).map(|i| -3.0 + 0.1 * i as f64).collect();
    let tr = integrate_cg(&flat2(), &s, &times, &Options::with_tol(1e-10)).unwrap();
    let mut max_err = 0.0f64;
    for smp in &tr.samples {
        let want = rational_circle_at(smp.state.t);
        max_err = max_err.max((smp.state.gamma[0] - want[0]).abs().max((smp.state.gamma[1] - want[1]).abs()));
        assert!(smp.residual_norm.unwrap() < 1e-7);
    }
    assert!(max_err < 1e-8, "max error {max_err}");

    let third = integrate_cg_third_order(&flat2(), 0.0, &[1.0, 0.0], &[0.0, 2.0], &[-4.0, 0.0], &times, &Options::with_tol(1e-10)).unwrap();
    for (a, b) in tr.samples.iter().zip(&third) {
        assert_eq!(a.state.t, b.t);
        for i in 0..2 {
            assert!((a.state.gamma[i] - b.gamma[i]).abs() < 1e-7);
        }
    }
}

#[test]
fn null_trajectory_stays_null() {
    let chart = ChartMetric::minkowski(3);
    let s = CGState::new(0.0, vec![0.0; 3], vec![1.0, 1.0, 0.0], vec![0.0, 0.1, 0.3]).unwrap();
    let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.2).collect();
    let tr = integrate_cg(&chart, &s, &times, &Options::default()).unwrap();
    for smp in &tr.samples {
        let v = &smp.state.v;
        assert!((-v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).abs() < 1e-9);
        assert!(smp.residual_norm.is_none());
    }
}

#[test]
fn causal_monitor_flags_sign_changes() {
    let chart = ChartMetric::minkowski(2);
    let spacelike = CausalMonitor { start: Causal::Spacelike };
    assert!(spacelike.check(&chart, 0.0, &[0.0, 0.0], &[0.5, 1.0]).is_ok());
    assert_eq!(
        spacelike.check(&chart, 1.5, &[0.0, 0.0], &[1.0, 0.5]),
        Err(Error::CausalFlip { t: 1.5 })
    );
    let null = CausalMonitor { start: Causal::Null };
    assert!(null.check(&chart, 0.0, &[0.0, 0.0], &[1.0, 1.0 + 1e-8]).is_ok());
    assert!(null.check(&chart, 0.0, &[0.0, 0.0], &[1.0, 1.001]).is_err());
}

#[test]
fn causal_character_is_preserved_along_integration() {
    // |v|² obeys N' = −2α(v)N, so a timelike start stays timelike even when
    // α steers the velocity towards the light cone.
    let chart = ChartMetric::minkowski(3);
    let s = CGState::new(0.0, vec![0.0; 3], vec![1.0, 0.5, 0.0], vec![0.0, 2.0, 0.0]).unwrap();
    let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
    let tr = integrate_cg(&chart, &s, &times, &Options::default()).unwrap();
    for smp in &tr.samples {
        let v = &smp.state.v;
        assert!(-v[0] * v[0] + v[1] * v[1] + v[2] * v[2] < 0.0);
    }
}

#[test]
fn reparametrization_examples() {
    let line = CurveSpec::parse(flat2(), &["t", "0"]).unwrap();
    let samples: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
    let shift = Expr::parse("t + 1", &["t"]).unwrap();
    let r = reparametrization_check(&line, &shift, &samples).unwrap();
    assert_eq!(r.output_max_residual, 0.0);

    let inv = Mobius::new(0.0, 1.0, 1.0, 3.0).unwrap().to_expr();
    let r = reparametrization_check(&line, &inv, &samples).unwrap();
    assert!(r.output_max_residual < 1e-8);

    let cubic = Expr::parse("t^3 + t", &["t"]).unwrap();
    let r = reparametrization_check(&line, &cubic, &samples).unwrap();
    assert!(r.output_max_residual > 1e-2);

    let err = reparametrization_check(&arclength_circle(1.0), &shift, &samples).unwrap_err();
    assert!(matches!(err, Error::NotConformalGeodesic { .. }));
}

#[test]
fn trajectory_csv_layout() {
    let s = CGState::new(0.0, vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
    let tr = integrate_cg(&flat2(), &s, &[0.0, 1.0], &Options::default()).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,gamma1,gamma2,v1,v2,a1,a2,residual_norm");
    assert_eq!(lines.count(), 2);
}

/// Closed-form conformal geodesics used as random test curves: Möbius
/// images `t ↦ p + (a t + b)/(c t + d) w` of lines in flat ℝ².
fn random_flat_cg() -> impl Strategy<Value = (CurveSpec, f64)> {
    (
        proptest::array::uniform2(-1.0f64..1.0),
        proptest::array::uniform2(-1.0f64..1.0),
        proptest::array::uniform4(-2.0f64..2.0),
    )
        .prop_filter_map("degenerate", |(p, w, m)| {
            let [a, b, c, d] = m;
            let det = a * d - b * c;
            if det.abs() < 0.3 || w[0].hypot(w[1]) < 0.3 || d.abs() < 0.3 + c.abs() {
                return None;
            }
            let f = format!("(({a})*t + ({b}))/(({c})*t + ({d}))");
            let curve = CurveSpec::parse(
                flat2(),
                &[&format!("{} + ({}) * {f}", p[0], w[0]), &format!("{} + ({}) * {f}", p[1], w[1])],
            )
            .ok()?;
            Some((curve, 0.0))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn integrated_trajectories_keep_invariants((curve, t0) in random_flat_cg()) {
        let s0 = CGState::from_curve(&curve, t0).unwrap();
        let times: Vec<f64> = (0..=8).map(|i| -0.4 + 0.1 * i as f64).collect();
        let opts = Options { land_on_samples: true, ..Options::with_tol(1e-12) };
        let tr = integrate_cg(curve.chart(), &s0, &times, &opts).unwrap();
        for smp in &tr.samples {
            let st = &smp.state;
            let want = curve.point(st.t).unwrap();
            prop_assert!((st.gamma[0] - want[0]).abs() < 1e-8 && (st.gamma[1] - want[1]).abs() < 1e-8);
            prop_assert!(smp.residual_norm.unwrap() < 1e-7 * (1.0 + norm(&st.v).powi(3)));
            let (lambda, lambda_dot) = lambda_from_state(curve.chart(), st).unwrap();
            let alpha_v: f64 = st.a.iter().zip(&st.v).map(|(a, v)| a * v).sum();
            prop_assert!((lambda_dot + lambda * alpha_v).abs() < 1e-7 * (1.0 + lambda * lambda));
        }
    }

    #[test]
    fn mobius_reparametrization_preserves_cg(m in proptest::array::uniform4(-2.0f64..2.0)) {
        let [a, b, c, d] = m;
        prop_assume!((a * d - b * c).abs() > 0.2);
        // Pole well outside [0, 1].
        prop_assume!(c.abs() < 1e-9 || { let p = -d / c; !(-0.5..=1.5).contains(&p) });
        let f = Mobius::new(a, b, c, d).unwrap();
        prop_assert!(schwarzian_is_zero(&f));
        let samples: Vec<f64> = (0..=5).map(|i| i as f64 * 0.2).collect();
        let r = reparametrization_check(&s3_great_circle(), &f.to_expr(), &samples).unwrap();
        prop_assert!(r.output_max_residual < 1e-6, "{}", r.output_max_residual);
    }
}

#[test]
fn second_lambda_identity_along_s3_trajectory() {
    // A great circle traversed with a non-affine projective parameter.
    let chart = ChartMetric::round_sphere_polar(3);
    let c = CurveSpec::parse(chart.clone(), &["pi/2", "pi/2", "2*atan(3*t/(t + 2))"]).unwrap();
    let s0 = CGState::from_curve(&c, 0.0).unwrap();
    let h = 1e-3;
    let centres = [-0.3, 0.0, 0.25];
    let mut times: Vec<f64> = centres
        .iter()
        .flat_map(|&t| (-2..=2).map(move |k| t + k as f64 * h))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let opts = Options { land_on_samples: true, ..Options::with_tol(1e-12) };
    let tr = integrate_cg(&chart, &s0, &times, &opts).unwrap();
    let lam_dot: Vec<f64> = tr.states().map(|s| lambda_from_state(&chart, s).unwrap().1).collect();
    for &tc in &centres {
        let i = times.iter().position(|&t| (t - tc).abs() < 1e-15).unwrap();
        let fd = (lam_dot[i - 2] - 8.0 * lam_dot[i - 1] + 8.0 * lam_dot[i + 1] - lam_dot[i + 2]) / (12.0 * h);
        let want = lambda_second_derivative(&chart, &tr.samples[i].state).unwrap();
        assert!((fd - want).abs() < 1e-6, "t={tc}: {fd} vs {want}");
        // The predicted value also matches the exact curve.
        let k = c.kinematics(tc).unwrap();
        assert!((k.lambda_dot().unwrap() - lam_dot[i]).abs() < 1e-7);
    }
}

#[test]
fn lambda_second_derivative_hand_value() {
    // Rational circle at t = 0: λ = 2, λ'' = −4 (λ = 2/(1+t²)).
    let s = CGState::new(0.0, vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 0.0]).unwrap();
    let (l, ld) = lambda_from_state(&flat2(), &s).unwrap();
    assert_eq!((l, ld), (2.0, 0.0));
    assert!((lambda_second_derivative(&flat2(), &s).unwrap() + 4.0).abs() < 1e-14);
}
