use approx::assert_abs_diff_eq;
use loewner::driving::DrivingSpec;
use loewner::ode_engine::IntegratorConfig;
use loewner::real_line::*;
use loewner::signal::Signal;
use proptest::prelude::*;

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

/// Roots of `x² − c x + 4`, the fixed points of the constant-frame equation.
fn phase_roots(c: f64) -> Option<(f64, f64)> {
    let disc = c * c - 16.0;
    (disc >= 0.0).then(|| ((c - disc.sqrt()) / 2.0, (c + disc.sqrt()) / 2.0))
}

#[test]
fn frame_time_change_inverts() {
    let fr = FrameMap::new(2.5, 1.0, 1.0).unwrap();
    for t in [0.0, 0.3, 1.7, 2.4999] {
        assert_abs_diff_eq!(fr.t_of_s(fr.s_of_t(t)), t, epsilon = 1e-12);
    }
    assert_eq!(FrameMap::sigma(0.0), 0.0);
}

#[test]
fn frame_drivings_of_simple_families() {
    let q = DrivingSpec::sqrt_approach(3.7, 2.0).unwrap();
    let fr = FrameMap::for_driving(&q, 2.0, 1.0).unwrap();
    assert_eq!(to_holder_frame(&q, &fr).as_constant(), Some(3.7));

    let z = DrivingSpec::constant(0.0, 1.0).unwrap();
    let fr = FrameMap::for_driving(&z, 1.0, 1.0).unwrap();
    assert_eq!(to_holder_frame(&z, &fr).eval(3.0), 0.0);

    let l = DrivingSpec::linear(1.0, 0.0, 1.0).unwrap();
    let fr = FrameMap::for_driving(&l, 1.0, 1.0).unwrap();
    let xi = to_holder_frame(&l, &fr);
    for s in [0.0, 0.5, 3.0, 40.0, 300.0] {
        assert_abs_diff_eq!(xi.eval(s), (-s).exp(), epsilon = 1e-14 * (-s).exp().max(1e-300));
    }
}

#[test]
fn frame_round_trip_for_the_zoo() {
    let zoo = [
        DrivingSpec::sqrt_approach(4.0, 1.0).unwrap(),
        DrivingSpec::weierstrass_partial(0.3, 9.0, 4, 1.0).unwrap(),
        DrivingSpec::brownian(2.0, 3, None, 1.0).unwrap(),
        DrivingSpec::sharp_example(1.5, None, None, 1.0).unwrap(),
        DrivingSpec::linear(-1.0, 0.5, 1.0).unwrap(),
        DrivingSpec::sampled(vec![0.0, 0.4, 1.0], vec![0.0, 1.0, -0.5], 1.0).unwrap(),
    ];
    for spec in &zoo {
        for d in [1.0, -1.0] {
            let fr = FrameMap::for_driving(spec, 1.0, d).unwrap();
            let xi = to_holder_frame(spec, &fr);
            for i in 0..=200 {
                let t = (1.0 - 1e-6) * i as f64 / 200.0;
                let back = from_holder_frame(&xi, &fr, t);
                assert!((back - spec.at(t)).abs() < 1e-8, "{} at {t}", spec.family_name());
            }
        }
    }
}

#[test]
fn real_equation_examples() {
    let z = DrivingSpec::constant(0.0, 10.0).unwrap();
    let (p, r) = solve_rle(&z, 1.0, 10.0, &cfg()).unwrap();
    assert_eq!(r.status, CaptureStatus::Escaped);
    assert_abs_diff_eq!(p.last()[0], 41f64.sqrt(), epsilon = 1e-8);

    // Constant frame 4: x ≡ 2 is the fixed point, so X0 = λ(1) − 2 = 2 is captured at 1.
    let q4 = DrivingSpec::sqrt_approach(4.0, 1.0).unwrap();
    let (_, r) = solve_rle(&q4, 2.0, 1.0, &cfg()).unwrap();
    assert_eq!(r.status, CaptureStatus::Captured);
    assert!((r.capture_time.unwrap() - 1.0).abs() < 1e-6, "{r:?}");

    // Frame 3 has no positive fixed point: nothing is captured.
    assert!(phase_roots(3.0).is_none());
    let q3 = DrivingSpec::sqrt_approach(3.0, 1.0).unwrap();
    for x0 in [0.5, 1.0, 2.0] {
        let (p, r) = solve_rle(&q3, x0, 1.0, &cfg()).unwrap();
        assert_eq!(r.status, CaptureStatus::Escaped, "{x0}");
        assert!(p.last()[0] - 3.0 > 0.0);
    }
    assert!(solve_rle(&q3, 0.0, 1.0, &cfg()).is_err());
    assert!(solve_rle(&q3, 1.0, 1.5, &cfg()).is_err());
}

#[test]
fn real_solutions_are_monotone() {
    let w = DrivingSpec::weierstrass_partial(0.5, 9.0, 3, 1.0).unwrap();
    let (p, _) = solve_rle(&w, 2.0, 1.0, &cfg()).unwrap();
    assert!(p.values.windows(2).all(|v| v[1][0] > v[0][0]));
    let (p, _) = solve_rle(&w, -2.0, 1.0, &cfg()).unwrap();
    assert!(p.values.windows(2).all(|v| v[1][0] < v[0][0]));
}

#[test]
fn frame_equation_examples() {
    let (lo, hi) = phase_roots(5.0).unwrap();
    assert_eq!((lo, hi), (1.0, 4.0));
    let five = Signal::constant(5.0);
    let (p, o) = solve_frame_rle(&five, 2.0, 25.0, &cfg()).unwrap();
    assert_eq!(o, FrameOutcome::CapturedCandidate);
    assert_abs_diff_eq!(p.last()[0], hi, epsilon = 1e-6);

    let (_, o) = solve_frame_rle(&five, 0.5, 25.0, &cfg()).unwrap();
    assert!(matches!(o, FrameOutcome::EscapedZero { .. }), "{o:?}");

    let four = Signal::constant(4.0);
    let (p, o) = solve_frame_rle(&four, 2.0, 25.0, &cfg()).unwrap();
    assert_eq!(o, FrameOutcome::CapturedCandidate);
    assert!(p.values.iter().all(|v| (v[0] - 2.0).abs() < 1e-12));

    assert!(solve_frame_rle(&five, 5.0, 1.0, &cfg()).is_err());
    assert!(solve_frame_rle(&five, 0.0, 1.0, &cfg()).is_err());
}

#[test]
fn operator_t_examples() {
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
    let t = operator_t(&Signal::new(|s| (-1.5 * s).exp()), &grid).unwrap();
    for (s, v) in t.s.iter().zip(&t.values) {
        assert_abs_diff_eq!(*v, (-0.5 * s).exp() / 1.5, epsilon = 1e-10);
    }
    assert_abs_diff_eq!(t.values[0], 2.0 / 3.0, epsilon = 1e-8);
    assert!(t.flags.all());

    let t = operator_t(&Signal::new(|s| (-3.0 * s).exp()), &grid).unwrap();
    for (s, v) in t.s.iter().zip(&t.values) {
        assert_abs_diff_eq!(*v, (-2.0 * s).exp() / 3.0, epsilon = 1e-10);
    }

    let t = operator_t(&Signal::new(|s| (-2.0 * s).exp()), &grid).unwrap();
    assert!(!t.flags.e2s_diverges);
    assert!(t.flags.positive && t.flags.integrable);

    assert!(operator_t(&Signal::new(|s| (0.1 * s).exp()), &grid).is_err());
}

#[test]
fn operator_f_examples() {
    let grid = [0.0, 0.5, 1.0, 3.0];
    for (c, expect) in [(2.0, 4.0), (4.0, 5.0)] {
        for v in operator_f(&Signal::constant(c), &grid, 1e-3).unwrap() {
            assert_abs_diff_eq!(v, expect, epsilon = 1e-9);
        }
    }
    let big = Signal::new(|s| (-0.5 * s).exp() / 1.5);
    let xi = operator_f(&big, &[0.0], 1e-3).unwrap();
    assert_abs_diff_eq!(xi[0], 2.0 / 3.0 + 4.0, epsilon = 1e-8);

    // The identity Φ − Φ' = e^s φ gives an independent route.
    let phi = Signal::new(|s| (-1.5 * s).exp());
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
    let t = operator_t(&phi, &grid).unwrap();
    let direct = driving_from_phi(&t, &phi);
    let sampled = operator_f_sampled(&grid, &t.values).unwrap();
    let exact = operator_f(&big, &grid, 1e-3).unwrap();
    for i in 1..grid.len() - 1 {
        assert_abs_diff_eq!(direct[i], exact[i], epsilon = 1e-8);
        assert!((sampled[i] - exact[i]).abs() <= 2e-3 * exact[i].abs());
    }

    let bad = operator_f(&Signal::new(|s| (2.0 * s).exp()), &[0.5], 1e-3);
    assert!(matches!(bad, Err(loewner::Error::Domain(m)) if m.contains("0.5")));
}

#[test]
fn round_trip_reproduces_root_profiles() {
    for (c, a) in [(4.0, 2.0), (5.0, 4.0)] {
        let fr = FrameMap::new(1.0, c, 1.0).unwrap();
        let phi = Signal::new(move |s| a * (-s).exp());
        let (rec, rt) = phi_roundtrip(&phi, &fr, &RoundTripConfig::default(), &cfg()).unwrap();
        assert!(rt.residual <= 1e-6 && rt.terminal_gap <= 1e-6, "{}", rt.residual);
        let q = DrivingSpec::sqrt_approach(c, 1.0).unwrap();
        for t in [0.0, 0.2, 0.7, 0.99, 0.999999] {
            assert_abs_diff_eq!(rec.lambda_at(t), q.at(t), epsilon = 1e-9);
            assert_abs_diff_eq!(rec.x_at(t), c - a * (1.0 - t).sqrt(), epsilon = 1e-9);
        }
    }
}

#[test]
fn round_trip_rejects_inadmissible_phi() {
    let fr = FrameMap::new(1.0, 0.0, 1.0).unwrap();
    let phi = Signal::new(|s| (-2.5 * s).exp());
    assert!(phi_roundtrip(&phi, &fr, &RoundTripConfig::default(), &cfg()).is_err());
}

#[test]
fn g_test_examples() {
    assert_eq!(g_function(3.0), 1.0);
    assert_eq!(g_function(1.0), 4.0);
    assert!(g_test(&Signal::constant(3.0), 0.0, 3.0).unwrap().certified);
    assert!(g_test(&Signal::constant(1.0), 0.0, 0.25).unwrap().certified);
    assert!(!g_test(&Signal::constant(5.0), 0.0, 10.0).unwrap().certified);
    assert!(!g_test(&Signal::new(|s| 3.0 + 0.0 * s), 0.0, 2.9).unwrap().certified);
    assert!(g_test(&Signal::new(|s| 3.0 + 0.0 * s), 0.0, 3.1).unwrap().certified);
    assert!(g_test(&Signal::constant(-1.0), 0.0, 1.0).is_err());
    assert!(g_test(&Signal::new(|s| 1.0 - s), 0.0, 2.0).is_err());
}

#[test]
fn capture_bracket_examples() {
    let z = DrivingSpec::constant(0.0, 4.0).unwrap();
    let b = capture_bracket(&z, 1.0, 0.1, &cfg()).unwrap();
    assert_abs_diff_eq!(b.x0, 0.1, epsilon = 1e-15);
    assert_abs_diff_eq!(b.x_t, 4.01f64.sqrt(), epsilon = 1e-8);
    assert!(b.holds && b.x_t < 2.1);

    let b = capture_bracket(&z, 4.0, 1.0, &cfg()).unwrap();
    assert_abs_diff_eq!(b.x0, 2.0, epsilon = 1e-15);
    assert_abs_diff_eq!(b.x_t, 20f64.sqrt(), epsilon = 1e-8);
    assert!(b.holds);

    // Comparison with the solution driven by the constant x0: X(T) < x0 + 2√T.
    let q = DrivingSpec::sqrt_approach(4.0, 1.0).unwrap();
    let b = capture_bracket(&q, 1.0, 4.0, &cfg()).unwrap();
    assert_eq!(b.x0, 8.0);
    assert!(b.holds && b.x_t < b.x0 + 2.0);

    let err = capture_bracket(&q, 1.0, 3.9, &cfg()).unwrap_err();
    assert!(matches!(err, loewner::Error::Precondition(_)));
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

#[test]
fn scan_of_supercritical_profile() {
    let (lo, _) = phase_roots(5.0).unwrap();
    let q = DrivingSpec::sqrt_approach(5.0, 1.0).unwrap();
    let r = capture_scan(&q, 1.0, &grid(0.01, 6.0, 120), &ScanConfig::default()).unwrap();
    let (a, b) = r.upper.unwrap();
    assert!(a <= 0.06 && (b - (5.0 - lo)).abs() <= r.cell, "{a} {b}");
    assert!(r.lower.is_none());
    for rep in &r.reports {
        let inside = rep.initial <= 5.0 - lo + 1e-9;
        assert_eq!(r.is_member(rep), inside, "{rep:?}");
    }
}

#[test]
fn scan_of_critical_profile() {
    let q = DrivingSpec::sqrt_approach(4.0, 1.0).unwrap();
    let sc = ScanConfig { s_horizon: 400.0, ..ScanConfig::default() };
    let r = capture_scan(&q, 1.0, &grid(0.05, 3.0, 59), &sc).unwrap();
    let (a, b) = r.upper.unwrap();
    assert!(a <= 0.1 && (b - 2.0).abs() <= r.cell, "{a} {b}");
}

#[test]
fn scan_of_subcritical_profile() {
    let q = DrivingSpec::sqrt_approach(3.0, 1.0).unwrap();
    let r = capture_scan(&q, 1.0, &grid(-3.0, 6.0, 90), &ScanConfig::default()).unwrap();
    assert!(r.is_empty());
    assert!(r.reports.iter().filter(|p| p.initial > 0.0 && p.initial < 3.0).all(|p| p.certificate == CaptureCertificate::GTest));
}

#[test]
fn scan_report_serializes_with_exact_fields() {
    let q = DrivingSpec::sqrt_approach(5.0, 1.0).unwrap();
    let r = capture_scan(&q, 1.0, &[2.0], &ScanConfig::default()).unwrap();
    let v = serde_json::to_value(r.reports[0]).unwrap();
    let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["capture_time", "certificate", "horizon_used", "initial", "status"]);
    assert_eq!(v["certificate"], "fixed_point_band");
}

#[test]
fn scaling_diagnostic_examples() {
    let q5 = DrivingSpec::sqrt_approach(5.0, 1.0).unwrap();
    let scan = capture_scan(&q5, 1.0, &grid(0.5, 4.5, 8), &ScanConfig::default()).unwrap();
    let scales = loewner::driving::default_scales(1.0);
    let r = scaling_diagnostic(&q5, 1.0, CaptureEvidence::Scan(&scan), &scales, 0.1).unwrap();
    assert!(r.applicable && r.holds && r.required_b.is_none());
    assert_eq!((r.a_hat, r.b_hat), (5.0, 5.0));

    let q3 = DrivingSpec::sqrt_approach(3.0, 1.0).unwrap();
    let scan = capture_scan(&q3, 1.0, &grid(0.5, 4.5, 8), &ScanConfig::default()).unwrap();
    let r = scaling_diagnostic(&q3, 1.0, CaptureEvidence::Scan(&scan), &scales, 0.1).unwrap();
    assert!(!r.applicable && r.note.contains("vacuous"));

    let sharp = DrivingSpec::sharp_example(1.5, None, None, 1.0).unwrap();
    let ex = loewner::sharp::SharpExample::new(1.5, None, None).unwrap();
    let ladder: Vec<f64> = (ex.k0..=13)
        .flat_map(|k| [ex.low_witness(k), ex.high_witness(k)])
        .map(|s| (-2.0 * s).exp())
        .collect();
    let r = scaling_diagnostic(&sharp, 1.0, CaptureEvidence::Constructed, &ladder, 0.1).unwrap();
    assert!(r.holds, "{r:?}");
    assert!(r.b_hat >= 1.5 + 4.0 / 1.5 - 0.1);
}

#[test]
fn sharp_example_examples() {
    let r = sharp_example(1.5, None, 40, 32).unwrap();
    assert!((r.running_min - 1.5).abs() <= 0.05, "{}", r.running_min);
    assert!((r.running_max - (1.5 + 4.0 / 1.5)).abs() <= 0.15, "{}", r.running_max);
    assert!(r.x.iter().zip(&r.xi).all(|(x, q)| *x > 0.0 && x < q));

    let r = sharp_example(3.0, None, 40, 32).unwrap();
    assert!((r.running_max - 4.0).abs() <= 0.05, "{}", r.running_max);

    // At a = 2 both upper limits coincide.
    let r = sharp_example(2.0, None, 10, 8).unwrap();
    assert_eq!(r.upper_limit, 4.0);
    assert!(sharp_example(4.0, None, 10, 8).is_err());
}

#[test]
fn speed_condition_examples() {
    let h = |u: f64| (1.0 / u).ln();
    let scales: Vec<f64> = (2..30).map(|k| 2f64.powi(-k)).collect();
    let q = DrivingSpec::sqrt_approach(2.0, 1.0).unwrap();
    let r = speed_condition_check(&q, 1.0, &h, &scales, 1.0).unwrap();
    assert!(r.lower_side_diverging && !r.antecedent);

    let z = DrivingSpec::constant(0.0, 1.0).unwrap();
    let r = speed_condition_check(&z, 1.0, &h, &scales, 1.0).unwrap();
    assert_eq!(r.liminf_estimate, 0.0);

    let bm = DrivingSpec::brownian(6.0, 42, None, 1.0).unwrap();
    let t_max = (1..=65536)
        .map(|i| i as f64 / 65536.0)
        .max_by(|a, b| bm.at(*a).total_cmp(&bm.at(*b)))
        .unwrap();
    let fine: Vec<f64> = scales.iter().map(|u| u * t_max).filter(|u| *u > 1.0 / 65536.0).collect();
    let r = speed_condition_check(&bm, t_max, &h, &fine, 1.0).unwrap();
    assert!(r.liminf_estimate.is_finite() && r.limsup_estimate.is_finite());
}

#[test]
fn g_certificate_is_sound_below_four() {
    for c in [1.0, 2.5, 3.5, 3.9] {
        let q = DrivingSpec::sqrt_approach(c, 1.0).unwrap();
        let fr = FrameMap::for_driving(&q, 1.0, 1.0).unwrap();
        let xi = to_holder_frame(&q, &fr);
        let t2 = if c < 2.0 { c / 4.0 + 0.1 } else { c / (4.0 - c) + 0.1 };
        assert!(g_test(&xi, 0.0, t2).unwrap().certified);
        let r = capture_scan(&q, 1.0, &grid(-2.0 * c, 2.0 * c, 999), &ScanConfig::default()).unwrap();
        assert!(r.is_empty(), "{c}");
    }
}

#[test]
fn captured_drivings_have_a_record_at_capture() {
    for c in [4.0, 5.0, 6.0] {
        let q = DrivingSpec::sqrt_approach(c, 1.0).unwrap();
        let r = capture_scan(&q, 1.0, &grid(0.2, 3.0, 6), &ScanConfig::default()).unwrap();
        assert!(!r.is_empty());
        let lt = q.at(1.0);
        assert!((0..1000).all(|i| q.at(i as f64 / 1000.0) <= lt + 1e-12));
    }
}

#[test]
fn operator_t_is_a_cone_map() {
    let grid: Vec<f64> = (0..=12).map(|i| i as f64).collect();
    let p1 = Signal::new(|s| (-0.7 * s).exp());
    let p2 = Signal::new(|s| 2.0 * (-1.3 * s).exp());
    let sum = Signal::new(|s| (-0.7 * s).exp() + 2.0 * (-1.3 * s).exp());
    let (a, b, c) = (
        operator_t(&p1, &grid).unwrap(),
        operator_t(&p2, &grid).unwrap(),
        operator_t(&sum, &grid).unwrap(),
    );
    let scaled = operator_t(&p1.scale(3.0), &grid).unwrap();
    for i in 0..grid.len() {
        let tol = 1e-9 * c.values[i].abs().max(1e-12);
        assert!((a.values[i] + b.values[i] - c.values[i]).abs() <= tol.max(1e-12));
        assert!((3.0 * a.values[i] - scaled.values[i]).abs() <= 1e-9 * scaled.values[i]);
    }
}

fn mixture(terms: Vec<(f64, f64)>) -> Signal {
    Signal::new(move |s| terms.iter().map(|(a, k)| a * (-k * s).exp()).sum())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn round_trip_holds_for_exponential_mixtures(
        terms in prop::collection::vec((0.5f64..2.0, 0.5f64..1.5), 1..4),
        t_end in 0.5f64..2.0,
        lt in -1.0f64..1.0,
        down in any::<bool>(),
    ) {
        let fr = FrameMap::new(t_end, lt, if down { -1.0 } else { 1.0 }).unwrap();
        let (_, rt) = phi_roundtrip(&mixture(terms), &fr, &RoundTripConfig::default(), &cfg()).unwrap();
        prop_assert!(rt.residual <= 1e-6);
        prop_assert!(rt.terminal_gap <= 1e-6);
    }

    #[test]
    fn larger_frame_driving_keeps_solution_above(
        knots in prop::collection::vec(3.0f64..6.0, 6),
        bump in prop::collection::vec(0.0f64..1.0, 6),
        x0 in 0.5f64..2.5,
    ) {
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 2.0).collect();
        let hi: Vec<f64> = knots.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let lo_sig = Signal::linear_interp(xs.clone(), knots);
        let hi_sig = Signal::linear_interp(xs, hi);
        let (p1, _) = solve_frame_rle(&hi_sig, x0, 10.0, &cfg()).unwrap();
        let (p2, _) = solve_frame_rle(&lo_sig, x0, 10.0, &cfg()).unwrap();
        let end = p1.last_time().min(p2.last_time());
        for i in 0..=100 {
            let s = end * i as f64 / 100.0;
            prop_assert!(p1.at(s)[0] >= p2.at(s)[0] - 1e-6);
        }
    }
}
