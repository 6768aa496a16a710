use approx::assert_abs_diff_eq;
use loewner::driving::DrivingSpec;
use loewner::imaginary_dual::*;
use loewner::ode_engine::{EventKind, IntegratorConfig};
use loewner::real_line::solve_frame_rle;
use loewner::sharp::SharpExample;
use loewner::signal::Signal;
use num_complex::Complex64;
use proptest::prelude::*;

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (f(a) + f(b) + inner)
}

#[test]
fn coupled_system_examples() {
    let z = DrivingSpec::constant(0.0, 2.0).unwrap();
    let (_, ev) = solve_tle(&z, Complex64::new(0.0, 1.0), 2.0, &cfg()).unwrap();
    assert_eq!(ev.kind, EventKind::Capture);
    assert!((ev.time - 0.25).abs() < 1e-8, "{ev:?}");

    let (_, ev) = solve_tle(&z, Complex64::new(0.0, 2.0), 2.0, &cfg()).unwrap();
    assert!((ev.time - 1.0).abs() < 1e-8, "{ev:?}");

    let (p, _) = solve_tle(&z, Complex64::new(1.0, 1.0), 0.5, &cfg()).unwrap();
    let exact = (Complex64::new(1.0, 1.0).powi(2) + 2.0).sqrt();
    let [x, y] = p.last();
    assert_abs_diff_eq!(x, exact.re, epsilon = 1e-8);
    assert_abs_diff_eq!(y, exact.im, epsilon = 1e-8);
    assert_abs_diff_eq!(x * y, 1.0, epsilon = 1e-8);
    assert!(p.values.windows(2).all(|w| w[1][1] < w[0][1]));

    assert!(solve_tle(&z, Complex64::new(1.0, 0.0), 1.0, &cfg()).is_err());
}

#[test]
fn imaginary_equation_examples() {
    let (p, cl) = solve_ile(&Gap::General(Signal::constant(0.0)), 2.0, 2.0, &cfg()).unwrap();
    assert!(cl.is_vanishing());
    assert!((cl.witness_time.unwrap() - 1.0).abs() < 1e-8, "{cl:?}");
    for (t, v) in p.times.iter().zip(&p.values) {
        assert_abs_diff_eq!(v[0], (4.0 - 4.0 * t).max(0.0).sqrt(), epsilon = 1e-8);
    }

    for y0 in [0.1, 1.0, 3.0] {
        let (p, cl) = solve_ile(&Gap::SqrtProfile { c: 2.0, t_end: 1.0 }, y0, 1.0, &cfg()).unwrap();
        assert_eq!(cl.status, VanishStatus::NotVanishingCertified, "{y0}");
        // From 0.1 the frame height needs s ≈ 200 to reach 2, so Y(1) is
        // far below the floor even though it is positive.
        if y0 >= 1.0 {
            assert!(p.last()[0] > 0.0 && p.last_time() == 1.0);
        }
    }

    let y0 = (4.0f64 - 1.5 * 1.5).sqrt();
    let (_, cl) = solve_ile(&Gap::SqrtProfile { c: 1.5, t_end: 1.0 }, y0, 1.0, &cfg()).unwrap();
    assert!(cl.is_vanishing());

    // The same profile as a plain signal goes through the generic path.
    let th = Signal::new(|t: f64| 1.5 * (1.0 - t).max(0.0).sqrt());
    let (p, _) = solve_ile(&Gap::General(th), y0, 0.99, &cfg()).unwrap();
    assert_abs_diff_eq!(p.last()[0], y0 * 0.1, epsilon = 1e-8);

    assert!(solve_ile(&Gap::General(Signal::constant(0.0)), 0.0, 1.0, &cfg()).is_err());
}

#[test]
fn height_form_examples() {
    let r2 = 2f64.sqrt();
    let (p, cl) = solve_frame_height(&Signal::constant(r2), r2, DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert!(p.values.iter().all(|v| (v[0] - r2).abs() < 1e-12));
    assert!(cl.is_vanishing());

    let (p, cl) = solve_frame_height(&Signal::constant(2.0), 0.5, DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert_eq!(cl.status, VanishStatus::NotVanishingCertified);
    assert_eq!(cl.certificate, VanishCertificate::YCrossed2);
    assert!(p.values.windows(2).all(|w| w[1][0] > w[0][0]));
    let at = cl.witness_time.unwrap();
    assert!(p.at(at)[0] >= 2.0 - 1e-8);

    let (p, cl) = solve_frame_height(&Signal::constant(1.5), 0.5, DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert!(cl.is_vanishing());
    assert!(p.values.iter().all(|v| v[0] < 2.0));
    assert!(p.values.windows(2).all(|w| w[1][0] < w[0][0]));

    assert!(solve_frame_height(&Signal::constant(1.5), 0.0, 10.0, &cfg()).is_err());
}

#[test]
fn height_form_trend_on_varying_drivings() {
    let eta = Signal::new(|s: f64| 1.5 + 0.3 * s.sin());
    let (_, cl) = solve_frame_height(&eta, 0.5, DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert_eq!(cl.status, VanishStatus::Vanishing);
    assert_eq!(cl.certificate, VanishCertificate::Horizon);

    let eta = Signal::new(|s: f64| 2.2 + 0.1 * s.cos());
    let (_, cl) = solve_frame_height(&eta, 0.1, DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert_eq!(cl.certificate, VanishCertificate::YCrossed2);
}

#[test]
fn difference_form_examples() {
    let (_, cl) = solve_frame_difference(&Signal::constant(2.0), 1.0, DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert_eq!(cl.status, VanishStatus::NotVanishingCertified);
    assert_eq!(cl.certificate, VanishCertificate::Comparison);

    let (p, cl) = solve_frame_difference(&Signal::constant(1.0), 1.0, DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert!(cl.is_vanishing());
    assert!(p.values.iter().all(|v| v[0] < 3.0));

    let (p, cl) = solve_frame_difference(&Signal::constant(3.0), 4.0 / 3.0 - COMPARISON_MARGIN, 10.0, &cfg()).unwrap();
    assert_eq!(cl.status, VanishStatus::NotVanishingCertified);
    assert!(p.derivs.iter().all(|d| d[0] > 0.0));

    assert!(solve_frame_difference(&Signal::constant(1.0), 0.0, 10.0, &cfg()).is_err());
    assert!(solve_frame_difference(&Signal::new(|s: f64| 1.0 - 0.1 * s), 1.0, 20.0, &cfg()).is_err());
}

#[test]
fn difference_form_comparison_on_varying_drivings() {
    let eta = Signal::new(|s: f64| 1.2 + 0.2 * s.sin());
    let (p, cl) = solve_frame_difference(&eta, 3.0, DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert_eq!(cl.certificate, VanishCertificate::Comparison);
    let at = cl.witness_time.unwrap();
    assert!(p.at(at)[0] >= 4.0 / 1.0 - 1.0);
}

#[test]
fn transition_profile_closed_forms() {
    let r = transition_profile(0.0, 0.3, 1.0).unwrap();
    assert_abs_diff_eq!(r.y, 4.09f64.sqrt(), epsilon = 1e-8);
    assert!(r.deviation < 1e-8);

    let mut prev = f64::INFINITY;
    for eps in [1e-2, 1e-4, 1e-6] {
        let r = transition_profile(2.0, eps, 1.0).unwrap();
        let d = (r.y - 2f64.sqrt()).abs();
        assert!(d < prev);
        assert!(r.deviation < 1e-7, "{r:?}");
        prev = d;
    }
    assert!(prev < 1e-5);

    // ln y − 2/y² = −10 by fixed-point iteration.
    let mut y: f64 = 0.5;
    for _ in 0..200 {
        y = (2.0 / (y.ln() + 10.0)).sqrt();
    }
    let r = transition_profile(4.0, (-10f64).exp(), 1.0).unwrap();
    assert_abs_diff_eq!(r.y, y, epsilon = 1e-10);
    assert_abs_diff_eq!(r.y, 0.4654, epsilon = 1e-3);
    assert!(r.deviation < 1e-7);

    for c in [5.0, 8.0] {
        let r = transition_profile(c, 1e-3, 1.0).unwrap();
        assert!(r.deviation < 1e-7, "{c}: {r:?}");
    }
    assert!(transition_profile(-1.0, 0.1, 1.0).is_err());
}

#[test]
fn transition_profile_limits() {
    for c in [0.5, 3.0] {
        let r = transition_profile(c, 1e-12, 2.0).unwrap();
        assert!((r.y - (2.0 * (4.0 - c)).sqrt()).abs() < 1e-3, "{c}");
    }
    let a = transition_profile(6.0, 1e-4, 1.0).unwrap().y;
    let b = transition_profile(6.0, 1e-8, 1.0).unwrap().y;
    assert!(b < a);
}

#[test]
fn lower_bound_examples() {
    let r2 = 2f64.sqrt();
    for (c, rate) in [(r2, -1.0), (2.0, 0.0), (2.0 * r2, 0.5)] {
        let lb = lower_bound_function(&Signal::constant(c), 3.0).unwrap();
        assert_abs_diff_eq!(lb.value, 3.0 * rate, epsilon = 1e-14);
    }
    let lb = lower_bound_function(&Signal::new(move |_| r2), 3.0).unwrap();
    assert_abs_diff_eq!(lb.value, -3.0, epsilon = 1e-12);
    let lb = lower_bound_function(&Signal::new(|s| 1.0 - s), 2.0).unwrap();
    assert!(lb.singular && lb.value == f64::NEG_INFINITY);
}

#[test]
fn operator_h_examples() {
    let h = operator_h(&Signal::constant(2.0), &[0.0, 1.0]).unwrap();
    assert_eq!(h.values, vec![4.0, 4.0]);
    let h = operator_h(&Signal::constant(2f64.sqrt()), &[0.0]).unwrap();
    assert_abs_diff_eq!(h.values[0], 3.0 * 2f64.sqrt(), epsilon = 1e-15);

    let oracle = 3.0 + simpson(|s: f64| 4.0 * (-s).exp() / (2.0 + (-s).exp()), 0.0, 60.0, 60_000);
    let h = operator_h(&Signal::new(|s: f64| 2.0 + (-s).exp()), &[0.0]).unwrap();
    assert_abs_diff_eq!(h.values[0], oracle, epsilon = 1e-9);
    assert_abs_diff_eq!(h.values[0], 3.0 + 4.0 * 1.5f64.ln(), epsilon = 1e-9);

    // Same values through the generic quadrature path.
    let h = operator_h(&Signal::new(|_| 2.0), &[0.0, 3.0]).unwrap();
    assert!(h.values.iter().all(|v| (v - 4.0).abs() < 1e-10));

    assert!(operator_h(&Signal::new(|s: f64| (-2.0 * s).exp()), &[0.0]).is_err());
    assert!(operator_h(&Signal::constant(0.0), &[0.0]).is_err());
}

#[test]
fn h_consistency_examples() {
    let r = h_consistency(&Signal::constant(5.0), &Signal::constant(4.0), &[0.0, 1.0]);
    assert!(r.passed && r.max_deviation == 0.0);
    let r = h_consistency(&Signal::constant(4.0), &Signal::constant(2.0), &[0.0, 1.0]);
    assert!(r.passed && r.max_deviation == 0.0);

    let ex = SharpExample::new(1.5, None, None).unwrap();
    let (e1, e2, e3) = (ex.clone(), ex.clone(), ex.clone());
    let xi = Signal::new(move |s| e1.xi(s)).with_breaks(move |a, b| e2.knots(a, b));
    let knots = ex.clone();
    let x = Signal::new(move |s| e3.x(s)).with_breaks(move |a, b| knots.knots(a, b));
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
    let r = h_consistency(&xi, &x, &grid);
    assert!(r.passed, "{r:?}");

    // A captured frame run from the fixed-point band.
    let five = Signal::constant(5.0);
    let (p, _) = solve_frame_rle(&five, 4.0 - 1e-3, 60.0, &cfg()).unwrap();
    let r = h_consistency(&five, &p.to_signal(), &[0.0, 2.0, 5.0]);
    assert!(r.passed, "{r:?}");

    let r = h_consistency(&Signal::constant(1.0), &Signal::constant(2.0), &[0.0]);
    assert!(!r.passed && r.note.is_some());
}

#[test]
fn transition_examples() {
    let r = transition_classify(1.9, 1.0, &cfg()).unwrap();
    assert_eq!(r.label, TransitionLabel::Vanishing);
    assert!(r.consistent);
    assert_abs_diff_eq!(r.y0, (4.0f64 - 1.9 * 1.9).sqrt(), epsilon = 1e-15);

    let r = transition_classify(2.0, 1.0, &cfg()).unwrap();
    assert_eq!(r.label, TransitionLabel::BoundaryNotVanishing);
    assert!(r.consistent);

    let r = transition_classify(0.0, 1.0, &cfg()).unwrap();
    assert_eq!(r.label, TransitionLabel::Vanishing);
    assert!(r.consistent);

    let r = transition_classify(3.0, 2.0, &cfg()).unwrap();
    assert_eq!(r.label, TransitionLabel::NotVanishing);
    assert!(r.consistent);

    let v = serde_json::to_value(r.label).unwrap();
    assert_eq!(v, "not_vanishing");
}

#[test]
fn spread_examples() {
    let r2 = 2f64.sqrt();
    let r = vanish_spread_diagnostic(DualForm::Height, &Signal::constant(r2), &[0.5, 1.0, r2], DEFAULT_S_HORIZON, &cfg())
        .unwrap();
    assert_eq!(r.vanishing.len(), 3);
    assert!(r.passed && r.rest_max < 1e-6);
    assert!((r.terminal[2] - r2).abs() < 1e-12);

    let r = vanish_spread_diagnostic(DualForm::Height, &Signal::constant(1.5), &[0.2, 0.4], DEFAULT_S_HORIZON, &cfg())
        .unwrap();
    assert!(r.passed && r.max_gap < 1e-6);

    let r = vanish_spread_diagnostic(DualForm::Height, &Signal::constant(2.0), &[0.5, 1.0], DEFAULT_S_HORIZON, &cfg())
        .unwrap();
    assert!(r.vacuous && r.passed);

    let r = vanish_spread_diagnostic(DualForm::Difference, &Signal::constant(1.0), &[0.5, 1.0, 2.0], DEFAULT_S_HORIZON, &cfg())
        .unwrap();
    assert!(r.passed && r.vanishing.len() == 3);

    assert!(vanish_spread_diagnostic(DualForm::Height, &Signal::constant(1.0), &[0.5], 10.0, &cfg()).is_err());
}

#[test]
fn bounded_gap_examples() {
    let r = bounded_gap_probe(&Signal::constant(1.0), DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert!(!r.vacuous && r.holds);
    assert!(r.difference.unwrap().is_vanishing() && r.height.unwrap().is_vanishing());

    let r = bounded_gap_probe(&Signal::constant(2.5), DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert!(r.vacuous && r.holds);

    let r = bounded_gap_probe(&Signal::new(|s: f64| 1.0 + 0.5 * s.sin()), DEFAULT_S_HORIZON, &cfg()).unwrap();
    assert!(r.holds, "{r:?}");

    assert!(bounded_gap_probe(&Signal::constant(0.0), 10.0, &cfg()).is_err());
}

#[test]
fn classification_serializes_with_spec_names() {
    let (_, cl) = solve_frame_height(&Signal::constant(2.0), 0.5, DEFAULT_S_HORIZON, &cfg()).unwrap();
    let v = serde_json::to_value(cl).unwrap();
    assert_eq!(v["status"], "not_vanishing_certified");
    assert_eq!(v["certificate"], "y_crossed_2");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn crossing_two_certifies_growth(eta in 0.0f64..3.0, y0 in 0.05f64..3.0) {
        let (p, cl) = solve_frame_height(&Signal::constant(eta), y0, 20.0, &cfg()).unwrap();
        if cl.certificate == VanishCertificate::YCrossed2 {
            let at = cl.witness_time.unwrap();
            prop_assert!(p.at(at)[0] >= 2.0 - 1e-8);
            prop_assert!(!cl.is_vanishing());
        }
        if cl.is_vanishing() {
            prop_assert!(p.values.iter().all(|v| v[0] < 2.0));
        }
    }

    #[test]
    fn dual_pair_gap_is_positive_for_captured_runs(c in 4.2f64..7.0, frac in 0.05f64..0.95) {
        let hi = (c + (c * c - 16.0).sqrt()) / 2.0;
        let lo = (c - (c * c - 16.0).sqrt()) / 2.0;
        let x0 = lo + frac * (hi - lo);
        let xi = Signal::constant(c);
        let (p, _) = solve_frame_rle(&xi, x0, 20.0, &cfg()).unwrap();
        let pair = DualPair::new(&xi, &p.to_signal());
        prop_assert!(pair.min_on(20.0) > 0.0);
    }

    #[test]
    fn comparison_for_height_form(base in 0.5f64..2.5, bump in 0.0f64..1.0, y0 in 0.1f64..1.5) {
        let small = Signal::new(move |s: f64| base + 0.2 * s.sin());
        let large = Signal::new(move |s: f64| base + bump + 0.2 * s.sin());
        let (p1, _) = solve_frame_height(&large, y0, 15.0, &cfg()).unwrap();
        let (p2, _) = solve_frame_height(&small, y0, 15.0, &cfg()).unwrap();
        let end = p1.last_time().min(p2.last_time());
        for i in 0..=60 {
            let s = end * i as f64 / 60.0;
            prop_assert!(p1.at(s)[0] >= p2.at(s)[0] * (1.0 - 1e-7));
        }
    }
}
