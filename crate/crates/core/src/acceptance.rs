//! The acceptance suite: twelve end-to-end checks at fixed tolerances, each
//! with a runtime budget.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

use crate::driving::DrivingSpec;
use crate::error::{Error, Result};
use crate::hull_trace::{endpoint_experiment, forward_map, hcap_check, self_convergence, trace, welding};
use crate::imaginary_dual::{
    h_consistency, lower_bound_function, solve_frame_height, transition_classify, transition_profile, TransitionLabel,
    DEFAULT_S_HORIZON,
};
use crate::ode_engine::IntegratorConfig;
use crate::real_line::{capture_scan, phi_roundtrip, refine_boundary, sharp_example, FrameMap, RoundTripConfig, ScanConfig};
use crate::sharp::SharpExample;
use crate::signal::Signal;
use crate::weierstrass_suite::sweep;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget: f64,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{:>2}] {} {:<32} {:>7.2}s/{:>4.0}s  {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.budget,
            self.detail
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

const CRITERIA: [(&str, f64, Check); 12] = [
    ("closed-form forward map", 10.0, forward_map_grid),
    ("capacity normalization", 30.0, capacity),
    ("real capture transition", 120.0, capture_transition),
    ("tail-function round trip", 60.0, round_trip),
    ("sharp frame example", 30.0, sharp_extremes),
    ("imaginary transition", 30.0, imaginary_transition),
    ("lower bound function", 30.0, lower_bound),
    ("dual-pair consistency", 30.0, dual_pairs),
    ("trace fidelity", 300.0, trace_fidelity),
    ("zero-driving welding", 30.0, zero_welding),
    ("Weierstrass norm bounds", 60.0, weierstrass_bounds),
    ("endpoint experiment", 120.0, endpoint),
];

pub fn criterion_count() -> usize {
    CRITERIA.len()
}

/// Runs criterion `id` (1-based). A check that errors counts as failed.
pub fn run_one(id: usize) -> Option<CriterionResult> {
    let (name, budget, check) = *CRITERIA.get(id.checked_sub(1)?)?;
    let start = Instant::now();
    let out = check();
    let seconds = start.elapsed().as_secs_f64();
    let (ok, mut detail) = match out {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    if seconds > budget {
        detail.push_str(" (over budget)");
    }
    Some(CriterionResult { id, name, passed: ok && seconds <= budget, detail, seconds, budget })
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=CRITERIA.len()).filter_map(run_one).collect()
}

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn slit_map(t: f64, z: Complex64) -> Complex64 {
    let r = (z * z + 4.0 * t).sqrt();
    if r.im < 0.0 || (r.im == 0.0 && z.re < 0.0) {
        -r
    } else {
        r
    }
}

fn forward_map_grid() -> Result<(bool, String)> {
    let zero = DrivingSpec::constant(0.0, 1.0)?;
    let mut worst: f64 = 0.0;
    for i in 1..=10 {
        let t = i as f64 / 10.0;
        for j in 0..100 {
            let z = Complex64::new(-3.0 + 6.0 * (j % 10) as f64 / 9.0, 0.1 + 0.3 * (j / 10) as f64);
            let g = forward_map(&zero, t, z, &cfg())?.value();
            worst = worst.max((g - slit_map(t, z)).norm());
        }
    }
    Ok((worst <= 1e-7, format!("max error {worst:.2e} over 1000 points")))
}

fn capacity() -> Result<(bool, String)> {
    let zoo = [
        DrivingSpec::linear(1.0, 0.0, 1.0)?,
        DrivingSpec::sqrt_approach(3.0, 1.0)?,
        DrivingSpec::weierstrass_partial(0.5, 4.0, 6, 1.0)?,
    ];
    let mut worst: f64 = 0.0;
    for spec in &zoo {
        for t in [0.25, 0.5, 1.0] {
            let r = hcap_check(spec, t, 200.0, &cfg())?;
            worst = worst.max((r.estimate - 2.0 * t).abs() / (2.0 * t));
        }
    }
    Ok((worst <= 0.01, format!("max relative deviation {worst:.2e}")))
}

fn capture_transition() -> Result<(bool, String)> {
    let grid: Vec<f64> = (1..=70).map(|i| 0.1 * i as f64).collect();
    let mut ok = true;
    let mut notes = Vec::new();
    for c in [3.0, 3.9] {
        let r = capture_scan(&DrivingSpec::sqrt_approach(c, 1.0)?, 1.0, &grid, &ScanConfig::default())?;
        ok &= r.is_empty();
        notes.push(format!("c={c}: {}", if r.is_empty() { "empty" } else { "nonempty" }));
    }
    for c in [4.0, 5.0, 6.0] {
        let spec = DrivingSpec::sqrt_approach(c, 1.0)?;
        let sc = ScanConfig { s_horizon: if c == 4.0 { 8000.0 } else { ScanConfig::default().s_horizon }, ..ScanConfig::default() };
        let r = capture_scan(&spec, 1.0, &grid, &sc)?;
        let expected = 0.5 * (c + (c * c - 16.0).sqrt());
        let Some((_, hi)) = r.upper else {
            ok = false;
            notes.push(format!("c={c}: empty"));
            continue;
        };
        let end = refine_boundary(&spec, 1.0, hi, hi + r.cell, 2e-4, &sc)?;
        ok &= (end - expected).abs() <= 1e-3;
        notes.push(format!("c={c}: {end:.4} vs {expected:.4}"));
    }
    Ok((ok, notes.join("; ")))
}

fn round_trip() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let k = rng.gen_range(1..=3);
        let terms: Vec<(f64, f64)> = (0..k).map(|_| (rng.gen_range(0.5..2.0), rng.gen_range(0.5..1.5))).collect();
        let phi = Signal::new(move |s| terms.iter().map(|(a, r)| a * (-r * s).exp()).sum());
        let frame = FrameMap::new(rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0), if rng.gen_bool(0.5) { 1.0 } else { -1.0 })?;
        let (_, rt) = match phi_roundtrip(&phi, &frame, &RoundTripConfig::default(), &cfg()) {
            Ok(v) => v,
            Err(Error::Reconstruction { residual, .. }) => return Ok((false, format!("residual {residual:.2e}"))),
            Err(e) => return Err(e),
        };
        worst = (worst.0.max(rt.residual), worst.1.max(rt.terminal_gap));
    }
    Ok((
        worst.0 <= 1e-6 && worst.1 <= 1e-6,
        format!("max residual {:.2e}, max terminal gap {:.2e}", worst.0, worst.1),
    ))
}

fn sharp_extremes() -> Result<(bool, String)> {
    let a = sharp_example(1.5, None, 40, 32)?;
    let b = sharp_example(3.0, None, 40, 32)?;
    let ok = (1.45..=1.55).contains(&a.running_min)
        && (4.0..=4.35).contains(&a.running_max)
        && (3.9..=4.1).contains(&b.running_max);
    Ok((
        ok,
        format!(
            "a=1.5: min {:.4}, max {:.4}; a=3: max {:.4}",
            a.running_min, a.running_max, b.running_max
        ),
    ))
}

fn imaginary_transition() -> Result<(bool, String)> {
    let mut ok = true;
    let mut labels = Vec::new();
    for c in [0.0, 1.0, 1.9, 2.0, 2.1, 3.0] {
        let r = transition_classify(c, 1.0, &cfg())?;
        let vanishing = r.label == TransitionLabel::Vanishing;
        ok &= vanishing == (c < 2.0);
        labels.push(format!("{c}:{}", if vanishing { "v" } else { "nv" }));
    }
    let y = transition_profile(2.0, 1e-6, 1.0)?.y;
    let d = (y - 2f64.sqrt()).abs();
    Ok((ok && d <= 0.02, format!("{}; |y − √2| = {d:.2e}", labels.join(" "))))
}

fn lower_bound() -> Result<(bool, String)> {
    let r2 = 2f64.sqrt();
    let (_, a) = solve_frame_height(&Signal::constant(r2), r2, DEFAULT_S_HORIZON, &cfg())?;
    let (_, b) = solve_frame_height(&Signal::constant(2.0), 0.5, DEFAULT_S_HORIZON, &cfg())?;
    let mut dev: f64 = 0.0;
    for s in [0.5, 1.0, 5.0, 10.0, 30.0] {
        dev = dev.max((lower_bound_function(&Signal::constant(r2), s)?.value + s).abs());
        dev = dev.max(lower_bound_function(&Signal::constant(2.0), s)?.value.abs());
    }
    let ok = a.is_vanishing()
        && b.status == crate::imaginary_dual::VanishStatus::NotVanishingCertified
        && dev <= 1e-8;
    Ok((ok, format!("η=√2 {:?}, η=2 {:?}, max deviation {dev:.1e}", a.status, b.status)))
}

fn dual_pairs() -> Result<(bool, String)> {
    let g = [0.0, 1.0, 5.0];
    let a = h_consistency(&Signal::constant(5.0), &Signal::constant(4.0), &g);
    let b = h_consistency(&Signal::constant(4.0), &Signal::constant(2.0), &g);
    let (xi, x) = SharpExample::new(1.5, None, None)?.signals();
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
    let c = h_consistency(&xi, &x, &grid);
    let ok = a.max_deviation <= 1e-10 && b.max_deviation <= 1e-10 && c.max_deviation <= 1e-4;
    Ok((
        ok,
        format!(
            "constant pairs {:.1e}, {:.1e}; oscillating pair {:.2e}",
            a.max_deviation, b.max_deviation, c.max_deviation
        ),
    ))
}

fn trace_fidelity() -> Result<(bool, String)> {
    let zero = DrivingSpec::constant(0.0, 1.0)?;
    let tr = trace(&zero, 1.0, 1e-3)?;
    let err = tr
        .times
        .iter()
        .zip(&tr.points)
        .map(|(t, p)| (p - Complex64::new(0.0, 2.0 * t.sqrt())).norm())
        .fold(0.0, f64::max);
    let q = self_convergence(&DrivingSpec::sqrt_approach(3.0, 1.0)?, 1.0, 1e-3)?;
    let w = self_convergence(&DrivingSpec::weierstrass_partial(0.05, 100.0, 4, 1.0)?, 1.0, 1e-3)?;
    Ok((
        err <= 1e-6 && q.factor >= 1.3 && w.factor >= 1.3,
        format!("slit error {err:.1e}; factors {:.3}, {:.3}", q.factor, w.factor),
    ))
}

fn zero_welding() -> Result<(bool, String)> {
    let zero = DrivingSpec::constant(0.0, 1.0)?;
    let s: Vec<f64> = (0..40).map(|i| 0.025 * i as f64).collect();
    let w = welding(&zero, 1.0, &s, 1e-3, &cfg())?;
    let phi_err = w.left.iter().zip(&w.right).map(|(l, r)| (l + r).abs()).fold(0.0, f64::max);
    let r1 = w.ratio1.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    let r2: Vec<f64> = w.ratio2.iter().flatten().map(|r| (r - 1.0).abs()).collect();
    let r2max = r2.iter().copied().fold(0.0, f64::max);
    Ok((
        phi_err <= 1e-6 && r1 <= 1e-6 && !r2.is_empty() && r2max <= 1e-6,
        format!("|φ(x) + x| {phi_err:.1e}; ratio errors {r1:.1e}, {r2max:.1e} ({} rows)", r2.len()),
    ))
}

fn weierstrass_bounds() -> Result<(bool, String)> {
    let ms: Vec<u32> = (2..=8).collect();
    let rows = sweep(&[9.0, 16.0, 25.0, 100.0], &[1, 2, 4, 8], &[1.0], 1.0, &ms)?;
    let checked: Vec<_> = rows.iter().filter(|r| r.check != "hypothesis").collect();
    let failed = checked.iter().filter(|r| r.verdict != "pass").count();
    let margin = checked.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok((failed == 0, format!("{} checks, {failed} failed, min margin {margin:.3e}", checked.len())))
}

fn endpoint() -> Result<(bool, String)> {
    let r = endpoint_experiment(&DrivingSpec::sqrt_approach(5.5, 1.0)?, 1.0, 1e-3, 5.0, &cfg())?;
    let control = endpoint_experiment(&DrivingSpec::sqrt_approach(3.0, 1.0)?, 1.0, 1e-3, 5.0, &cfg());
    let rejected = matches!(control, Err(Error::Precondition(_)));
    Ok((
        r.decreasing && r.band_holds && rejected,
        format!(
            "metric {:.3e} → {:.3e} → {:.3e}; band {}; control {}",
            r.metric[0],
            r.metric[1],
            r.metric[2],
            if r.band_holds { "holds" } else { "fails" },
            if rejected { "rejected" } else { "accepted" }
        ),
    ))
}
