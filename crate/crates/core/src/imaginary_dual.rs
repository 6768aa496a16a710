//! The imaginary part of the flow, its self-similar forms and the dual
//! equation satisfied by the gap between two captured solutions.
//!
//! With `θ = X − λ`, the height obeys `Ẏ = −2Y/(θ² + Y²)`. In the frame of a
//! horizon `T` the height `y` and the gap `η` satisfy
//! `ẏ = y − 4y/(η² + y²)` (height form), while the difference `w` of two real
//! solutions satisfies `ẇ = w − 4w/(η² + ηw)` (difference form). A solution
//! vanishes when `e^{−s} y → 0`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::driving::DrivingSpec;
use crate::error::{domain, numeric, precondition, Result};
use crate::ode_engine::{integrate_until, Event, EventKind, Guard, IntegratorConfig, SolutionPath};
use crate::quad::{self, integrate_to_infinity, QuadConfig};
use crate::signal::Signal;

/// `e^{−s} y` below this counts as vanished.
pub const VANISH_LEVEL: f64 = 1e-12;
/// Window over which a vanishing trend is checked.
pub const TREND_WINDOW: f64 = 5.0;
pub const DEFAULT_S_HORIZON: f64 = 35.0;
/// Distance above `max(0, 4/η − η)` at which the comparison certificate
/// for the difference form takes over.
pub const COMPARISON_MARGIN: f64 = 1e-3;
/// Relative slack when comparing an initial value with a fixed point.
const FIXED_POINT_SLACK: f64 = 1e-12;
const ETA_SAMPLES: usize = 20_000;
const H_LEN: f64 = 40.0;
const H_WINDOW: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VanishStatus {
    Vanishing,
    NotVanishingCertified,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VanishCertificate {
    /// The frame height reached 2, after which it can only grow.
    #[serde(rename = "y_crossed_2")]
    YCrossed2,
    ClosedForm,
    Comparison,
    Horizon,
    /// The height hit the floor inside the horizon; the time is bisected.
    EventBisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VanishClassification {
    pub status: VanishStatus,
    pub certificate: VanishCertificate,
    pub witness_time: Option<f64>,
}

impl VanishClassification {
    pub fn is_vanishing(&self) -> bool {
        self.status == VanishStatus::Vanishing
    }
}

/// The gap `η = ξ − x̂` generated by a captured frame solution `x̂`.
#[derive(Debug, Clone)]
pub struct DualPair {
    pub eta: Signal,
    /// Initial value of the captured solution that produced `eta`.
    pub source: f64,
}

impl DualPair {
    pub fn new(xi: &Signal, x_hat: &Signal) -> Self {
        DualPair { eta: xi.minus(x_hat), source: x_hat.eval(0.0) }
    }

    pub fn min_on(&self, s_max: f64) -> f64 {
        sampled_min(&self.eta, s_max)
    }
}

fn sampled_min(f: &Signal, s_max: f64) -> f64 {
    if let Some(c) = f.as_constant() {
        return c;
    }
    (0..=ETA_SAMPLES)
        .map(|i| f.eval(s_max * i as f64 / ETA_SAMPLES as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Integrates the coupled real/imaginary system for `z0` in the upper half
/// plane. The run stops with a capture event once `|z − λ|` reaches the
/// singularity floor.
pub fn solve_tle(
    spec: &DrivingSpec,
    z0: Complex64,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<(SolutionPath<2>, Event)> {
    if !(z0.im > 0.0) {
        return Err(domain(format!("initial point {z0} is not in the upper half plane")));
    }
    let te = spec.domain_end();
    if !(horizon > 0.0 && horizon <= te) {
        return Err(domain(format!("horizon {horizon} must lie in (0, {te}]")));
    }
    let floor = cfg.singularity_floor;
    let guard = Guard::new(EventKind::Capture, |t, z: &[f64; 2]| {
        (z[0] - spec.at(t)).hypot(z[1]) - floor
    });
    let path = integrate_until(
        |t, z: &[f64; 2]| {
            let d = z[0] - spec.at(t);
            let r2 = d * d + z[1] * z[1];
            [2.0 * d / r2, -2.0 * z[1] / r2]
        },
        [z0.re, z0.im],
        (0.0, horizon),
        &[guard],
        &cfg.with_max_step(cfg.max_step.min(horizon / 64.0)),
    )?;
    let ev = path.event.expect("runs end with an event");
    Ok((path, ev))
}

/// The gap function of the imaginary equation.
#[derive(Debug, Clone)]
pub enum Gap {
    /// `θ(t) = c √(t_end − t)`.
    SqrtProfile { c: f64, t_end: f64 },
    General(Signal),
}

impl Gap {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Gap::SqrtProfile { c, t_end } => c * (t_end - t).max(0.0).sqrt(),
            Gap::General(f) => f.eval(t),
        }
    }
}

/// Fixed point of the height form with constant `η`, if any.
fn height_fixed_point(eta: f64) -> Option<f64> {
    (eta < 2.0).then(|| (4.0 - eta * eta).sqrt())
}

/// Fixed point of the difference form with constant `η`, if any.
fn difference_fixed_point(eta: f64) -> Option<f64> {
    (eta < 2.0).then(|| 4.0 / eta - eta)
}

/// Constant drivings: solutions below the fixed point decay, the fixed point
/// itself is stationary, and everything above grows without bound.
fn closed_form(fixed: Option<f64>, y0: f64) -> VanishClassification {
    let vanishing = fixed.is_some_and(|p| y0 <= p * (1.0 + FIXED_POINT_SLACK));
    VanishClassification {
        status: if vanishing { VanishStatus::Vanishing } else { VanishStatus::NotVanishingCertified },
        certificate: VanishCertificate::ClosedForm,
        witness_time: None,
    }
}

/// Imaginary equation on `[0, T]`. The square `Y²` is integrated, which
/// keeps the field bounded as `Y → 0`.
pub fn solve_ile(
    gap: &Gap,
    y0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<(SolutionPath<1>, VanishClassification)> {
    if !(y0 > 0.0) {
        return Err(domain(format!("initial height must be positive, got {y0}")));
    }
    if !(t_end > 0.0) {
        return Err(domain(format!("horizon must be positive, got {t_end}")));
    }
    let floor = cfg.singularity_floor;
    let guard = Guard::new(EventKind::Vanish, |_, u: &[f64; 1]| u[0] - floor * floor);
    let mut path = integrate_until(
        |t, u: &[f64; 1]| {
            let th = gap.eval(t);
            [-4.0 * u[0] / (th * th + u[0])]
        },
        [y0 * y0],
        (0.0, t_end),
        &[guard],
        &cfg.with_max_step(cfg.max_step.min(t_end / 64.0)),
    )?;
    for (v, d) in path.values.iter_mut().zip(path.derivs.iter_mut()) {
        let y = v[0].max(0.0).sqrt();
        d[0] = if y > 0.0 { d[0] / (2.0 * y) } else { f64::NEG_INFINITY };
        v[0] = y;
    }
    let ev = path.event.expect("runs end with an event");

    let class = match gap {
        Gap::SqrtProfile { c, t_end: te } if *te == t_end => {
            let mut cl = closed_form(height_fixed_point(*c), y0 / t_end.sqrt());
            if cl.is_vanishing() {
                cl.witness_time = Some(if ev.kind == EventKind::Vanish { ev.time } else { t_end });
            }
            cl
        }
        _ => match ev.kind {
            EventKind::Vanish => VanishClassification {
                status: VanishStatus::Vanishing,
                certificate: VanishCertificate::EventBisection,
                witness_time: Some(ev.time),
            },
            _ if path.last()[0] > cfg.near_tol() => VanishClassification {
                status: VanishStatus::NotVanishingCertified,
                certificate: VanishCertificate::Horizon,
                witness_time: Some(path.last_time()),
            },
            _ => VanishClassification {
                status: VanishStatus::Undecided,
                certificate: VanishCertificate::Horizon,
                witness_time: None,
            },
        },
    };
    Ok((path, class))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualForm {
    /// `ẏ = y − 4y/(η² + y²)`.
    Height,
    /// `ẇ = w − 4w/(η² + ηw)`.
    Difference,
}

impl DualForm {
    /// Logarithmic growth rate `ẏ/y`.
    fn rate(self, eta: f64, y: f64) -> f64 {
        match self {
            DualForm::Height => 1.0 - 4.0 / (eta * eta + y * y),
            DualForm::Difference => 1.0 - 4.0 / (eta * (eta + y)),
        }
    }

    fn fixed_point(self, eta: f64) -> Option<f64> {
        match self {
            DualForm::Height => height_fixed_point(eta),
            DualForm::Difference => difference_fixed_point(eta),
        }
    }
}

/// Integrates `v = ln y` so that decaying solutions never underflow.
/// Guards are in terms of `(s, v)`. The returned path holds `y`.
fn run_log(
    form: DualForm,
    eta: &Signal,
    y0: f64,
    s_horizon: f64,
    guards: &[Guard<'_, 1>],
    cfg: &IntegratorConfig,
) -> Result<SolutionPath<1>> {
    let stationary = eta
        .as_constant()
        .and_then(|c| form.fixed_point(c))
        .is_some_and(|p| (y0 - p).abs() <= FIXED_POINT_SLACK * p);
    let mut path = integrate_until(
        |s, v: &[f64; 1]| {
            if stationary {
                [0.0]
            } else {
                [form.rate(eta.eval(s), v[0].exp())]
            }
        },
        [y0.ln()],
        (0.0, s_horizon),
        guards,
        &cfg.with_max_step(cfg.max_step.min(0.25)),
    )?;
    for (v, d) in path.values.iter_mut().zip(path.derivs.iter_mut()) {
        let y = v[0].exp();
        d[0] *= y;
        v[0] = y;
    }
    Ok(path)
}

fn solve_dual(
    form: DualForm,
    eta: &Signal,
    y0: f64,
    s_horizon: f64,
    margin: f64,
    cfg: &IntegratorConfig,
) -> Result<(SolutionPath<1>, VanishClassification)> {
    if !(y0 > 0.0) {
        return Err(domain(format!("initial value must be positive, got {y0}")));
    }
    if !(s_horizon > TREND_WINDOW) {
        return Err(domain(format!("horizon must exceed {TREND_WINDOW}, got {s_horizon}")));
    }
    let eta_min = sampled_min(eta, s_horizon);
    match form {
        DualForm::Height if eta_min < 0.0 => {
            return Err(domain(format!("η is negative on the horizon (min {eta_min:.3e})")))
        }
        DualForm::Difference if !(eta_min > 0.0) => {
            return Err(domain(format!("η reaches zero on the horizon (min {eta_min:.3e})")))
        }
        _ => {}
    }
    // Level above which growth is certain.
    let (level, cert) = match form {
        DualForm::Height => (2.0, VanishCertificate::YCrossed2),
        DualForm::Difference => (
            (4.0 / eta_min - eta_min).max(0.0) + margin,
            VanishCertificate::Comparison,
        ),
    };
    let (ln_level, ln_vanish) = (level.ln(), VANISH_LEVEL.ln());
    let mut guards = vec![Guard::new(EventKind::Vanish, move |s, v: &[f64; 1]| v[0] - s - ln_vanish)];
    if y0 < level {
        guards.push(Guard::new(EventKind::Threshold, move |_, v: &[f64; 1]| v[0] - ln_level));
    }
    let path = run_log(form, eta, y0, s_horizon, &guards, cfg)?;
    let ev = path.event.expect("runs end with an event");

    if y0 >= level || ev.kind == EventKind::Threshold {
        let at = if y0 >= level { 0.0 } else { ev.time };
        return Ok((
            path,
            VanishClassification {
                status: VanishStatus::NotVanishingCertified,
                certificate: cert,
                witness_time: Some(at),
            },
        ));
    }
    if let Some(c) = eta.as_constant() {
        return Ok((path, closed_form(form.fixed_point(c), y0)));
    }
    if ev.kind == EventKind::Vanish {
        let end = path.last()[0];
        let before = path.at(ev.time - TREND_WINDOW)[0];
        if end <= before * (1.0 + FIXED_POINT_SLACK) {
            return Ok((
                path,
                VanishClassification {
                    status: VanishStatus::Vanishing,
                    certificate: VanishCertificate::Horizon,
                    witness_time: Some(ev.time),
                },
            ));
        }
    }
    Ok((
        path,
        VanishClassification {
            status: VanishStatus::Undecided,
            certificate: VanishCertificate::Horizon,
            witness_time: None,
        },
    ))
}

/// Height form. Certified not vanishing once `y ≥ 2`; vanishing when
/// `e^{−s} y` falls below [`VANISH_LEVEL`] while `y` is not increasing.
pub fn solve_frame_height(
    eta: &Signal,
    y0: f64,
    s_horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<(SolutionPath<1>, VanishClassification)> {
    solve_dual(DualForm::Height, eta, y0, s_horizon, 0.0, cfg)
}

/// Difference form with the default comparison margin.
pub fn solve_frame_difference(
    eta: &Signal,
    w0: f64,
    s_horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<(SolutionPath<1>, VanishClassification)> {
    solve_frame_difference_with_margin(eta, w0, s_horizon, COMPARISON_MARGIN, cfg)
}

/// Difference form. Once `w ≥ max(0, 4/η_min − η_min) + margin`, the rate
/// `ẇ/w = 1 − 4/(η(η + w))` stays above `1 − 4/(4 + η_min·margin) > 0`.
pub fn solve_frame_difference_with_margin(
    eta: &Signal,
    w0: f64,
    s_horizon: f64,
    margin: f64,
    cfg: &IntegratorConfig,
) -> Result<(SolutionPath<1>, VanishClassification)> {
    if !(margin > 0.0) {
        return Err(domain(format!("comparison margin must be positive, got {margin}")));
    }
    solve_dual(DualForm::Difference, eta, w0, s_horizon, margin, cfg)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransitionProfile {
    /// Value from the implicit closed form.
    pub y: f64,
    /// Value from integrating the equation directly.
    pub y_ode: f64,
    pub deviation: f64,
}

/// `t` as a function of `L = ln(y/ε)` along the solution of
/// `ẏ = 2y/(y² + ct)` started at `ε`.
fn profile_time(c: f64, eps: f64, l: f64) -> f64 {
    let k = 0.5 * (c - 4.0);
    let y2 = eps * eps * (2.0 * l).exp();
    let kl = k * l;
    let ratio = if kl.abs() < 1e-8 { l * (1.0 + 0.5 * kl) } else { kl.exp_m1() / k };
    0.5 * y2 * ratio
}

/// `y_ε(T)` for `ẏ = 2y/(y² + ct)`, `y(0) = ε`, from the implicit closed
/// form, checked against direct integration.
pub fn transition_profile(c: f64, eps: f64, t_end: f64) -> Result<TransitionProfile> {
    if !(c >= 0.0 && eps > 0.0 && t_end > 0.0) {
        return Err(domain(format!("need c ≥ 0, ε > 0, T > 0; got ({c}, {eps}, {t_end})")));
    }
    let g = |l: f64| profile_time(c, eps, l) - t_end;
    let mut hi = 1.0;
    while !(g(hi) >= 0.0) {
        hi *= 2.0;
        if hi > 1e5 {
            return Err(numeric(format!(
                "no bracket for c = {c}, ε = {eps}, T = {t_end}: t(ln y/ε = {hi}) = {}",
                profile_time(c, eps, hi)
            )));
        }
    }
    let l = quad::bisect(&g, 0.0, hi, 1e-15 * hi.max(1.0))?;
    let y = eps * l.exp();

    let cfg = IntegratorConfig::default().with_tol(1e-12);
    let path = integrate_until(
        |t, v: &[f64; 1]| [2.0 * v[0] / (v[0] * v[0] + c * t)],
        [eps],
        (0.0, t_end),
        &[],
        &cfg.with_max_step(t_end / 16.0),
    )?;
    let y_ode = path.last()[0];
    Ok(TransitionProfile { y, y_ode, deviation: (y - y_ode).abs() })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LowerBound {
    pub value: f64,
    pub error: f64,
    /// `η` touched zero, so the integral is `−∞`.
    pub singular: bool,
}

/// `L(t) = ∫₀ᵗ (1 − 4/η²)`.
pub fn lower_bound_function(eta: &Signal, t: f64) -> Result<LowerBound> {
    if !(t >= 0.0) {
        return Err(domain(format!("lower bound needs t ≥ 0, got {t}")));
    }
    if let Some(c) = eta.as_constant() {
        if c == 0.0 {
            return Ok(LowerBound { value: f64::NEG_INFINITY, error: 0.0, singular: true });
        }
        return Ok(LowerBound { value: t * (1.0 - 4.0 / (c * c)), error: 0.0, singular: false });
    }
    if t == 0.0 {
        return Ok(LowerBound { value: 0.0, error: 0.0, singular: false });
    }
    if sampled_min(&eta.map(|_, v| v.abs()), t) == 0.0 {
        return Ok(LowerBound { value: f64::NEG_INFINITY, error: 0.0, singular: true });
    }
    let f = |s: f64| {
        let e = eta.eval(s);
        1.0 - 4.0 / (e * e)
    };
    let r = quad::integrate(&f, 0.0, t, &eta.breakpoints(0.0, t), &QuadConfig::default());
    if !r.value.is_finite() {
        return Ok(LowerBound { value: f64::NEG_INFINITY, error: 0.0, singular: true });
    }
    Ok(LowerBound { value: r.value, error: r.error, singular: false })
}

#[derive(Debug, Clone, Serialize)]
pub struct HTransform {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
}

/// `H(η)(t) = η(t) + ∫₀^∞ 4e^{−s}/η(t + s) ds`.
pub fn operator_h(eta: &Signal, grid: &[f64]) -> Result<HTransform> {
    if grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(domain("operator H needs grid points in [0, ∞)"));
    }
    if let Some(c) = eta.as_constant() {
        if !(c > 0.0) {
            return Err(domain(format!("η must be positive, got {c}")));
        }
        return Ok(HTransform {
            t: grid.to_vec(),
            values: vec![c + 4.0 / c; grid.len()],
            errors: vec![0.0; grid.len()],
        });
    }
    let qc = QuadConfig::default();
    let rows: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&t| {
            let e0 = eta.eval(t);
            if !(e0 > 0.0) {
                return Err(domain(format!("η({t}) = {e0} is not positive")));
            }
            let f = |u: f64| 4.0 * (-u).exp() / eta.eval(t + u);
            let breaks: Vec<f64> = eta.breakpoints(t, t + H_LEN).iter().map(|b| b - t).collect();
            let (r, _) = integrate_to_infinity(&f, 0.0, H_LEN, H_WINDOW, &breaks, &qc)?;
            Ok((e0 + r.value, r.error))
        })
        .collect::<Result<_>>()?;
    Ok(HTransform {
        t: grid.to_vec(),
        values: rows.iter().map(|r| r.0).collect(),
        errors: rows.iter().map(|r| r.1).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HConsistency {
    pub max_deviation: f64,
    pub at: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: Option<String>,
}

pub const H_TOLERANCE: f64 = 1e-4;

/// Checks `H(ξ − x̂) = ξ` for a captured frame solution `x̂` of the driving `ξ`.
pub fn h_consistency(xi: &Signal, x_hat: &Signal, grid: &[f64]) -> HConsistency {
    let pair = DualPair::new(xi, x_hat);
    match operator_h(&pair.eta, grid) {
        Ok(h) => {
            let (mut dev, mut at) = (0.0, grid.first().copied().unwrap_or(0.0));
            for (t, v) in grid.iter().zip(&h.values) {
                let d = (v - xi.eval(*t)).abs();
                if !(d <= dev) {
                    dev = d;
                    at = *t;
                }
            }
            HConsistency { max_deviation: dev, at, tolerance: H_TOLERANCE, passed: dev <= H_TOLERANCE, note: None }
        }
        Err(e) => HConsistency {
            max_deviation: f64::INFINITY,
            at: f64::NAN,
            tolerance: H_TOLERANCE,
            passed: false,
            note: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionLabel {
    Vanishing,
    NotVanishing,
    BoundaryNotVanishing,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransitionReport {
    pub c: f64,
    pub t_end: f64,
    pub label: TransitionLabel,
    /// Initial height used for the backing run.
    pub y0: f64,
    pub run: VanishClassification,
    /// The backing run agrees with the label.
    pub consistent: bool,
}

/// Classifies the gap `θ(t) = C√(T − t)`. Below 2 the initial height
/// `√(T(4 − C²))` gives a vanishing solution.
pub fn transition_classify(c: f64, t_end: f64, cfg: &IntegratorConfig) -> Result<TransitionReport> {
    if !(c >= 0.0 && t_end > 0.0) {
        return Err(domain(format!("need C ≥ 0 and T > 0, got ({c}, {t_end})")));
    }
    let (label, y0) = if c < 2.0 {
        (TransitionLabel::Vanishing, (t_end * (4.0 - c * c)).sqrt())
    } else if c == 2.0 {
        (TransitionLabel::BoundaryNotVanishing, t_end.sqrt())
    } else {
        (TransitionLabel::NotVanishing, t_end.sqrt())
    };
    let (_, run) = solve_ile(&Gap::SqrtProfile { c, t_end }, y0, t_end, cfg)?;
    let consistent = run.is_vanishing() == (label == TransitionLabel::Vanishing);
    Ok(TransitionReport { c, t_end, label, y0, run, consistent })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpreadReport {
    pub form: DualForm,
    pub initial: Vec<f64>,
    pub classifications: Vec<VanishClassification>,
    /// Values at the horizon, in the order of `initial`.
    pub terminal: Vec<f64>,
    pub vanishing: Vec<f64>,
    /// Largest pairwise terminal difference among vanishing solutions.
    pub max_gap: f64,
    /// Largest terminal value among vanishing solutions other than the greatest.
    pub rest_max: f64,
    pub vacuous: bool,
    pub passed: bool,
}

pub const SPREAD_TOLERANCE: f64 = 1e-6;

/// Runs several initial values and checks that all vanishing solutions
/// except possibly the greatest tend to 0.
pub fn vanish_spread_diagnostic(
    form: DualForm,
    eta: &Signal,
    initial: &[f64],
    s_horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<SpreadReport> {
    if initial.len() < 2 {
        return Err(domain("spread diagnostic needs at least two initial values"));
    }
    let rows: Vec<(VanishClassification, f64)> = initial
        .par_iter()
        .map(|&y0| {
            let (_, cl) = solve_dual(form, eta, y0, s_horizon, COMPARISON_MARGIN, cfg)?;
            // Floor guard far below anything meaningful: the height form can
            // reach zero in finite time when η is small.
            let g = Guard::new(EventKind::Vanish, |_, v: &[f64; 1]| v[0] + 690.0);
            let p = run_log(form, eta, y0, s_horizon, &[g], cfg)?;
            let end = if p.event_kind() == Some(EventKind::Horizon) { p.last()[0] } else { 0.0 };
            Ok((cl, end))
        })
        .collect::<Result<_>>()?;
    let mut van: Vec<(f64, f64)> = initial
        .iter()
        .zip(&rows)
        .filter(|(_, r)| r.0.is_vanishing())
        .map(|(y0, r)| (*y0, r.1))
        .collect();
    van.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut max_gap: f64 = 0.0;
    for i in 0..van.len() {
        for j in i + 1..van.len() {
            max_gap = max_gap.max((van[i].1 - van[j].1).abs());
        }
    }
    let rest_max = van.iter().rev().skip(1).map(|v| v.1.abs()).fold(0.0, f64::max);
    Ok(SpreadReport {
        form,
        initial: initial.to_vec(),
        classifications: rows.iter().map(|r| r.0).collect(),
        terminal: rows.iter().map(|r| r.1).collect(),
        vanishing: van.iter().map(|v| v.0).collect(),
        max_gap,
        rest_max,
        vacuous: van.is_empty(),
        passed: rest_max < SPREAD_TOLERANCE,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundedGapReport {
    pub lower_bound: f64,
    /// Initial value of a vanishing difference-form solution staying below the bound.
    pub w0: Option<f64>,
    pub difference: Option<VanishClassification>,
    pub height: Option<VanishClassification>,
    pub vacuous: bool,
    pub holds: bool,
}

/// With `η ≥ c > 0`, a vanishing difference-form solution below `c` forces the
/// height-form solution from the same start to vanish too.
pub fn bounded_gap_probe(eta: &Signal, s_horizon: f64, cfg: &IntegratorConfig) -> Result<BoundedGapReport> {
    let c = sampled_min(eta, s_horizon);
    if !(c > 0.0) {
        return Err(precondition(format!("η needs a positive lower bound, found {c:.3e}")));
    }
    for k in 1..=8 {
        let w0 = c * 0.5f64.powi(k);
        let (path, cl) = solve_frame_difference(eta, w0, s_horizon, cfg)?;
        let below = path.values.iter().all(|v| v[0] < c);
        if cl.is_vanishing() && below {
            let (_, height) = solve_frame_height(eta, w0, s_horizon, cfg)?;
            return Ok(BoundedGapReport {
                lower_bound: c,
                w0: Some(w0),
                difference: Some(cl),
                height: Some(height),
                vacuous: false,
                holds: height.is_vanishing(),
            });
        }
    }
    Ok(BoundedGapReport { lower_bound: c, w0: None, difference: None, height: None, vacuous: true, holds: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tran_time_is_continuous_at_the_critical_value() {
        let a = profile_time(4.0, 0.01, 3.0);
        let b = profile_time(4.0 + 1e-9, 0.01, 3.0);
        assert!((a - b).abs() < 1e-9 * a);
        assert!((a - 0.5 * 0.01f64.powi(2) * 3f64.exp().powi(2) * 3.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_points() {
        assert_eq!(height_fixed_point(2.0), None);
        assert!((height_fixed_point(2f64.sqrt()).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(difference_fixed_point(1.0), Some(3.0));
    }
}
