//! The real Loewner equation, its self-similar frame, capture detection and
//! the operators linking a captured solution to its driving.
//!
//! In the frame attached to a horizon `T`, original time `t` becomes
//! `s = −½ ln(1 − t/T)`, a real solution `X` becomes
//! `x = d(λ(T) − X)/√(T−t)` and the driving becomes
//! `ξ = d(λ(T) − λ)/√(T−t)`, where `d = ±1` orients the picture so that the
//! solution approaches from above. The equation reads `ẋ = x − 4/(ξ − x)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::driving::{DrivingSpec, Family};
use crate::error::{domain, numeric, precondition, Error, Result};
use crate::ode_engine::{integrate_until, EventKind, Guard, IntegratorConfig, SolutionPath};
use crate::quad::{self, fit_tail, QuadConfig};
use crate::sharp::{Branch, SharpExample};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameMap {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub lambda_t: f64,
    /// +1 when λ(T) is approached from below (upper record), −1 otherwise.
    pub direction: f64,
}

impl FrameMap {
    pub fn new(t_end: f64, lambda_t: f64, direction: f64) -> Result<Self> {
        if !(t_end > 0.0) {
            return Err(domain(format!("frame horizon must be positive, got {t_end}")));
        }
        if direction != 1.0 && direction != -1.0 {
            return Err(domain(format!("direction must be ±1, got {direction}")));
        }
        Ok(FrameMap { t_end, lambda_t, direction })
    }

    pub fn for_driving(spec: &DrivingSpec, t_end: f64, direction: f64) -> Result<Self> {
        FrameMap::new(t_end, spec.eval(t_end)?, direction)
    }

    pub fn sigma(s: f64) -> f64 {
        -(-2.0 * s).exp_m1()
    }

    pub fn s_of_t(&self, t: f64) -> f64 {
        -0.5 * (-t / self.t_end).ln_1p()
    }

    pub fn t_of_s(&self, s: f64) -> f64 {
        self.t_end * FrameMap::sigma(s)
    }

    /// `√(T − t)` at frame time `s`.
    pub fn root_gap(&self, s: f64) -> f64 {
        self.t_end.sqrt() * (-s).exp()
    }

    pub fn to_frame(&self, t: f64, v: f64) -> f64 {
        self.direction * (self.lambda_t - v) / (self.t_end - t).sqrt()
    }

    /// Inverse of [`FrameMap::to_frame`]; applies to both solutions and drivings.
    pub fn from_frame(&self, s: f64, w: f64) -> f64 {
        self.lambda_t - self.direction * self.root_gap(s) * w
    }
}

/// Transformed driving `ξ` on `[0, ∞)`.
pub fn to_holder_frame(spec: &DrivingSpec, frame: &FrameMap) -> Signal {
    let d = frame.direction;
    let te = frame.t_end;
    let native = (te - spec.domain_end()).abs() <= 1e-15 * te
        && (frame.lambda_t - spec.at(te)).abs() <= 1e-12 * (1.0 + frame.lambda_t.abs());
    if native {
        match &spec.family {
            Family::SqrtApproach { c } => return Signal::constant(d * c),
            Family::Constant { .. } => return Signal::constant(0.0),
            _ => {}
        }
        let sp = spec.clone();
        let lt = te.ln();
        let sig = Signal::new(move |s| d * sp.end_ratio(lt - 2.0 * s));
        return match &spec.family {
            Family::SharpExample { example, .. } => {
                let ex = example.clone();
                sig.with_breaks(move |a, b| ex.knots(a, b))
            }
            Family::Sampled { times, .. } => {
                let fr = *frame;
                let knots: Vec<f64> = times
                    .iter()
                    .filter(|&&t| t > 0.0 && t < te)
                    .map(|&t| fr.s_of_t(t))
                    .collect();
                sig.with_breaks(move |a, b| knots.iter().copied().filter(|&k| k > a && k < b).collect())
            }
            _ => sig,
        };
    }
    let sp = spec.clone();
    let fr = *frame;
    Signal::new(move |s| {
        let u = te * (-2.0 * s).exp();
        if u <= 0.0 {
            return 0.0;
        }
        fr.direction * (fr.lambda_t - sp.at(te - u)) / u.sqrt()
    })
}

/// λ on `[0, T)` recovered from a frame driving.
pub fn from_holder_frame(xi: &Signal, frame: &FrameMap, t: f64) -> f64 {
    let s = frame.s_of_t(t);
    frame.from_frame(s, xi.eval(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureStatus {
    Captured,
    Escaped,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureCertificate {
    EventBisection,
    GTest,
    FixedPointBand,
    HorizonExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaptureReport {
    pub initial: f64,
    pub status: CaptureStatus,
    pub capture_time: Option<f64>,
    pub certificate: CaptureCertificate,
    /// Transformed time reached; infinite (serialized as null) when the
    /// original-time run ends exactly at `T`.
    pub horizon_used: f64,
}

fn rle_config(cfg: &IntegratorConfig, horizon: f64) -> IntegratorConfig {
    cfg.with_max_step(cfg.max_step.min(horizon / 64.0))
}

/// Integrates `Ẋ = 2/(X − λ(t))` on `[0, horizon]`, `horizon ≤ T`.
pub fn solve_rle(
    spec: &DrivingSpec,
    x0: f64,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<(SolutionPath<1>, CaptureReport)> {
    let te = spec.domain_end();
    let l0 = spec.at(0.0);
    if x0 == l0 {
        return Err(domain(format!("initial point {x0} sits on the driving at t = 0")));
    }
    if !(horizon > 0.0 && horizon <= te) {
        return Err(domain(format!("horizon {horizon} must lie in (0, {te}]")));
    }
    let d = (x0 - l0).signum();
    let floor = cfg.singularity_floor;
    let guard = Guard::new(EventKind::Capture, |t, y: &[f64; 1]| d * (y[0] - spec.at(t)) - floor);
    let run_cfg = rle_config(cfg, horizon);
    let path = integrate_until(
        |t, y: &[f64; 1]| [2.0 / (y[0] - spec.at(t))],
        [x0],
        (0.0, horizon),
        &[guard],
        &run_cfg,
    )?;
    let s_of = |t: f64| {
        if t >= te {
            f64::INFINITY
        } else {
            -0.5 * (-t / te).ln_1p()
        }
    };
    let ev = path.event.expect("runs end with an event");
    let report = match ev.kind {
        EventKind::Capture => CaptureReport {
            initial: x0,
            status: CaptureStatus::Captured,
            capture_time: Some(ev.time),
            certificate: CaptureCertificate::EventBisection,
            horizon_used: s_of(ev.time),
        },
        EventKind::Horizon => {
            let gap = d * (path.last()[0] - spec.at(horizon));
            if gap <= cfg.near_tol() {
                CaptureReport {
                    initial: x0,
                    status: CaptureStatus::Captured,
                    capture_time: Some(horizon),
                    certificate: CaptureCertificate::EventBisection,
                    horizon_used: s_of(horizon),
                }
            } else {
                CaptureReport {
                    initial: x0,
                    status: CaptureStatus::Escaped,
                    capture_time: None,
                    certificate: CaptureCertificate::HorizonExhausted,
                    horizon_used: s_of(horizon),
                }
            }
        }
        _ => CaptureReport {
            initial: x0,
            status: CaptureStatus::Undecided,
            capture_time: None,
            certificate: CaptureCertificate::HorizonExhausted,
            horizon_used: s_of(ev.time),
        },
    };
    Ok((path, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameOutcome {
    /// `0 < x < ξ` up to the horizon.
    CapturedCandidate,
    /// `x` reached 0: the original solution crossed λ(T) before `T`.
    EscapedZero { at: f64 },
    /// `ξ − x` reached the floor: the original solution was captured before `T`.
    EscapedSingular { at: f64 },
    /// The integrator could not classify the run.
    Undecided { at: f64 },
}

/// Integrates `ẋ = x − 4/(ξ − x)` on `[0, s_horizon]`.
pub fn solve_frame_rle(
    xi: &Signal,
    x0: f64,
    s_horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<(SolutionPath<1>, FrameOutcome)> {
    let xi0 = xi.eval(0.0);
    if !(x0 > 0.0 && x0 < xi0) {
        return Err(domain(format!("frame initial value {x0} must lie in (0, ξ(0) = {xi0})")));
    }
    let floor = cfg.singularity_floor;
    let guards = [
        Guard::new(EventKind::Vanish, |_, y: &[f64; 1]| y[0]),
        Guard::new(EventKind::Capture, |s, y: &[f64; 1]| xi.eval(s) - y[0] - floor),
    ];
    let path = integrate_until(
        |s, y: &[f64; 1]| [y[0] - 4.0 / (xi.eval(s) - y[0])],
        [x0],
        (0.0, s_horizon),
        &guards,
        cfg,
    )?;
    let ev = path.event.expect("runs end with an event");
    let out = match ev.kind {
        EventKind::Horizon => FrameOutcome::CapturedCandidate,
        EventKind::Vanish => FrameOutcome::EscapedZero { at: ev.time },
        EventKind::Capture => FrameOutcome::EscapedSingular { at: ev.time },
        _ => FrameOutcome::Undecided { at: ev.time },
    };
    Ok((path, out))
}

/// Flags for membership of `φ` in the admissible class: positive,
/// integrable, and `e^{2s}φ(s) → ∞`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AdmissibleFlags {
    pub positive: bool,
    pub integrable: bool,
    pub e2s_diverges: bool,
    /// Fitted exponential decay rate of the tail.
    pub tail_rate: f64,
}

impl AdmissibleFlags {
    pub fn all(&self) -> bool {
        self.positive && self.integrable && self.e2s_diverges
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformT {
    pub s: Vec<f64>,
    /// `Φ(s) = e^s ∫_s^∞ φ`.
    pub values: Vec<f64>,
    /// `∫_s^∞ φ` before the exponential factor.
    pub tails: Vec<f64>,
    /// Absolute error bound on `Φ`.
    pub errors: Vec<f64>,
    pub flags: AdmissibleFlags,
}

/// Extra integration length beyond the last grid point, and the window used
/// for the tail fit.
const TAIL_LEN: f64 = 40.0;
const TAIL_WINDOW: f64 = 10.0;
/// Slack below 2 that the fitted rate needs for `e^{2s}φ` to count as divergent.
const RATE_MARGIN: f64 = 1e-6;

pub fn operator_t(phi: &Signal, grid: &[f64]) -> Result<TransformT> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] < 0.0 {
        return Err(domain("operator T needs an increasing grid in [0, ∞)"));
    }
    let qc = QuadConfig::default();
    let f = |s: f64| phi.eval(s);
    let last = *grid.last().unwrap();
    let cut = last + TAIL_LEN;
    let fit = fit_tail(&f, cut - TAIL_WINDOW, cut)?;
    let n = grid.len();
    let mut tails = vec![0.0; n];
    let mut errs = vec![0.0; n];
    let body = quad::integrate(&f, last, cut, &phi.breakpoints(last, cut), &qc);
    tails[n - 1] = body.value + fit.tail;
    errs[n - 1] = body.error + 1e-3 * fit.tail.abs();
    for i in (0..n - 1).rev() {
        let (a, b) = (grid[i], grid[i + 1]);
        let piece = quad::integrate(&f, a, b, &phi.breakpoints(a, b), &qc);
        tails[i] = tails[i + 1] + piece.value;
        errs[i] = errs[i + 1] + piece.error;
    }
    let positive = grid.iter().chain([cut - TAIL_WINDOW, cut].iter()).all(|&s| phi.eval(s) > 0.0);
    let flags = AdmissibleFlags {
        positive,
        integrable: fit.rate > 0.0,
        e2s_diverges: fit.rate < 2.0 - RATE_MARGIN,
        tail_rate: fit.rate,
    };
    let values = grid.iter().zip(&tails).map(|(s, j)| s.exp() * j).collect();
    let errors = grid.iter().zip(&errs).map(|(s, e)| s.exp() * e).collect();
    Ok(TransformT { s: grid.to_vec(), values, tails, errors, flags })
}

/// `F(Φ) = Φ + 4/(Φ − Φ̇)` with a five-point derivative of step `h`.
pub fn operator_f(big_phi: &Signal, grid: &[f64], h: f64) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&s| {
            let p = |k: f64| big_phi.eval(s + k * h);
            let d = if s - 2.0 * h >= 0.0 {
                (p(-2.0) - 8.0 * p(-1.0) + 8.0 * p(1.0) - p(2.0)) / (12.0 * h)
            } else {
                (-25.0 * p(0.0) + 48.0 * p(1.0) - 36.0 * p(2.0) + 16.0 * p(3.0) - 3.0 * p(4.0))
                    / (12.0 * h)
            };
            apply_f(s, p(0.0), d)
        })
        .collect()
}

/// `F` on sampled data, derivative by central differences (one-sided at the ends).
pub fn operator_f_sampled(s: &[f64], big_phi: &[f64]) -> Result<Vec<f64>> {
    let n = s.len();
    if n < 3 || big_phi.len() != n {
        return Err(domain("sampled operator F needs ≥ 3 matching samples"));
    }
    (0..n)
        .map(|i| {
            let d = if i == 0 {
                (big_phi[1] - big_phi[0]) / (s[1] - s[0])
            } else if i == n - 1 {
                (big_phi[n - 1] - big_phi[n - 2]) / (s[n - 1] - s[n - 2])
            } else {
                (big_phi[i + 1] - big_phi[i - 1]) / (s[i + 1] - s[i - 1])
            };
            apply_f(s[i], big_phi[i], d)
        })
        .collect()
}

fn apply_f(s: f64, v: f64, d: f64) -> Result<f64> {
    let den = v - d;
    if !(den > 0.0) {
        return Err(domain(format!("Φ − Φ' = {den:.3e} ≤ 0 at s = {s}")));
    }
    Ok(v + 4.0 / den)
}

/// `F(T(φ))` using the identity `Φ − Φ̇ = e^s φ`.
pub fn driving_from_phi(t: &TransformT, phi: &Signal) -> Vec<f64> {
    t.s.iter()
        .zip(&t.values)
        .map(|(&s, &v)| v + 4.0 / (s.exp() * phi.eval(s)))
        .collect()
}

/// Tabulated `J(s) = ∫_s^∞ φ` with cubic Hermite interpolation (`J' = −φ`).
struct TailTable {
    h: f64,
    j: Vec<f64>,
    dj: Vec<f64>,
    phi: Signal,
}

impl TailTable {
    fn new(phi: &Signal, s_max: f64, h: f64) -> Result<Self> {
        let n = (s_max / h).ceil() as usize;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
        let t = operator_t(phi, &grid)?;
        let dj = grid.iter().map(|&s| -phi.eval(s)).collect();
        Ok(TailTable { h, j: t.tails, dj, phi: phi.clone() })
    }

    fn eval(&self, s: f64) -> f64 {
        let n = self.j.len() - 1;
        let x = (s / self.h).max(0.0);
        let i = (x.floor() as usize).min(n - 1);
        let u = x - i as f64;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u),
            u * (1.0 - u) * (1.0 - u),
            u * u * (3.0 - 2.0 * u),
            u * u * (u - 1.0),
        );
        h00 * self.j[i] + h10 * self.h * self.dj[i] + h01 * self.j[i + 1] + h11 * self.h * self.dj[i + 1]
    }
}

/// A driving/solution pair assembled from an admissible `φ`.
pub struct Reconstruction {
    pub frame: FrameMap,
    table: TailTable,
}

impl Reconstruction {
    pub fn x_at(&self, t: f64) -> f64 {
        let s = self.frame.s_of_t(t);
        self.frame.lambda_t - self.frame.direction * self.frame.t_end.sqrt() * self.table.eval(s)
    }

    pub fn lambda_at(&self, t: f64) -> f64 {
        let s = self.frame.s_of_t(t);
        let te = self.frame.t_end;
        self.x_at(t) - self.frame.direction * 4.0 * (te - t) / (te.sqrt() * self.table.phi.eval(s))
    }

    /// `|X − λ|` at frame time `s`, in closed form.
    pub fn gap_at_frame(&self, s: f64) -> f64 {
        4.0 * self.frame.t_end.sqrt() * (-2.0 * s).exp() / self.table.phi.eval(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTrip {
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub x: Vec<f64>,
    pub residual: f64,
    pub residual_at: f64,
    pub terminal_gap: f64,
    pub flags: AdmissibleFlags,
}

#[derive(Debug, Clone, Copy)]
pub struct RoundTripConfig {
    /// Frame time up to which the reconstructed pair is re-integrated.
    pub s_check: f64,
    /// Frame time at which the terminal gap is measured.
    pub s_terminal: f64,
    pub points: usize,
    pub tolerance: f64,
}

impl Default for RoundTripConfig {
    fn default() -> Self {
        RoundTripConfig { s_check: 10.0, s_terminal: 30.0, points: 1000, tolerance: 1e-6 }
    }
}

/// Builds `(λ, X)` from `φ` and checks that `X` solves the real equation
/// driven by `λ` and meets it at `T`.
pub fn phi_roundtrip(
    phi: &Signal,
    frame: &FrameMap,
    rc: &RoundTripConfig,
    cfg: &IntegratorConfig,
) -> Result<(Reconstruction, RoundTrip)> {
    let table = TailTable::new(phi, rc.s_terminal + 1.0, 1e-3)?;
    let flags = operator_t(phi, &[0.0, rc.s_terminal])?.flags;
    if !flags.all() {
        return Err(precondition(format!("φ fails the admissibility flags: {flags:?}")));
    }
    let rec = Reconstruction { frame: *frame, table };
    let t_check = frame.t_of_s(rc.s_check);
    let d = frame.direction;
    let floor = cfg.singularity_floor;
    let guard = Guard::new(EventKind::Capture, |t, y: &[f64; 1]| d * (y[0] - rec.lambda_at(t)) - floor);
    let path = integrate_until(
        |t, y: &[f64; 1]| [2.0 / (y[0] - rec.lambda_at(t))],
        [rec.x_at(0.0)],
        (0.0, t_check),
        &[guard],
        &cfg.with_max_step(t_check / 64.0),
    )?;
    if path.event_kind() != Some(EventKind::Horizon) {
        return Err(numeric(format!("re-integration stopped early: {:?}", path.event)));
    }
    let n = rc.points.max(2);
    let t: Vec<f64> = (0..n).map(|i| t_check * i as f64 / (n - 1) as f64).collect();
    let x: Vec<f64> = t.iter().map(|&v| rec.x_at(v)).collect();
    let lambda: Vec<f64> = t.iter().map(|&v| rec.lambda_at(v)).collect();
    let (mut residual, mut residual_at) = (0.0, 0.0);
    for (tv, xv) in t.iter().zip(&x) {
        let r = (path.at(*tv)[0] - xv).abs();
        if r > residual {
            residual = r;
            residual_at = *tv;
        }
    }
    let terminal_gap = rec.gap_at_frame(rc.s_terminal);
    if residual > rc.tolerance || terminal_gap > rc.tolerance {
        return Err(Error::Reconstruction {
            residual: residual.max(terminal_gap),
            tolerance: rc.tolerance,
            at: if residual > rc.tolerance { residual_at } else { frame.t_of_s(rc.s_terminal) },
        });
    }
    Ok((rec, RoundTrip { t, lambda, x, residual, residual_at, terminal_gap, flags }))
}

/// `G(x) = 4 − x` for `x ≥ 2`, `4/x` on `[0, 2]`.
pub fn g_function(x: f64) -> f64 {
    if x >= 2.0 {
        4.0 - x
    } else {
        4.0 / x
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GTestReport {
    pub t1: f64,
    pub t2: f64,
    pub integral: f64,
    pub error: f64,
    pub threshold: f64,
    pub certified: bool,
}

/// Non-capture certificate: `∫_{t1}^{t2} G(ξ) ≥ ξ(t1)` with the quadrature
/// error charged against the integral.
pub fn g_test(xi: &Signal, t1: f64, t2: f64) -> Result<GTestReport> {
    if !(t2 > t1 && t1 >= 0.0) {
        return Err(domain(format!("G-test needs t2 > t1 ≥ 0, got ({t1}, {t2})")));
    }
    let neg = std::sync::atomic::AtomicBool::new(false);
    let f = |s: f64| {
        let v = xi.eval(s);
        if v < 0.0 {
            neg.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        g_function(v.max(0.0))
    };
    let (integral, error) = match xi.as_constant() {
        Some(c) => ((t2 - t1) * g_function(c.max(0.0)), 0.0),
        None => {
            let r = quad::integrate(&f, t1, t2, &xi.breakpoints(t1, t2), &QuadConfig::default());
            (r.value, r.error)
        }
    };
    if neg.into_inner() || xi.eval(t1) < 0.0 {
        return Err(domain(format!("ξ is negative somewhere on [{t1}, {t2}]")));
    }
    let threshold = xi.eval(t1);
    let slack = 4.0 * f64::EPSILON * integral.abs().max(threshold.abs());
    Ok(GTestReport {
        t1,
        t2,
        integral,
        error,
        threshold,
        certified: integral - error >= threshold - slack,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CaptureBracket {
    pub x0: f64,
    pub x_t: f64,
    /// `(C1 + 2)√T`.
    pub bound: f64,
    pub holds: bool,
}

/// Evaluates `|λ(T) − λ(t)|/√(T − t)` on a mixed uniform/geometric grid.
fn end_ratios(spec: &DrivingSpec, t_end: f64, n: usize) -> Vec<(f64, f64)> {
    let lt = spec.at(t_end);
    let native = (t_end - spec.domain_end()).abs() <= 1e-15 * t_end;
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let t = t_end * i as f64 / n as f64;
            (t, (lt - spec.at(t)).abs() / (t_end - t).sqrt())
        })
        .collect();
    for k in 1..=60 {
        let u = t_end / n as f64 * 0.5f64.powi(k);
        let r = if native {
            spec.end_ratio(u.ln()).abs()
        } else {
            (lt - spec.at(t_end - u)).abs() / u.sqrt()
        };
        out.push((t_end - u, r));
    }
    out
}

/// Solution started at `λ(T) + C1√T` stays within `(C1 + 2)√T` of λ(T).
pub fn capture_bracket(
    spec: &DrivingSpec,
    t_end: f64,
    c1: f64,
    cfg: &IntegratorConfig,
) -> Result<CaptureBracket> {
    if !(t_end > 0.0 && t_end <= spec.domain_end()) {
        return Err(domain(format!("T = {t_end} outside (0, {}]", spec.domain_end())));
    }
    let bad: Vec<f64> = end_ratios(spec, t_end, 2000)
        .into_iter()
        .filter(|&(_, r)| r > c1 * (1.0 + 1e-12))
        .map(|(t, _)| t)
        .collect();
    if !bad.is_empty() {
        return Err(precondition(format!(
            "|λ(T) − λ(t)|/√(T − t) exceeds C1 = {c1} at {} points, first t = {:?}",
            bad.len(),
            &bad[..bad.len().min(5)]
        )));
    }
    let lt = spec.at(t_end);
    let x0 = lt + c1 * t_end.sqrt();
    let x0 = if x0 == spec.at(0.0) { x0 + 1e-12 } else { x0 };
    let (path, _) = solve_rle(spec, x0, t_end, cfg)?;
    let x_t = path.last()[0];
    let bound = (c1 + 2.0) * t_end.sqrt();
    Ok(CaptureBracket { x0, x_t, bound, holds: x_t - lt < bound })
}

#[derive(Debug, Clone, Copy)]
pub struct ScanConfig {
    pub s_horizon: f64,
    /// Relative capture-time tolerance for membership.
    pub membership_tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            s_horizon: 25.0,
            membership_tol: 1e-4,
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub reports: Vec<CaptureReport>,
    /// `[min, max]` of members above λ(0).
    pub upper: Option<(f64, f64)>,
    /// `[min, max]` of members below λ(0).
    pub lower: Option<(f64, f64)>,
    pub undecided: Vec<f64>,
    /// Grid spacing next to each reported endpoint.
    pub cell: f64,
}

impl ScanResult {
    pub fn is_empty(&self) -> bool {
        self.upper.is_none() && self.lower.is_none()
    }

    pub fn is_member(&self, r: &CaptureReport) -> bool {
        member(r, self.t_end, 1e-4)
    }
}

fn member(r: &CaptureReport, t_end: f64, tol: f64) -> bool {
    r.status == CaptureStatus::Captured
        && r.capture_time.is_some_and(|t| (t - t_end).abs() <= tol * t_end)
}

/// Whether λ(T) is a strict record (in direction `d`) on a sampling grid.
fn strict_record(spec: &DrivingSpec, t_end: f64, d: f64) -> bool {
    let lt = spec.at(t_end);
    (0..4000).all(|i| d * (lt - spec.at(t_end * i as f64 / 4000.0)) > 0.0)
}

/// Precomputed per-side data shared by all grid points on that side.
struct Side {
    frame: FrameMap,
    xi: Signal,
    g_certified: bool,
    record: bool,
}

impl Side {
    fn new(spec: &DrivingSpec, t_end: f64, d: f64, s_horizon: f64) -> Result<Self> {
        let frame = FrameMap::for_driving(spec, t_end, d)?;
        let xi = to_holder_frame(spec, &frame);
        let mut g_certified = false;
        if xi.eval(0.0) >= 0.0 {
            let mut t2 = 1.0;
            while t2 <= s_horizon {
                if let Ok(r) = g_test(&xi, 0.0, t2) {
                    if r.certified {
                        g_certified = true;
                        break;
                    }
                }
                t2 *= 2.0;
            }
        }
        let record = strict_record(spec, t_end, d);
        Ok(Side { frame, xi, g_certified, record })
    }
}

fn classify_point(spec: &DrivingSpec, t_end: f64, x0: f64, side: &Side, sc: &ScanConfig) -> CaptureReport {
    let fr = &side.frame;
    let undecided = |h: f64| CaptureReport {
        initial: x0,
        status: CaptureStatus::Undecided,
        capture_time: None,
        certificate: CaptureCertificate::HorizonExhausted,
        horizon_used: h,
    };
    let xf = fr.to_frame(0.0, x0);
    if xf <= 0.0 {
        return match solve_rle(spec, x0, t_end, &sc.integrator) {
            Ok((_, r)) => r,
            Err(_) => undecided(f64::INFINITY),
        };
    }
    let Ok((_, outcome)) = solve_frame_rle(&side.xi, xf, sc.s_horizon, &sc.integrator) else {
        return undecided(0.0);
    };
    match outcome {
        FrameOutcome::CapturedCandidate => CaptureReport {
            initial: x0,
            status: CaptureStatus::Captured,
            capture_time: Some(t_end),
            certificate: CaptureCertificate::FixedPointBand,
            horizon_used: sc.s_horizon,
        },
        FrameOutcome::EscapedSingular { at } => CaptureReport {
            initial: x0,
            status: CaptureStatus::Captured,
            capture_time: Some(fr.t_of_s(at)),
            certificate: CaptureCertificate::EventBisection,
            horizon_used: at,
        },
        FrameOutcome::EscapedZero { at } => {
            let cert = if side.g_certified {
                CaptureCertificate::GTest
            } else {
                CaptureCertificate::EventBisection
            };
            if !side.record {
                // λ(T) is not a strict record: the solution may still be
                // captured by a later excursion before T.
                if let Ok((_, r)) = solve_rle(spec, x0, t_end, &sc.integrator) {
                    if r.status != CaptureStatus::Escaped {
                        return r;
                    }
                }
            }
            CaptureReport {
                initial: x0,
                status: CaptureStatus::Escaped,
                capture_time: None,
                certificate: cert,
                horizon_used: at,
            }
        }
        FrameOutcome::Undecided { at } => undecided(at),
    }
}

/// Classifies every grid point and estimates the set of initial values
/// captured exactly at `T`, on each side of λ(0).
pub fn capture_scan(spec: &DrivingSpec, t_end: f64, grid: &[f64], sc: &ScanConfig) -> Result<ScanResult> {
    if !(t_end > 0.0 && t_end <= spec.domain_end()) {
        return Err(domain(format!("T = {t_end} outside (0, {}]", spec.domain_end())));
    }
    let l0 = spec.at(0.0);
    let mut pts: Vec<f64> = grid.iter().copied().filter(|&x| x != l0 && x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let up = Side::new(spec, t_end, 1.0, sc.s_horizon)?;
    let down = Side::new(spec, t_end, -1.0, sc.s_horizon)?;
    let reports: Vec<CaptureReport> = pts
        .par_iter()
        .map(|&x0| classify_point(spec, t_end, x0, if x0 > l0 { &up } else { &down }, sc))
        .collect();
    let span = |f: &dyn Fn(f64) -> bool| {
        let m: Vec<f64> = reports
            .iter()
            .filter(|r| f(r.initial) && member(r, t_end, sc.membership_tol))
            .map(|r| r.initial)
            .collect();
        (!m.is_empty()).then(|| (m[0], *m.last().unwrap()))
    };
    let cell = pts.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    log::debug!("scan of {} points at T = {t_end}, s horizon {}", reports.len(), sc.s_horizon);
    Ok(ScanResult {
        t_end,
        upper: span(&|x| x > l0),
        lower: span(&|x| x < l0),
        undecided: reports
            .iter()
            .filter(|r| r.status == CaptureStatus::Undecided)
            .map(|r| r.initial)
            .collect(),
        reports,
        cell,
    })
}

/// Whether `x0` is captured exactly at `T` under the scan classification.
pub fn is_captured_at(spec: &DrivingSpec, t_end: f64, x0: f64, sc: &ScanConfig) -> Result<bool> {
    let l0 = spec.at(0.0);
    let side = Side::new(spec, t_end, if x0 > l0 { 1.0 } else { -1.0 }, sc.s_horizon)?;
    Ok(member(&classify_point(spec, t_end, x0, &side, sc), t_end, sc.membership_tol))
}

/// Bisects between a member and a non-member initial value.
pub fn refine_boundary(
    spec: &DrivingSpec,
    t_end: f64,
    inside: f64,
    outside: f64,
    tol: f64,
    sc: &ScanConfig,
) -> Result<f64> {
    let l0 = spec.at(0.0);
    let d = if inside > l0 { 1.0 } else { -1.0 };
    let side = Side::new(spec, t_end, d, sc.s_horizon)?;
    let (mut a, mut b) = (inside, outside);
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        if member(&classify_point(spec, t_end, m, &side, sc), t_end, sc.membership_tol) {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

pub enum CaptureEvidence<'a> {
    Scan(&'a ScanResult),
    /// An explicitly constructed captured solution.
    Constructed,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingDiagnostic {
    pub a_hat: f64,
    pub b_hat: f64,
    pub applicable: bool,
    pub same_sign: bool,
    /// `max(4, |a| + 4/|a|)` when `|a_hat| < 4 − margin`.
    pub required_b: Option<f64>,
    pub margin: f64,
    pub holds: bool,
    pub note: String,
}

/// Checks the sign and lower-bound relations between the finite-scale
/// exponents at a capture time.
pub fn scaling_diagnostic(
    spec: &DrivingSpec,
    t_end: f64,
    evidence: CaptureEvidence<'_>,
    scales: &[f64],
    margin: f64,
) -> Result<ScalingDiagnostic> {
    let captured = match evidence {
        CaptureEvidence::Scan(s) => !s.is_empty(),
        CaptureEvidence::Constructed => true,
    };
    let lt = spec.at(t_end);
    let native = (t_end - spec.domain_end()).abs() <= 1e-15 * t_end;
    let signed: Vec<f64> = scales
        .iter()
        .map(|&u| {
            if native {
                spec.end_ratio(u.ln())
            } else {
                (lt - spec.at(t_end - u)) / u.sqrt()
            }
        })
        .collect();
    let rep = spec.local_scaling_exponents(t_end, scales)?;
    let (a, b) = (rep.a_hat, rep.b_hat);
    if !captured {
        return Ok(ScalingDiagnostic {
            a_hat: a,
            b_hat: b,
            applicable: false,
            same_sign: true,
            required_b: None,
            margin,
            holds: true,
            note: "no captured solution at T; the check is vacuous".into(),
        });
    }
    let same_sign = signed.iter().all(|&r| r >= -margin) || signed.iter().all(|&r| r <= margin);
    let required_b = (a < 4.0 - margin).then(|| if a > 0.0 { (a + 4.0 / a).max(4.0) } else { f64::INFINITY });
    let bound_ok = required_b.is_none_or(|rb| b >= rb - margin);
    let note = match required_b {
        Some(rb) => format!("a = {a:.4}, b = {b:.4}, required b ≥ {rb:.4} − {margin}"),
        None => format!("a = {a:.4} ≥ 4 − {margin}: only b ≥ a is implied"),
    };
    Ok(ScalingDiagnostic {
        a_hat: a,
        b_hat: b,
        applicable: true,
        same_sign,
        required_b,
        margin,
        holds: same_sign && bound_ok,
        note,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SharpRun {
    pub a: f64,
    pub branch: Branch,
    pub k_last: usize,
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    /// ξ at the cell midpoint of the last cycle (the lower evaluation point).
    pub running_min: f64,
    /// ξ at `β` of the last cycle (the upper evaluation point).
    pub running_max: f64,
    /// Extremes of the samples over the last full cycle.
    pub sampled_min: f64,
    pub sampled_max: f64,
    pub lower_limit: f64,
    pub upper_limit: f64,
}

/// Samples the explicit captured solution and its driving up to cycle `k_last`.
pub fn sharp_example(a: f64, branch: Option<Branch>, k_last: usize, per_arc: usize) -> Result<SharpRun> {
    let ex = SharpExample::new(a, branch, None)?;
    if k_last < ex.k0 {
        return Err(domain(format!("k_last = {k_last} precedes the first cycle {}", ex.k0)));
    }
    let per = per_arc.max(4);
    let (mut s, mut x, mut xi) = (Vec::new(), Vec::new(), Vec::new());
    let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in ex.k0..=k_last {
        let pts = [ex.frame_time(ex.alpha(k)), ex.frame_time(ex.beta(k)), ex.frame_time(ex.alpha(k + 1))];
        for arc in 0..2 {
            for i in 0..per {
                let v = pts[arc] + (pts[arc + 1] - pts[arc]) * i as f64 / per as f64;
                let (xv, _) = ex.state(v);
                let q = ex.xi(v);
                if k == k_last {
                    smin = smin.min(q);
                    smax = smax.max(q);
                }
                s.push(v);
                x.push(xv);
                xi.push(q);
            }
        }
    }
    Ok(SharpRun {
        a,
        branch: ex.branch,
        k_last,
        running_min: ex.xi(ex.low_witness(k_last)),
        running_max: ex.xi(ex.high_witness(k_last)),
        sampled_min: smin,
        sampled_max: smax,
        lower_limit: ex.lower_limit(),
        upper_limit: ex.upper_limit(),
        s,
        x,
        xi,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedReport {
    pub scales: Vec<f64>,
    /// `ratio·h(u)` per scale.
    pub lower_side: Vec<f64>,
    /// `ratio/h(u)` per scale.
    pub upper_side: Vec<f64>,
    pub liminf_estimate: f64,
    pub limsup_estimate: f64,
    /// Whether `ratio·h` is still increasing across the finest scales.
    pub lower_side_diverging: bool,
    pub constant: f64,
    pub antecedent: bool,
    pub consequent: bool,
}

/// Reports the two finite-scale quantities of the speed condition at a
/// capture time with vanishing lower exponent. No inequality is asserted.
pub fn speed_condition_check(
    spec: &DrivingSpec,
    t_end: f64,
    h: &dyn Fn(f64) -> f64,
    scales: &[f64],
    constant: f64,
) -> Result<SpeedReport> {
    if scales.len() < 2 || scales.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(domain("speed check needs a strictly decreasing scale ladder"));
    }
    let hv: Vec<f64> = scales.iter().map(|&u| h(u)).collect();
    if hv.iter().any(|&v| !(v > 0.0)) || hv.last() <= hv.first() {
        return Err(domain("rate function must be positive and grow as the scale shrinks"));
    }
    let lt = spec.at(t_end);
    let native = (t_end - spec.domain_end()).abs() <= 1e-15 * t_end;
    let ratio: Vec<f64> = scales
        .iter()
        .map(|&u| {
            if native {
                spec.end_ratio(u.ln())
            } else {
                (lt - spec.at(t_end - u)) / u.sqrt()
            }
        })
        .collect();
    let lower_side: Vec<f64> = ratio.iter().zip(&hv).map(|(r, h)| r * h).collect();
    let upper_side: Vec<f64> = ratio.iter().zip(&hv).map(|(r, h)| r / h).collect();
    let tail = &lower_side[lower_side.len().saturating_sub(5)..];
    let lower_side_diverging = tail.windows(2).all(|w| w[1] > w[0]) && tail.last().unwrap() > &0.0;
    let liminf_estimate = lower_side.iter().copied().fold(f64::INFINITY, f64::min);
    let limsup_estimate = upper_side.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SpeedReport {
        scales: scales.to_vec(),
        lower_side,
        upper_side,
        liminf_estimate,
        limsup_estimate,
        lower_side_diverging,
        constant,
        antecedent: liminf_estimate < constant,
        consequent: limsup_estimate > 4.0 / constant,
    })
}
