//! Forward maps of complex points, capacity checks, traces built from
//! elementary slit maps, and conformal welding.
//!
//! A trace is computed on a uniform grid `t_k = kΔt`. On each cell the
//! driving is frozen at `u_k`, so the cell's inverse map is explicit:
//! `h_k(w) = u_k + √((w − u_k)² − 4Δt)`, branch in the upper half plane.
//! The tip at `t_n` is the image of `u_n + 2i√Δt` under `h_1 ∘ … ∘ h_{n−1}`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::driving::{default_scales, DrivingSpec};
use crate::error::{domain, precondition, Result};
use crate::ode_engine::{integrate_until, EventKind, Guard, IntegratorConfig};
use crate::real_line::{solve_frame_rle, to_holder_frame, FrameMap, FrameOutcome};

const NUDGE: f64 = 1e-14;
/// A point whose projected capture time is within this of `t` counts as
/// captured at `t`.
const CAPTURE_TIME_SLACK: f64 = 1e-8;
/// Pairs closer than this many indices are never compared for touching.
pub const SIMPLICITY_INDEX_GAP: usize = 5;
pub const SIMPLICITY_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardOutcome {
    Mapped(Complex64),
    /// The point hit the driving at `time`, where its image is `λ(time)`.
    Captured { time: f64, image: Complex64 },
}

impl ForwardOutcome {
    pub fn value(&self) -> Complex64 {
        match *self {
            ForwardOutcome::Mapped(z) => z,
            ForwardOutcome::Captured { image, .. } => image,
        }
    }
}

/// `g_t(z)` for `Im z ≥ 0`, integrating the planar form of the equation.
pub fn forward_map(spec: &DrivingSpec, t: f64, z: Complex64, cfg: &IntegratorConfig) -> Result<ForwardOutcome> {
    if !(z.im >= 0.0) {
        return Err(domain(format!("{z} is below the real axis")));
    }
    if z.im == 0.0 && z.re == spec.at(0.0) {
        return Err(domain(format!("{z} sits on the driving at t = 0")));
    }
    let te = spec.domain_end();
    if !(t >= 0.0 && t <= te) {
        return Err(domain(format!("time {t} outside [0, {te}]")));
    }
    if t == 0.0 {
        return Ok(ForwardOutcome::Mapped(z));
    }
    let floor = cfg.singularity_floor;
    let guard = Guard::new(EventKind::Capture, |s, w: &[f64; 2]| (w[0] - spec.at(s)).hypot(w[1]) - floor);
    let path = integrate_until(
        |s, w: &[f64; 2]| {
            let d = w[0] - spec.at(s);
            let r2 = d * d + w[1] * w[1];
            [2.0 * d / r2, -2.0 * w[1] / r2]
        },
        [z.re, z.im],
        (0.0, t),
        &[guard],
        &cfg.with_max_step(cfg.max_step.min(t / 16.0)),
    )?;
    let ev = path.event.expect("runs end with an event");
    Ok(match ev.kind {
        EventKind::Capture => ForwardOutcome::Captured {
            time: ev.time,
            image: Complex64::new(spec.at(ev.time), 0.0),
        },
        _ => {
            let [x, y] = path.last();
            let d = Complex64::new(x - spec.at(t), y);
            // Near the driving, |g − λ|² shrinks at rate about 4.
            if d.norm_sqr() / 4.0 <= CAPTURE_TIME_SLACK * t.max(1.0) {
                ForwardOutcome::Captured { time: t, image: Complex64::new(spec.at(t), 0.0) }
            } else {
                ForwardOutcome::Mapped(Complex64::new(x, y))
            }
        }
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HcapReport {
    pub t: f64,
    pub radius: f64,
    pub estimate: f64,
    /// Size of the imaginary part of the probe average.
    pub imaginary_residue: f64,
    pub bound: f64,
    pub within: bool,
}

/// Estimates the capacity `c(t)` from `z(g_t(z) − z)` at three probes of
/// modulus `R`. The `1/z` corrections cancel in the real part of the average.
pub fn hcap_check(spec: &DrivingSpec, t: f64, radius: f64, cfg: &IntegratorConfig) -> Result<HcapReport> {
    if !(radius >= 10.0 * t.sqrt().max(1e-3)) {
        return Err(precondition(format!("probe radius {radius} is not large against √t = {}", t.sqrt())));
    }
    if t == 0.0 {
        return Ok(HcapReport { t, radius, estimate: 0.0, imaginary_residue: 0.0, bound: 0.0, within: true });
    }
    let probes = [
        Complex64::from_polar(radius, std::f64::consts::FRAC_PI_2),
        Complex64::from_polar(radius, std::f64::consts::FRAC_PI_4),
        Complex64::from_polar(radius, 3.0 * std::f64::consts::FRAC_PI_4),
    ];
    let fine = cfg.with_tol(cfg.rel_tol.min(1e-13));
    let mut acc = Complex64::new(0.0, 0.0);
    for z in probes {
        let g = forward_map(spec, t, z, &fine)?.value();
        acc += z * (g - z);
    }
    acc /= 3.0;
    let sup = (0..=200)
        .map(|i| spec.at(t * i as f64 / 200.0).abs())
        .fold(0.0, f64::max);
    let m = 2.0 * t * sup + 2.0 * t * t;
    let bound = m * m / (radius * radius) + 4.0 * m / (radius * radius) + fine.rel_tol * radius * radius;
    let estimate = acc.re;
    Ok(HcapReport {
        t,
        radius,
        estimate,
        imaginary_residue: acc.im.abs(),
        bound,
        within: (estimate - 2.0 * t).abs() <= bound.max(1e-9),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSampling {
    Right,
    Midpoint,
}

#[derive(Debug, Clone)]
pub struct TraceCurve {
    pub times: Vec<f64>,
    pub points: Vec<Complex64>,
    pub cell_step: f64,
    /// Imaginary offset `2√Δ` of each tip seed.
    pub tip_offsets: Vec<f64>,
    /// Indices whose composition crossed a branch cut and was nudged.
    pub nudged: Vec<usize>,
}

impl TraceCurve {
    pub fn endpoint(&self) -> Complex64 {
        *self.points.last().expect("trace is never empty")
    }
}

/// Cell grid: times, frozen values and durations.
struct Cells {
    times: Vec<f64>,
    u: Vec<f64>,
    dur: Vec<f64>,
}

fn cells(spec: &DrivingSpec, t_end: f64, dt: f64, sampling: CellSampling) -> Result<Cells> {
    if !(t_end > 0.0 && t_end <= spec.domain_end()) {
        return Err(domain(format!("trace horizon {t_end} outside (0, {}]", spec.domain_end())));
    }
    if !(dt > 0.0 && dt <= t_end) {
        return Err(domain(format!("cell step {dt} must lie in (0, {t_end}]")));
    }
    let n = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| (k as f64 * dt).min(t_end)).collect();
    times[n] = t_end;
    let mut u = vec![spec.at(0.0)];
    let mut dur = vec![0.0];
    for k in 1..=n {
        let at = match sampling {
            CellSampling::Right => times[k],
            CellSampling::Midpoint => 0.5 * (times[k - 1] + times[k]),
        };
        u.push(spec.at(at));
        dur.push(times[k] - times[k - 1]);
    }
    Ok(Cells { times, u, dur })
}

/// Inverse of one cell map, branch chosen in the closed upper half plane.
/// Returns the value and whether the argument sat on the cut.
#[inline]
fn cell_inverse(w: Complex64, u: f64, dur: f64) -> (Complex64, bool) {
    let mut d = w - u;
    let mut q = d * d - 4.0 * dur;
    let nudged = w.im == 0.0 && q.im == 0.0 && q.re < 0.0;
    if nudged {
        d.im += NUDGE;
        q = d * d - 4.0 * dur;
    }
    let mut r = q.sqrt();
    if r.im < 0.0 || (r.im == 0.0 && d.re < 0.0) {
        r = -r;
    }
    (u + r, nudged)
}

/// `h_1 ∘ … ∘ h_m (w)`.
fn compose(c: &Cells, m: usize, mut w: Complex64) -> (Complex64, bool) {
    let mut hit = false;
    for k in (1..=m).rev() {
        let (v, n) = cell_inverse(w, c.u[k], c.dur[k]);
        w = v;
        hit |= n;
    }
    (w, hit)
}

pub fn trace(spec: &DrivingSpec, t_end: f64, dt: f64) -> Result<TraceCurve> {
    trace_with(spec, t_end, dt, CellSampling::Right)
}

pub fn trace_with(spec: &DrivingSpec, t_end: f64, dt: f64, sampling: CellSampling) -> Result<TraceCurve> {
    let c = cells(spec, t_end, dt, sampling)?;
    let n = c.times.len() - 1;
    let rows: Vec<(Complex64, f64, bool)> = (0..=n)
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                return (Complex64::new(spec.at(0.0), 0.0), 0.0, false);
            }
            let off = 2.0 * c.dur[k].sqrt();
            let (p, hit) = compose(&c, k - 1, Complex64::new(c.u[k], off));
            (p, off, hit)
        })
        .collect();
    Ok(TraceCurve {
        times: c.times,
        points: rows.iter().map(|r| r.0).collect(),
        cell_step: dt,
        tip_offsets: rows.iter().map(|r| r.1).collect(),
        nudged: rows.iter().enumerate().filter(|(_, r)| r.2).map(|(i, _)| i).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfConvergence {
    pub dt: f64,
    /// Max displacement between the Δt and Δt/2 traces, then Δt/2 and Δt/4,
    /// on the coarse grid.
    pub displacements: [f64; 2],
    pub factor: f64,
    /// Displacement between the Δt and Δt/2 traces at each coarse point.
    pub per_point: Vec<f64>,
}

pub fn self_convergence(spec: &DrivingSpec, t_end: f64, dt: f64) -> Result<SelfConvergence> {
    let a = trace(spec, t_end, dt)?;
    let b = trace(spec, t_end, dt / 2.0)?;
    let c = trace(spec, t_end, dt / 4.0)?;
    let n = a.points.len() - 1;
    if (n as f64 * dt - t_end).abs() > 1e-9 * t_end {
        return Err(domain(format!("step {dt} must divide the horizon {t_end}")));
    }
    let per_point: Vec<f64> = (0..=n).map(|k| (a.points[k] - b.points[2 * k]).norm()).collect();
    let d1 = per_point.iter().copied().fold(0.0, f64::max);
    let d2 = (0..=n).map(|k| (b.points[2 * k] - c.points[4 * k]).norm()).fold(0.0, f64::max);
    let factor = if d2 == 0.0 { f64::INFINITY } else { d1 / d2 };
    Ok(SelfConvergence { dt, displacements: [d1, d2], factor, per_point })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimplicityReport {
    pub simple: bool,
    /// Closest flagged pair `(i, j, distance, threshold)`, if any.
    pub touching: Option<(usize, usize, f64, f64)>,
    pub flagged_pairs: usize,
}

/// Flags non-adjacent trace points closer than three times the local
/// refinement displacement.
pub fn simplicity_diagnostic(curve: &TraceCurve, per_point: &[f64]) -> SimplicityReport {
    let pts = &curve.points;
    let n = pts.len();
    let found: Vec<(usize, usize, f64, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            ((i + SIMPLICITY_INDEX_GAP + 1)..n).filter_map(move |j| {
                let thr = SIMPLICITY_FACTOR * per_point[i].max(per_point[j]);
                let d = (pts[i] - pts[j]).norm();
                (d < thr).then_some((i, j, d, thr))
            })
        })
        .collect();
    let touching = found.iter().copied().min_by(|a, b| (a.2 / a.3).total_cmp(&(b.2 / b.3)));
    SimplicityReport { simple: found.is_empty(), touching, flagged_pairs: found.len() }
}

pub fn simplicity_check(spec: &DrivingSpec, t_end: f64, dt: f64) -> Result<SimplicityReport> {
    let a = trace(spec, t_end, dt)?;
    let b = trace(spec, t_end, dt / 2.0)?;
    let per_point: Vec<f64> = (0..a.points.len())
        .map(|k| (a.points[k] - b.points[(2 * k).min(b.points.len() - 1)]).norm())
        .collect();
    Ok(simplicity_diagnostic(&a, &per_point))
}

#[derive(Debug, Clone, Serialize)]
pub struct WeldingTable {
    pub s_grid: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// `(right − λ(T))/(λ(T) − left)`.
    pub ratio1: Vec<f64>,
    /// `(φ(x) − φ(y))/(φ(y) − φ(z))` for `x = λ(T)`, `y = right`,
    /// `z = 2y − λ(T)`; absent when `z` is beyond the table.
    pub ratio2: Vec<Option<f64>>,
    pub lambda_t: f64,
    /// Micro-cell duration used to split the tip.
    pub delta: f64,
}

impl WeldingTable {
    /// `φ` on the right side by linear interpolation in the table.
    pub fn phi(&self, x: f64) -> Option<f64> {
        let mut pairs: Vec<(f64, f64)> = self.right.iter().copied().zip(self.left.iter().copied()).collect();
        pairs.push((self.lambda_t, self.lambda_t));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if x < xs[0] || x > *xs.last().unwrap() {
            return None;
        }
        Some(crate::signal::interp(&xs, &ys, x))
    }
}

/// Images under `g_T` of the two sides of the trace point at each `s`.
/// The tip is split after a micro-cell of length `δ = Δt/100`, then both
/// sides follow the real equation to `T`.
pub fn welding(
    spec: &DrivingSpec,
    t_end: f64,
    s_grid: &[f64],
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<WeldingTable> {
    let simple = simplicity_check(spec, t_end, dt)?;
    if !simple.simple {
        return Err(precondition(format!("trace is not simple: {:?}", simple.touching)));
    }
    welding_unchecked(spec, t_end, s_grid, dt, cfg)
}

/// [`welding`] without the simplicity precondition.
pub fn welding_unchecked(
    spec: &DrivingSpec,
    t_end: f64,
    s_grid: &[f64],
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<WeldingTable> {
    let delta = dt / 100.0;
    if let Some(s) = s_grid.iter().find(|&&s| !(s >= 0.0 && s + delta < t_end)) {
        return Err(domain(format!("welding time {s} must lie in [0, T − δ)")));
    }
    let lt = spec.at(t_end);
    let floor = cfg.singularity_floor;
    let follow = |s: f64, x0: f64| -> Result<f64> {
        let d = (x0 - spec.at(s)).signum();
        let guard = Guard::new(EventKind::Capture, |t, y: &[f64; 1]| d * (y[0] - spec.at(t)) - floor);
        let span = t_end - s - delta;
        let p = integrate_until(
            |t, y: &[f64; 1]| [2.0 / (y[0] - spec.at(t))],
            [x0],
            (s + delta, t_end),
            &[guard],
            &cfg.with_max_step(cfg.max_step.min(span / 32.0)),
        )?;
        if p.event_kind() == Some(EventKind::Capture) {
            return Err(precondition(format!(
                "a side of the trace point at s = {s} met the driving at t = {}; the curve is not simple",
                p.last_time()
            )));
        }
        Ok(p.last()[0])
    };
    let rows: Vec<(f64, f64)> = s_grid
        .par_iter()
        .map(|&s| {
            let u = spec.at(s);
            let split = 2.0 * delta.sqrt();
            Ok((follow(s, u - split)?, follow(s, u + split)?))
        })
        .collect::<Result<_>>()?;
    let left: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let right: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let ratio1 = left.iter().zip(&right).map(|(l, r)| (r - lt) / (lt - l)).collect();
    let mut table = WeldingTable {
        s_grid: s_grid.to_vec(),
        left,
        right,
        ratio1,
        ratio2: Vec::new(),
        lambda_t: lt,
        delta,
    };
    table.ratio2 = table
        .left
        .iter()
        .zip(&table.right)
        .map(|(&l, &r)| {
            let phz = table.phi(2.0 * r - lt)?;
            Some((lt - l) / (l - phz))
        })
        .collect();
    Ok(table)
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub ladder: Vec<f64>,
    /// Sup over the grid of the distance between consecutive levels.
    pub sup_distances: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Geometric bound on the remaining distance to the limit.
    pub tail_bound: f64,
    pub cauchy: bool,
}

/// Ratio below which consecutive level distances count as contracting.
pub const CAUCHY_RATIO: f64 = 0.95;

/// Pulls `λ(t) + iy` back through the cell maps for each level `y` of the
/// ladder and measures how far consecutive levels are apart.
pub fn continuity_diagnostic(spec: &DrivingSpec, t_end: f64, dt: f64, ladder: &[f64]) -> Result<ContinuityReport> {
    if ladder.len() < 2 || ladder.windows(2).any(|w| !(w[1] < w[0])) || ladder.iter().any(|y| !(*y > 0.0)) {
        return Err(domain("ladder must be positive and strictly decreasing with ≥ 2 levels"));
    }
    let c = cells(spec, t_end, dt, CellSampling::Right)?;
    let n = c.times.len() - 1;
    let level = |y: f64| -> Vec<Complex64> {
        (0..=n)
            .into_par_iter()
            .map(|k| compose(&c, k, Complex64::new(c.u[k], y)).0)
            .collect()
    };
    let curves: Vec<Vec<Complex64>> = ladder.iter().map(|&y| level(y)).collect();
    let sup_distances: Vec<f64> = curves
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
        .collect();
    let ratios: Vec<f64> = sup_distances.windows(2).map(|w| w[1] / w[0]).collect();
    let tail = &ratios[ratios.len() / 2..];
    let r = tail.iter().copied().fold(0.0, f64::max);
    let last = *sup_distances.last().unwrap();
    let cauchy = !tail.is_empty() && r < CAUCHY_RATIO || last == 0.0;
    let tail_bound = if r < 1.0 { last * r / (1.0 - r) } else { f64::INFINITY };
    Ok(ContinuityReport { ladder: ladder.to_vec(), sup_distances, ratios, tail_bound, cauchy })
}

#[derive(Debug, Clone, Serialize)]
pub struct BandRun {
    pub x0: f64,
    pub captured: bool,
    /// Smallest `ξ − x` after the burn-in.
    pub eta_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EndpointReport {
    pub a_hat: f64,
    pub b_hat: f64,
    pub constant: f64,
    pub steps: [f64; 3],
    /// `(Re, Im)` of the trace endpoint at each step.
    pub endpoints: Vec<(f64, f64)>,
    /// `min(|Im γ(T)|, distance from γ(T) to earlier points)` at each step.
    pub metric: [f64; 3],
    pub decreasing: bool,
    pub band_floor: f64,
    pub band: Vec<BandRun>,
    pub band_holds: bool,
}

pub const BAND_TOLERANCE: f64 = 0.05;
const BURN_IN: f64 = 10.0;
const BAND_HORIZON: f64 = 25.0;

/// Endpoint experiment for drivings whose end ratios stay in
/// `[a, b]` with `a ≥ constant` and `b < a + 4/a`: the trace endpoint should
/// approach the real line or the earlier trace under refinement, and frame
/// solutions started in `((b + √(b² − 16))/2, a)` should be captured with
/// a gap bounded below.
pub fn endpoint_experiment(
    spec: &DrivingSpec,
    t_end: f64,
    dt: f64,
    constant: f64,
    cfg: &IntegratorConfig,
) -> Result<EndpointReport> {
    let rep = spec.local_scaling_exponents(t_end, &default_scales(t_end))?;
    let (a, b) = (rep.a_hat, rep.b_hat);
    let a_ok = a >= constant * (1.0 - 1e-12);
    let b_ok = b < a + 4.0 / a;
    if !(a_ok && b_ok) {
        return Err(precondition(format!(
            "hypotheses fail: a_hat = {a:.6}, b_hat = {b:.6}, need a_hat ≥ {constant} and b_hat < {:.6}",
            a + 4.0 / a
        )));
    }

    let steps = [dt, dt / 2.0, dt / 4.0];
    let mut endpoints = Vec::new();
    let mut metric = [0.0; 3];
    for (i, &h) in steps.iter().enumerate() {
        let tr = trace(spec, t_end, h)?;
        let end = tr.endpoint();
        let n = tr.points.len();
        let dist = tr.points[..n.saturating_sub(SIMPLICITY_INDEX_GAP + 1)]
            .iter()
            .map(|p| (p - end).norm())
            .fold(f64::INFINITY, f64::min);
        metric[i] = end.im.abs().min(dist);
        endpoints.push((end.re, end.im));
    }
    let decreasing = metric[1] < metric[0] && metric[2] < metric[1];
    log::debug!("endpoint metric under refinement: {metric:?}");

    let direction = if spec.end_ratio((t_end / 4.0).ln()) >= 0.0 { 1.0 } else { -1.0 };
    let frame = FrameMap::for_driving(spec, t_end, direction)?;
    let xi = to_holder_frame(spec, &frame);
    let upper = 0.5 * (b + (b * b - 16.0).sqrt());
    let band_floor = a - upper - BAND_TOLERANCE;
    let xi0 = xi.eval(0.0);
    let band: Vec<BandRun> = (1..=5)
        .map(|j| upper + (a - upper) * j as f64 / 6.0)
        .filter(|&x0| x0 > 0.0 && x0 < xi0)
        .map(|x0| {
            let (p, out) = solve_frame_rle(&xi, x0, BAND_HORIZON, cfg)?;
            let eta_min = p
                .times
                .iter()
                .zip(&p.values)
                .filter(|(s, _)| **s >= BURN_IN)
                .map(|(s, v)| xi.eval(*s) - v[0])
                .fold(f64::INFINITY, f64::min);
            Ok(BandRun { x0, captured: out == FrameOutcome::CapturedCandidate, eta_min })
        })
        .collect::<Result<_>>()?;
    let band_holds = !band.is_empty() && band.iter().all(|r| r.captured && r.eta_min >= band_floor);
    Ok(EndpointReport {
        a_hat: a,
        b_hat: b,
        constant,
        steps,
        endpoints,
        metric,
        decreasing,
        band_floor,
        band,
        band_holds,
    })
}
