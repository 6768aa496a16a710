//! Dormand–Prince 5(4) integrator with guarded event detection.
//!
//! Guards are scalar functions of `(t, y)`. An event fires when a guard
//! leaves the sign it had at the start; the crossing is then located by
//! bisecting single Runge–Kutta steps from the last accepted point.

use serde::{Deserialize, Serialize};

use crate::error::{domain, numeric, Error, Result};
use crate::signal::Signal;

/// Unset fields take their defaults when read from JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Distance to a singular denominator at which guards take over.
    pub singularity_floor: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: 1.0,
            min_step: 1e-15,
            singularity_floor: 1e-9,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.min_step > 0.0
            && self.min_step <= self.max_step
            && self.singularity_floor > 0.0
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid integrator settings {self:?}")))
        }
    }

    /// Guards within this distance of zero when the step size underflows are
    /// treated as having fired.
    pub fn near_tol(&self) -> f64 {
        self.singularity_floor.sqrt()
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.rel_tol = tol;
        self.abs_tol = tol;
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Capture,
    Vanish,
    Threshold,
    BlowUp,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
    /// Guard value at `time`.
    pub residual: f64,
    /// Width of the bracket that certifies the crossing.
    pub bracket: f64,
}

#[derive(Debug, Clone)]
pub struct SolutionPath<const D: usize> {
    pub times: Vec<f64>,
    pub values: Vec<[f64; D]>,
    pub derivs: Vec<[f64; D]>,
    /// Step size that produced each point (0 for the initial point).
    pub steps: Vec<f64>,
    /// Scaled local error estimate of that step.
    pub errors: Vec<f64>,
    pub event: Option<Event>,
}

impl<const D: usize> SolutionPath<D> {
    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("path is never empty")
    }

    pub fn last(&self) -> [f64; D] {
        *self.values.last().expect("path is never empty")
    }

    pub fn event_kind(&self) -> Option<EventKind> {
        self.event.map(|e| e.kind)
    }

    /// Cubic Hermite interpolation between accepted points, clamped at the ends.
    pub fn at(&self, t: f64) -> [f64; D] {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&v| v <= t) - 1;
        let h = self.times[i + 1] - self.times[i];
        let u = (t - self.times[i]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u),
            u * (1.0 - u) * (1.0 - u),
            u * u * (3.0 - 2.0 * u),
            u * u * (u - 1.0),
        );
        let mut out = [0.0; D];
        for (k, o) in out.iter_mut().enumerate() {
            let (y0, y1) = (self.values[i][k], self.values[i + 1][k]);
            let (d0, d1) = (self.derivs[i][k], self.derivs[i + 1][k]);
            *o = if d0.is_finite() && d1.is_finite() {
                h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
            } else {
                y0 + u * (y1 - y0)
            };
        }
        out
    }

    /// Component `k` as a plain series.
    pub fn component(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }
}

impl SolutionPath<1> {
    /// The path as a signal, held constant outside its time range.
    pub fn to_signal(&self) -> Signal {
        let p = self.clone();
        let knots = self.times.clone();
        Signal::new(move |t| p.at(t)[0])
            .with_breaks(move |a, b| knots.iter().copied().filter(|&k| k > a && k < b).collect())
    }
}

type GuardFn<'a, const D: usize> = Box<dyn Fn(f64, &[f64; D]) -> f64 + 'a>;

pub struct Guard<'a, const D: usize> {
    pub kind: EventKind,
    g: GuardFn<'a, D>,
}

impl<'a, const D: usize> Guard<'a, D> {
    pub fn new(kind: EventKind, g: impl Fn(f64, &[f64; D]) -> f64 + 'a) -> Self {
        Guard { kind, g: Box::new(g) }
    }

    #[inline]
    pub fn eval(&self, t: f64, y: &[f64; D]) -> f64 {
        (self.g)(t, y)
    }
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn comb<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn finite<const D: usize>(v: &[f64; D]) -> bool {
    v.iter().all(|x| x.is_finite())
}

struct Step<const D: usize> {
    y: [f64; D],
    f: [f64; D],
    err: f64,
}

/// One Dormand–Prince step; `None` when the field is not finite on a stage.
fn dp_step<const D: usize, F>(
    field: &F,
    t: f64,
    y: &[f64; D],
    k1: &[f64; D],
    h: f64,
    cfg: &IntegratorConfig,
) -> Option<Step<D>>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let k2 = field(t + C2 * h, &comb(y, h, &[(A21, k1)]));
    if !finite(&k2) {
        return None;
    }
    let k3 = field(t + C3 * h, &comb(y, h, &[(A31, k1), (A32, &k2)]));
    if !finite(&k3) {
        return None;
    }
    let k4 = field(t + C4 * h, &comb(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    if !finite(&k4) {
        return None;
    }
    let k5 = field(
        t + C5 * h,
        &comb(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    if !finite(&k5) {
        return None;
    }
    let k6 = field(
        t + h,
        &comb(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    if !finite(&k6) {
        return None;
    }
    let y1 = comb(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    if !finite(&y1) {
        return None;
    }
    let k7 = field(t + h, &y1);
    if !finite(&k7) {
        return None;
    }
    let mut acc = 0.0;
    for i in 0..D {
        let e = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y1[i].abs());
        acc += (e / sc).powi(2);
    }
    Some(Step {
        y: y1,
        f: k7,
        err: (acc / D as f64).sqrt(),
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Integrates `field` on `span` with a default vanishing guard
/// `min_i |y_i| - floor`. Planar systems whose components may legitimately
/// cross zero should call [`integrate_until`] with their own guards.
pub fn integrate<const D: usize, F>(
    field: F,
    y0: [f64; D],
    span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<SolutionPath<D>>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let floor = cfg.singularity_floor;
    let guard = Guard::new(EventKind::Vanish, move |_, y: &[f64; D]| {
        y.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())) - floor
    });
    integrate_until(field, y0, span, &[guard], cfg)
}

/// Integrates until the first guard changes sign, or to the end of `span`
/// (event kind `Horizon`).
pub fn integrate_until<const D: usize, F>(
    field: F,
    y0: [f64; D],
    span: (f64, f64),
    guards: &[Guard<'_, D>],
    cfg: &IntegratorConfig,
) -> Result<SolutionPath<D>>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    cfg.validate()?;
    let (t0, t1) = span;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(domain(format!("integration span [{t0}, {t1}] is empty")));
    }
    let f0 = field(t0, &y0);
    if !finite(&y0) || !finite(&f0) {
        return Err(domain(format!("field is not finite at t = {t0}, y = {y0:?}")));
    }
    let signs: Vec<f64> = guards.iter().map(|g| sign(g.eval(t0, &y0))).collect();
    for (g, s) in guards.iter().zip(&signs) {
        if g.eval(t0, &y0).is_nan() {
            return Err(Error::Config(format!(
                "{:?} guard is not evaluable at the initial point",
                g.kind
            )));
        }
        if *s == 0.0 {
            return Ok(SolutionPath {
                times: vec![t0],
                values: vec![y0],
                derivs: vec![f0],
                steps: vec![0.0],
                errors: vec![0.0],
                event: Some(Event {
                    kind: g.kind,
                    time: t0,
                    residual: 0.0,
                    bracket: 0.0,
                }),
            });
        }
    }
    let crossed = |t: f64, y: &[f64; D]| -> Option<usize> {
        guards.iter().zip(&signs).position(|(g, s)| {
            let v = g.eval(t, y);
            v.is_nan() || sign(v) != *s
        })
    };

    let mut path = SolutionPath {
        times: vec![t0],
        values: vec![y0],
        derivs: vec![f0],
        steps: vec![0.0],
        errors: vec![0.0],
        event: None,
    };
    let (mut t, mut y, mut f) = (t0, y0, f0);
    let mut h = initial_step(&y0, &f0, cfg).min(t1 - t0);
    let mut err_prev: f64 = 1.0;
    let mut n = 0usize;
    loop {
        n += 1;
        if n > cfg.max_steps {
            return Err(numeric(format!(
                "step budget {} exhausted at t = {t}",
                cfg.max_steps
            )));
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        if h < cfg.min_step || t + h == t {
            let near = cfg.near_tol();
            let hit = guards.iter().map(|g| (g.kind, g.eval(t, &y))).find(|(_, v)| v.abs() <= near);
            let (kind, residual) = hit.unwrap_or((EventKind::BlowUp, f64::NAN));
            path.event = Some(Event {
                kind,
                time: t,
                residual: if residual.is_nan() { f.iter().map(|v| v.abs()).fold(0.0, f64::max) } else { residual },
                bracket: h.max(0.0),
            });
            return Ok(path);
        }
        let Some(step) = dp_step(&field, t, &y, &f, h, cfg) else {
            h *= 0.25;
            continue;
        };
        if step.err > 1.0 {
            h *= (0.9 * step.err.powf(-0.2)).max(0.2);
            continue;
        }
        let t_new = if last { t1 } else { t + h };
        if let Some(gi) = crossed(t_new, &step.y) {
            let (tc, yc, fc, width) = locate(&field, &guards[gi], signs[gi], t, &y, &f, h, (step.y, step.f), cfg);
            path.times.push(tc);
            path.values.push(yc);
            path.derivs.push(fc);
            path.steps.push(tc - t);
            path.errors.push(step.err);
            path.event = Some(Event {
                kind: guards[gi].kind,
                time: tc,
                residual: guards[gi].eval(tc, &yc),
                bracket: width,
            });
            return Ok(path);
        }
        t = t_new;
        y = step.y;
        f = step.f;
        path.times.push(t);
        path.values.push(y);
        path.derivs.push(f);
        path.steps.push(h);
        path.errors.push(step.err);
        if last {
            path.event = Some(Event {
                kind: EventKind::Horizon,
                time: t,
                residual: guards.first().map_or(f64::NAN, |g| g.eval(t, &y)),
                bracket: 0.0,
            });
            return Ok(path);
        }
        let e = step.err.max(1e-10);
        let fac = 0.9 * e.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
        err_prev = e;
        h = (h * fac.clamp(0.2, 5.0)).min(cfg.max_step);
    }
}

fn initial_step<const D: usize>(y: &[f64; D], f: &[f64; D], cfg: &IntegratorConfig) -> f64 {
    let d0 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let d1 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.clamp(cfg.min_step, cfg.max_step)
}

/// Bisects the step length from `(t, y)` until the crossing of `guard` is
/// bracketed to `abs_tol`. Returns the first point past the crossing and
/// the bracket width.
#[allow(clippy::too_many_arguments)]
fn locate<const D: usize, F>(
    field: &F,
    guard: &Guard<'_, D>,
    s0: f64,
    t: f64,
    y: &[f64; D],
    f: &[f64; D],
    h: f64,
    end: ([f64; D], [f64; D]),
    cfg: &IntegratorConfig,
) -> (f64, [f64; D], [f64; D], f64)
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let (mut lo, mut hi) = (0.0, h);
    let mut low_state = (*y, *f);
    let mut high_state = Some(end);
    for _ in 0..200 {
        if hi - lo <= cfg.abs_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match dp_step(field, t, y, f, mid, cfg) {
            Some(st) => {
                let v = guard.eval(t + mid, &st.y);
                if v.is_nan() || sign(v) != s0 {
                    hi = mid;
                    high_state = Some((st.y, st.f));
                } else {
                    lo = mid;
                    low_state = (st.y, st.f);
                }
            }
            None => {
                hi = mid;
                high_state = None;
            }
        }
    }
    match high_state {
        Some((yh, fh)) => (t + hi, yh, fh, hi - lo),
        None => (t + lo, low_state.0, low_state.1, hi - lo),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn sqrt_growth() {
        let p = integrate(|_, y: &[f64; 1]| [2.0 / y[0]], [1.0], (0.0, 2.0), &cfg()).unwrap();
        assert_eq!(p.event_kind(), Some(EventKind::Horizon));
        assert!((p.last()[0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn exponential() {
        let p = integrate(|_, y: &[f64; 1]| [y[0]], [1.0], (0.0, 1.0), &cfg()).unwrap();
        assert!((p.last()[0] - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn vanishing_at_one() {
        let p = integrate(|_, y: &[f64; 1]| [-2.0 / y[0]], [2.0], (0.0, 2.0), &cfg()).unwrap();
        let e = p.event.unwrap();
        assert_eq!(e.kind, EventKind::Vanish);
        assert!((e.time - 1.0).abs() < 1e-8, "{e:?}");
        assert!(p.values.iter().all(|v| v[0].is_finite()));
    }

    #[test]
    fn threshold_crossing() {
        let g = Guard::new(EventKind::Threshold, |_, y: &[f64; 1]| y[0] - 3.0);
        let p = integrate_until(|_, y: &[f64; 1]| [2.0 / y[0]], [1.0], (0.0, 5.0), &[g], &cfg())
            .unwrap();
        let e = p.event.unwrap();
        assert_eq!(e.kind, EventKind::Threshold);
        assert!((e.time - 2.0).abs() < 1e-8);
        assert!(e.bracket <= 1e-10);
    }

    #[test]
    fn flat_field_reaches_horizon() {
        let g = Guard::new(EventKind::Threshold, |_, y: &[f64; 1]| y[0] - 2.0);
        let p = integrate_until(|_, _: &[f64; 1]| [0.0], [1.0], (0.0, 3.0), &[g], &cfg()).unwrap();
        assert_eq!(p.event_kind(), Some(EventKind::Horizon));
        assert_eq!(p.last_time(), 3.0);
    }

    #[test]
    fn real_loewner_with_zero_driving_escapes() {
        let g = Guard::new(EventKind::Capture, |_, y: &[f64; 1]| y[0] - 1e-9);
        let p = integrate_until(|_, y: &[f64; 1]| [2.0 / y[0]], [1.0], (0.0, 10.0), &[g], &cfg())
            .unwrap();
        assert_eq!(p.event_kind(), Some(EventKind::Horizon));
        assert!((p.last()[0] - 41f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn unguarded_singularity_is_blow_up() {
        // y' = y^2 blows up at t = 1 and no guard watches it.
        let p = integrate_until(|_, y: &[f64; 1]| [y[0] * y[0]], [1.0], (0.0, 2.0), &[], &cfg())
            .unwrap();
        let e = p.event.unwrap();
        assert_eq!(e.kind, EventKind::BlowUp);
        assert!((e.time - 1.0).abs() < 1e-6);
        assert!(p.values.iter().all(|v| v[0].is_finite()));
    }

    #[test]
    fn bad_guard_is_config_error() {
        let g = Guard::new(EventKind::Threshold, |_, _: &[f64; 1]| f64::NAN);
        let r = integrate_until(|_, _: &[f64; 1]| [1.0], [1.0], (0.0, 1.0), &[g], &cfg());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn tolerance_halving_self_converges() {
        let tight = cfg().with_tol(5e-11);
        for (f, y0, t1) in [
            (Box::new(|_: f64, y: &[f64; 1]| [2.0 / y[0]]) as Box<dyn Fn(f64, &[f64; 1]) -> [f64; 1]>, 1.0, 2.0),
            (Box::new(|_: f64, y: &[f64; 1]| [y[0]]), 1.0, 1.0),
        ] {
            let a = integrate(&f, [y0], (0.0, t1), &cfg()).unwrap().last()[0];
            let b = integrate(&f, [y0], (0.0, t1), &tight).unwrap().last()[0];
            assert!((a - b).abs() < 10.0 * 5e-11 * b.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn raising_the_level_never_advances_the_crossing(level in 1.5f64..6.0, eps in 0.0f64..0.5) {
            let run = |lv: f64| {
                let g = Guard::new(EventKind::Threshold, move |_, y: &[f64; 1]| y[0] - lv);
                integrate_until(|_, y: &[f64; 1]| [2.0 / y[0]], [1.0], (0.0, 20.0), &[g], &cfg())
                    .unwrap()
                    .event
                    .unwrap()
                    .time
            };
            let (t1, t2) = (run(level), run(level + eps));
            prop_assert!(t2 >= t1 - 1e-10);
            prop_assert!((t1 - (level * level - 1.0) / 4.0).abs() < 1e-8);
        }
    }
}
