//! Weierstrass drivings `c·Σ cos(bⁿt)/b^{n/2}`: partial sums with tail
//! bounds, Hölder and oscillation checks, and the quasislit pipeline.

use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::driving::{weierstrass_sum, DrivingSpec};
use crate::error::{domain, precondition, Error, Result};
use crate::hull_trace::{simplicity_check, welding, SimplicityReport, WeldingTable};
use crate::ode_engine::{integrate_until, Guard, IntegratorConfig};
use crate::real_line::{capture_bracket, CaptureBracket};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeierstrassParams {
    pub b: f64,
    #[serde(rename = "N")]
    pub n: u32,
    pub c: f64,
}

impl WeierstrassParams {
    pub fn new(b: f64, n: u32, c: f64) -> Result<Self> {
        if !(b > 1.0 && b.is_finite()) {
            return Err(domain(format!("frequency ratio b = {b} must exceed 1")));
        }
        if n < 1 {
            return Err(domain("partial-sum order must be at least 1"));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(domain(format!("amplitude c = {c} must be nonnegative")));
        }
        Ok(WeierstrassParams { b, n, c })
    }

    /// `c·b^{−(N+1)/2}/(1 − b^{−1/2})`, a bound on the omitted modes.
    pub fn tail_bound(&self) -> f64 {
        self.c * self.b.powf(-(self.n as f64 + 1.0) / 2.0) / (1.0 - self.b.powf(-0.5))
    }

    pub fn driving(&self, t_end: f64) -> Result<DrivingSpec> {
        DrivingSpec::weierstrass_partial(self.c, self.b, self.n, t_end)
    }

    /// `W(t) − W(t − h)` in product form, which keeps the low modes
    /// accurate when `h` is tiny.
    pub fn increment(&self, t: f64, h: f64) -> f64 {
        let mut acc = 0.0;
        let mut bn = 1.0;
        for _ in 0..self.n {
            bn *= self.b;
            let half = 0.5 * bn * h;
            acc += -2.0 * (bn * t - half).sin() * half.sin() / bn.sqrt();
        }
        self.c * acc
    }
}

/// Partial sum and the certified bound on its distance to the full series.
pub fn w_eval(p: &WeierstrassParams, t: f64) -> (f64, f64) {
    (p.c * weierstrass_sum(p.b, p.n, t), p.tail_bound())
}

/// `b/(√b − 1) + 2/(1 − 1/√b)`, a bound on the Hölder-1/2 norm of the
/// unit-amplitude series and all its partial sums.
pub fn holder_constant(b: f64) -> f64 {
    let r = b.sqrt();
    b / (r - 1.0) + 2.0 / (1.0 - 1.0 / r)
}

/// `(√π + 1/√π)·√2/(√b − 1)`.
pub fn oscillation_constant(b: f64) -> f64 {
    (PI.sqrt() + 1.0 / PI.sqrt()) * 2f64.sqrt() / (b.sqrt() - 1.0)
}

/// `√(2π)/(√b − 1)`, the sharper bound once the order is at most `m`.
pub fn low_order_constant(b: f64) -> f64 {
    (2.0 * PI).sqrt() / (b.sqrt() - 1.0)
}

/// Uniform points on `[0, 2π/b^k]` for each `k < levels`, merged.
pub fn holder_grid(b: f64, levels: u32, per_level: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..levels)
        .flat_map(|k| {
            let w = 2.0 * PI / b.powi(k as i32);
            (0..=per_level).map(move |i| w * i as f64 / per_level as f64)
        })
        .collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderNormReport {
    pub params: WeierstrassParams,
    pub estimate: f64,
    /// `c·C(b)`.
    pub bound: f64,
    /// `estimate/bound`.
    pub ratio: f64,
    /// Pair of times attaining the estimate.
    pub witness: (f64, f64),
    pub passed: bool,
}

/// Grid estimate of the Hölder-1/2 norm of the partial sum against `c·C(b)`.
pub fn holder_norm_check(p: &WeierstrassParams, grid: &[f64]) -> Result<HolderNormReport> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    if g.len() < 2 {
        return Err(domain("Hölder check needs at least two distinct grid points"));
    }
    let v: Vec<f64> = g.iter().map(|&t| w_eval(p, t).0).collect();
    let (estimate, i, j) = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0, i, i);
            for j in i + 1..g.len() {
                let r = (v[j] - v[i]).abs() / (g[j] - g[i]).sqrt();
                if r > best.0 {
                    best = (r, i, j);
                }
            }
            best
        })
        .reduce(|| (0.0, 0, 0), |a, b| if b.0 > a.0 { b } else { a });
    let bound = p.c * holder_constant(p.b);
    Ok(HolderNormReport {
        params: *p,
        estimate,
        bound,
        ratio: if bound > 0.0 { estimate / bound } else { 0.0 },
        witness: (g[i], g[j]),
        passed: estimate <= bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationRow {
    pub m: u32,
    pub step: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationReport {
    pub params: WeierstrassParams,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub rows: Vec<OscillationRow>,
    /// `c·(√π + 1/√π)·√2/(√b − 1)`.
    pub bound: f64,
    pub min_ratio: f64,
    /// Smallest `bound − ratio` over the rows.
    pub margin: f64,
    pub passed: bool,
}

/// `|W(T) − W(T − t_m)|/√t_m` at `t_m = 2π/b^{m−1}` for each `m`, against
/// the oscillation constant. Each ratio must sit strictly below it.
pub fn oscillation_check(p: &WeierstrassParams, t_end: f64, ms: &[u32]) -> Result<OscillationReport> {
    if ms.is_empty() {
        return Err(domain("empty range of m"));
    }
    let rows: Vec<OscillationRow> = ms
        .iter()
        .map(|&m| {
            let step = 2.0 * PI / p.b.powi(m as i32 - 1);
            if !(step <= t_end) {
                return Err(domain(format!("t_{m} = {step} exceeds T = {t_end}")));
            }
            Ok(OscillationRow { m, step, ratio: p.increment(t_end, step).abs() / step.sqrt() })
        })
        .collect::<Result<_>>()?;
    let bound = p.c * oscillation_constant(p.b);
    let margin = rows.iter().map(|r| bound - r.ratio).fold(f64::INFINITY, f64::min);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(OscillationReport {
        params: *p,
        t_end,
        rows,
        bound,
        min_ratio,
        margin,
        passed: margin > 0.0 || p.c == 0.0,
    })
}

/// `[2 − A, A + 4/A − B]` with `A = c·K(b)` bounding the smallest end
/// ratio and `B = c·C(b)` bounding the largest.
pub fn hypothesis_margins(b: f64, c: f64) -> [f64; 2] {
    let a = c * oscillation_constant(b);
    let big = c * holder_constant(b);
    [2.0 - a, a + 4.0 / a - big]
}

/// Largest amplitude for which both margins stay positive, by bisection.
pub fn amplitude_threshold(b: f64) -> f64 {
    let ok = |c: f64| hypothesis_margins(b, c).iter().all(|&m| m > 0.0);
    let mut hi = 1.0;
    while ok(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    lo
}

/// Lower bound on `x(T) − λ(t)` in units of `√(T − t)`: the solution from
/// `0⁺` at time `1/b` of `ẏ = 2/(y + κ√(1 − s))`, `κ = c·C(b)`, rescaled.
pub fn gap_constant(b: f64, c: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let kappa = c * holder_constant(b);
    let shrink = (1.0 - 1.0 / b).sqrt();
    if kappa == 0.0 {
        return Ok(2.0 * shrink);
    }
    let no_guards: [Guard<'_, 1>; 0] = [];
    let path = integrate_until(
        |s, y: &[f64; 1]| [2.0 / (y[0] + kappa * (1.0 - s).max(0.0).sqrt())],
        [0.0],
        (0.0, 1.0),
        &no_guards,
        cfg,
    )?;
    Ok(path.last()[0] * shrink)
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasislitVerdict {
    pub params: WeierstrassParams,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub margins: [f64; 2],
    pub threshold: f64,
    pub holder: HolderNormReport,
    pub oscillation: OscillationReport,
    pub simplicity: SimplicityReport,
    #[serde(skip)]
    pub welding: Option<WeldingTable>,
    pub ratio_range: Option<(f64, f64)>,
    /// Bound on the end ratio used for the capture bracket.
    pub c1: f64,
    pub c2: f64,
    /// `(C1 + 2)/C2`.
    pub m0: f64,
    pub bracket: CaptureBracket,
    pub ratios_within: bool,
}

impl QuasislitVerdict {
    pub fn passed(&self) -> bool {
        self.simplicity.simple && self.ratios_within && self.bracket.holds
    }
}

/// Hypothesis margins, then trace simplicity, then welding ratios for the
/// driving `c·W_b^N` on `[0, T]`.
pub fn quasislit_pipeline(
    p: &WeierstrassParams,
    t_end: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<QuasislitVerdict> {
    let margins = hypothesis_margins(p.b, p.c);
    let threshold = amplitude_threshold(p.b);
    if margins.iter().any(|&m| !(m > 0.0)) {
        return Err(precondition(format!(
            "hypothesis margins {margins:?} for c = {} (threshold c* = {threshold:.6})",
            p.c
        )));
    }
    log::debug!("pipeline b = {}, N = {}, c = {}: margins {margins:?}", p.b, p.n, p.c);
    let holder = holder_norm_check(p, &holder_grid(p.b, p.n.min(4), 400))?;
    let ms: Vec<u32> = (2..=8).filter(|&m| 2.0 * PI / p.b.powi(m as i32 - 1) <= t_end).collect();
    let oscillation = oscillation_check(p, t_end, &ms)?;
    if !(holder.passed && oscillation.passed) {
        return Err(Error::Numeric(format!(
            "norm checks failed: Hölder ratio {:.4}, oscillation margin {:.4e}",
            holder.ratio, oscillation.margin
        )));
    }

    let spec = p.driving(t_end)?;
    let simplicity = simplicity_check(&spec, t_end, dt)?;
    let s_grid: Vec<f64> = (0..16).map(|k| t_end * k as f64 / 16.0).collect();
    let table = if simplicity.simple { Some(welding(&spec, t_end, &s_grid, dt, cfg)?) } else { None };

    let c1 = p.c * holder_constant(p.b);
    let bracket = capture_bracket(&spec, t_end, c1, cfg)?;
    let c2 = gap_constant(p.b, p.c, cfg)?;
    let m0 = (c1 + 2.0) / c2;
    let ratio_range = table.as_ref().map(|w| {
        w.ratio1
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
    });
    let ratios_within = ratio_range.is_some_and(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo >= 1.0 / m0 && hi <= m0);
    Ok(QuasislitVerdict {
        params: *p,
        t_end,
        dt,
        margins,
        threshold,
        holder,
        oscillation,
        simplicity,
        welding: table,
        ratio_range,
        c1,
        c2,
        m0,
        bracket,
        ratios_within,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub b: f64,
    #[serde(rename = "N")]
    pub n: u32,
    pub c: f64,
    pub check: String,
    pub margin: f64,
    pub verdict: String,
}

fn verdict(ok: bool) -> String {
    if ok { "pass" } else { "fail" }.to_string()
}

/// Hölder and oscillation checks over every `(b, N, c)`, ordered by tuple.
pub fn sweep(bs: &[f64], ns: &[u32], cs: &[f64], t_end: f64, ms: &[u32]) -> Result<Vec<SweepRow>> {
    let mut keys = Vec::new();
    for &b in bs {
        for &n in ns {
            for &c in cs {
                keys.push((b, n, c));
            }
        }
    }
    let rows: Vec<Vec<SweepRow>> = keys
        .par_iter()
        .map(|&(b, n, c)| {
            let p = WeierstrassParams::new(b, n, c)?;
            let h = holder_norm_check(&p, &holder_grid(b, n.min(4), 200))?;
            let o = oscillation_check(&p, t_end, ms)?;
            let m = hypothesis_margins(b, c);
            let hyp = m[0].min(m[1]);
            let row = |check: &str, margin: f64, ok: bool| SweepRow {
                b,
                n,
                c,
                check: check.to_string(),
                margin,
                verdict: verdict(ok),
            };
            Ok(vec![
                row("holder_norm", h.bound - h.estimate, h.passed),
                row("oscillation", o.margin, o.passed),
                row("hypothesis", hyp, hyp > 0.0),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increment_matches_direct_difference() {
        let p = WeierstrassParams::new(4.0, 5, 1.3).unwrap();
        for (t, h) in [(0.7, 0.3), (2.0, 0.01), (-1.0, 0.5)] {
            let d = w_eval(&p, t).0 - w_eval(&p, t - h).0;
            assert!((p.increment(t, h) - d).abs() < 1e-12);
        }
    }
}
