//! Adaptive Gauss–Kronrod quadrature, exponential tails, and bracketed roots.

use crate::error::{domain, numeric, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Estimated absolute error (Kronrod minus Gauss, summed over panels).
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_panels: 4000,
        }
    }
}

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for (j, &x) in XGK.iter().enumerate().take(7) {
        let dx = h * x;
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates `f` over `[a, b]`, first splitting at the supplied breakpoints.
pub fn integrate(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: &QuadConfig,
) -> QuadResult {
    if b <= a {
        return QuadResult { value: 0.0, error: 0.0 };
    }
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut panels: Vec<(f64, f64, f64, f64)> = cuts
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if err <= tol || panels.len() >= cfg.max_panels || !total.is_finite() {
            return QuadResult { value: total, error: err };
        }
        let (i, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return QuadResult { value: total, error: err };
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Exponential fit `A e^{-r s}` through `f(s1)` and `f(s2)`, `s1 < s2`.
#[derive(Debug, Clone, Copy)]
pub struct TailFit {
    pub rate: f64,
    /// `∫_{s2}^∞ A e^{-r s} ds`.
    pub tail: f64,
}

pub fn fit_tail(f: &dyn Fn(f64) -> f64, s1: f64, s2: f64) -> Result<TailFit> {
    let (f1, f2) = (f(s1), f(s2));
    if f2 == 0.0 && f1 >= 0.0 {
        return Ok(TailFit { rate: f64::INFINITY, tail: 0.0 });
    }
    if !(f1 > 0.0 && f2 > 0.0) {
        return Err(domain(format!(
            "tail fit needs a positive integrand, got f({s1}) = {f1}, f({s2}) = {f2}"
        )));
    }
    let rate = (f1 / f2).ln() / (s2 - s1);
    if rate <= 0.0 {
        return Err(domain(format!(
            "integrand does not decay on [{s1}, {s2}] (fitted rate {rate:.3e}); tail not integrable"
        )));
    }
    Ok(TailFit { rate, tail: f2 / rate })
}

/// `∫_a^∞ f` as adaptive quadrature on `[a, a + len]` plus a fitted tail on
/// the last `window` units. The reported error includes the whole tail.
pub fn integrate_to_infinity(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    len: f64,
    window: f64,
    breaks: &[f64],
    cfg: &QuadConfig,
) -> Result<(QuadResult, TailFit)> {
    let end = a + len;
    let body = integrate(f, a, end, breaks, cfg);
    let fit = fit_tail(f, end - window, end)?;
    Ok((
        QuadResult {
            value: body.value + fit.tail,
            error: body.error + fit.tail.abs(),
        },
        fit,
    ))
}

/// Bisection on a sign change of `f` in `[lo, hi]`.
pub fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(numeric(format!(
            "no bracket: f({lo}) = {flo:.3e}, f({hi}) = {fhi:.3e}"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(&|x| x * x * x - 2.0 * x, 0.0, 2.0, &[], &QuadConfig::default());
        assert!((r.value - 0.0).abs() < 1e-14);
    }

    #[test]
    fn kink_with_breakpoint() {
        let f = |x: f64| (x - 0.3).abs();
        let r = integrate(&f, 0.0, 1.0, &[0.3], &QuadConfig::default());
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn exponential_tail_is_exact_for_exponentials() {
        let f = |s: f64| (-1.5 * s).exp();
        let (r, fit) =
            integrate_to_infinity(&f, 0.0, 10.0, 2.0, &[], &QuadConfig::default()).unwrap();
        assert!((fit.rate - 1.5).abs() < 1e-12);
        assert!((r.value - 1.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn growing_tail_is_rejected() {
        let f = |s: f64| (0.1 * s).exp();
        assert!(integrate_to_infinity(&f, 0.0, 10.0, 2.0, &[], &QuadConfig::default()).is_err());
    }

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(&|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert!(bisect(&|x| x * x + 1.0, 0.0, 2.0, 1e-15).is_err());
    }
}
