//! Explicit captured solutions whose frame driving oscillates between a
//! prescribed lower limit `a` and the smallest admissible upper limit.
//!
//! The solution `x` is built from cosine arcs on a partition `α_k < β_k <
//! α_{k+1}` of the half-line and the driving is recovered as
//! `ξ = x + 4/(x − ẋ)`. Times here are shifted so that `s = 0` corresponds
//! to the knot `α_{k0}`.

use std::f64::consts::PI;

use crate::error::{domain, Result};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `a ≤ 2`: arcs around `a` with amplitude `1/ln t`.
    Low,
    /// `2 < a < 4`: arcs around 2 with amplitude `1/t`.
    High,
}

impl Branch {
    pub fn for_level(a: f64) -> Branch {
        if a <= 2.0 {
            Branch::Low
        } else {
            Branch::High
        }
    }
}

#[derive(Debug, Clone)]
pub struct SharpExample {
    pub a: f64,
    pub branch: Branch,
    /// Index of the first knot used; `s = 0` is `α_{k0}`.
    pub k0: usize,
    origin: f64,
    // Branch High: (a-2)/(4-a).
    r: f64,
}

impl SharpExample {
    pub fn new(a: f64, branch: Option<Branch>, k_start: Option<usize>) -> Result<Self> {
        if !(a > 0.0 && a < 4.0) {
            return Err(domain(format!("sharp example needs 0 < a < 4, got {a}")));
        }
        let branch = branch.unwrap_or(Branch::for_level(a));
        if branch == Branch::High && a <= 2.0 {
            return Err(domain(format!("the high branch needs a > 2, got {a}")));
        }
        let r = if a > 2.0 { (a - 2.0) / (4.0 - a) } else { 0.0 };
        let mut ex = SharpExample { a, branch, k0: 1, origin: 0.0, r };
        let mut k = k_start.unwrap_or(1).max(1);
        if branch == Branch::Low {
            // Keep x ≥ a - 1/ln t bounded away from zero.
            while 1.0 / ex.alpha(k).ln() >= 0.5 * a {
                k += 1;
            }
        }
        ex.k0 = k;
        ex.origin = ex.alpha(k);
        Ok(ex)
    }

    pub fn alpha(&self, k: usize) -> f64 {
        let k = k as f64;
        let base = 0.5 * k * (k + 1.0) * PI;
        match self.branch {
            Branch::Low => base + PI - PI / (k + 1.0),
            Branch::High => base + self.r * k / (k + 1.0) * PI,
        }
    }

    pub fn beta(&self, k: usize) -> f64 {
        let k = k as f64;
        let base = 0.5 * k * (k + 1.0) * PI;
        match self.branch {
            Branch::Low => base + PI - PI / (k + 2.0),
            Branch::High => base + self.r * (k + 1.0) / (k + 2.0) * PI,
        }
    }

    /// Frame time of a paper-time knot.
    pub fn frame_time(&self, t: f64) -> f64 {
        t - self.origin
    }

    fn cell(&self, t: f64) -> usize {
        let mut k = (((1.0 + 8.0 * t / PI).sqrt() - 1.0) / 2.0).floor().max(0.0) as usize;
        while k > 0 && self.alpha(k) > t {
            k -= 1;
        }
        while self.alpha(k + 1) <= t {
            k += 1;
        }
        k
    }

    fn base(&self) -> f64 {
        match self.branch {
            Branch::Low => self.a,
            Branch::High => 2.0,
        }
    }

    fn amplitude(&self, t: f64) -> (f64, f64) {
        match self.branch {
            Branch::Low => {
                let l = t.ln();
                (1.0 / l, -1.0 / (t * l * l))
            }
            Branch::High => (1.0 / t, -1.0 / (t * t)),
        }
    }

    fn fast_rate(&self, k: usize) -> f64 {
        let w = ((k + 1) * (k + 2)) as f64;
        match self.branch {
            Branch::Low => w,
            Branch::High => w / self.r,
        }
    }

    /// `(x, ẋ)` at frame time `s ≥ 0`.
    pub fn state(&self, s: f64) -> (f64, f64) {
        let t = self.origin + s.max(0.0);
        let k = self.cell(t);
        let (amp, damp) = self.amplitude(t);
        let base = self.base();
        let (al, be) = (self.alpha(k), self.beta(k));
        if t < be {
            let w = self.fast_rate(k);
            let (sn, cs) = (w * (t - al)).sin_cos();
            (base + amp * cs, damp * cs - amp * w * sn)
        } else {
            let w = 1.0 / (k as f64 + 1.0);
            let (sn, cs) = (w * (t - be)).sin_cos();
            (base - amp * cs, -damp * cs + amp * w * sn)
        }
    }

    pub fn x(&self, s: f64) -> f64 {
        self.state(s).0
    }

    pub fn xi(&self, s: f64) -> f64 {
        let (x, dx) = self.state(s);
        x + 4.0 / (x - dx)
    }

    /// `(ξ, x)` as signals that report the arc knots as breakpoints.
    pub fn signals(&self) -> (Signal, Signal) {
        let (a, b, c, d) = (self.clone(), self.clone(), self.clone(), self.clone());
        (
            Signal::new(move |s| a.xi(s)).with_breaks(move |lo, hi| b.knots(lo, hi)),
            Signal::new(move |s| c.x(s)).with_breaks(move |lo, hi| d.knots(lo, hi)),
        )
    }

    /// Knots inside the frame interval `(lo, hi)`.
    pub fn knots(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = self.cell(self.origin + lo.max(0.0));
        loop {
            let al = self.frame_time(self.alpha(k));
            if al >= hi {
                break;
            }
            let be = self.frame_time(self.beta(k));
            for p in [al, be] {
                if p > lo && p < hi {
                    out.push(p);
                }
            }
            k += 1;
        }
        out
    }

    /// Frame time of the cell midpoint `(α_k + β_k)/2`, where ξ dips.
    pub fn low_witness(&self, k: usize) -> f64 {
        self.frame_time(0.5 * (self.alpha(k) + self.beta(k)))
    }

    /// Frame time of `β_k`, where ξ peaks.
    pub fn high_witness(&self, k: usize) -> f64 {
        self.frame_time(self.beta(k))
    }

    /// Limit of ξ along the high witnesses.
    pub fn upper_limit(&self) -> f64 {
        match self.branch {
            Branch::Low => self.a + 4.0 / self.a,
            Branch::High => 4.0,
        }
    }

    /// Limit of ξ along the low witnesses. For the high branch the fast arc
    /// has bounded slope `2/(rπ)`, so the dip stays above 2.
    pub fn lower_limit(&self) -> f64 {
        match self.branch {
            Branch::Low => self.a,
            Branch::High => 2.0 + 4.0 / (2.0 + 2.0 / (self.r * PI)),
        }
    }
}
