//! Driving functions: a parametric zoo, sampled and random paths, shifts,
//! and finite-scale Hölder-1/2 diagnostics.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::sharp::{Branch, SharpExample};
use crate::signal::interp;

#[derive(Debug, Clone)]
pub enum Family {
    Constant { value: f64 },
    Linear { slope: f64, intercept: f64 },
    /// `c√T − c√(T−t)`; the frame driving at `T` is identically `c`.
    SqrtApproach { c: f64 },
    WeierstrassPartial { c: f64, b: f64, n: u32 },
    Brownian { kappa: f64, seed: u64, grid_step: f64, path: Arc<Vec<f64>> },
    Sampled { times: Arc<Vec<f64>>, values: Arc<Vec<f64>> },
    /// `−√(T−t)·ξ(s(t))` with ξ from [`SharpExample`], so `λ(T) = 0`.
    SharpExample { example: Arc<SharpExample>, k_start: Option<usize> },
    /// `t ↦ scale·inner(t + shift)`.
    Composite { inner: Box<DrivingSpec>, shift: f64, scale: f64 },
}

#[derive(Debug, Clone)]
pub struct DrivingSpec {
    pub family: Family,
    t_end: f64,
    pub normalize: bool,
    origin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub t: f64,
    pub a_hat: f64,
    pub b_hat: f64,
    pub scales_used: Vec<f64>,
}

impl DrivingSpec {
    fn build(family: Family, t_end: f64) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(domain(format!("domain end must be positive, got {t_end}")));
        }
        let mut spec = DrivingSpec { family, t_end, normalize: false, origin: 0.0 };
        spec.origin = spec.raw(0.0);
        Ok(spec)
    }

    pub fn constant(value: f64, t_end: f64) -> Result<Self> {
        Self::build(Family::Constant { value }, t_end)
    }

    pub fn linear(slope: f64, intercept: f64, t_end: f64) -> Result<Self> {
        Self::build(Family::Linear { slope, intercept }, t_end)
    }

    pub fn sqrt_approach(c: f64, t_end: f64) -> Result<Self> {
        Self::build(Family::SqrtApproach { c }, t_end)
    }

    pub fn weierstrass_partial(c: f64, b: f64, n: u32, t_end: f64) -> Result<Self> {
        if !(b > 1.0) || n == 0 {
            return Err(domain(format!("Weierstrass sum needs b > 1 and N ≥ 1, got b={b}, N={n}")));
        }
        Self::build(Family::WeierstrassPartial { c, b, n }, t_end)
    }

    /// `√κ·B` on a uniform grid of width `grid_step` (default `2^-16·T`),
    /// linearly interpolated.
    pub fn brownian(kappa: f64, seed: u64, grid_step: Option<f64>, t_end: f64) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(domain(format!("κ must be nonnegative, got {kappa}")));
        }
        let step = grid_step.unwrap_or(t_end / 65536.0);
        if !(step > 0.0) {
            return Err(domain(format!("grid step must be positive, got {step}")));
        }
        let n = (t_end / step).ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = (kappa * step).sqrt();
        let mut path = Vec::with_capacity(n + 1);
        let mut b = 0.0;
        path.push(b);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            b += sd * z;
            path.push(b);
        }
        Self::build(
            Family::Brownian { kappa, seed, grid_step: step, path: Arc::new(path) },
            t_end,
        )
    }

    pub fn sampled(times: Vec<f64>, values: Vec<f64>, t_end: f64) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(domain("sampled driving needs ≥ 2 matching times and values"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("sample times must be strictly increasing"));
        }
        if times[0] > 0.0 || *times.last().unwrap() < t_end * (1.0 - 1e-12) {
            return Err(domain(format!(
                "samples cover [{}, {}] but the domain is [0, {t_end}]",
                times[0],
                times.last().unwrap()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("sample values must be finite"));
        }
        Self::build(Family::Sampled { times: Arc::new(times), values: Arc::new(values) }, t_end)
    }

    pub fn sharp_example(a: f64, branch: Option<Branch>, k_start: Option<usize>, t_end: f64) -> Result<Self> {
        let example = Arc::new(SharpExample::new(a, branch, k_start)?);
        Self::build(Family::SharpExample { example, k_start }, t_end)
    }

    pub fn composite(inner: DrivingSpec, shift: f64, scale: f64, t_end: f64) -> Result<Self> {
        if !(shift >= 0.0) || shift + t_end > inner.t_end * (1.0 + 1e-12) {
            return Err(domain(format!(
                "composite window [{shift}, {}] exceeds the inner domain [0, {}]",
                shift + t_end,
                inner.t_end
            )));
        }
        Self::build(Family::Composite { inner: Box::new(inner), shift, scale }, t_end)
    }

    pub fn normalized(mut self, on: bool) -> Self {
        self.normalize = on;
        self
    }

    pub fn domain_end(&self) -> f64 {
        self.t_end
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Constant { .. } => "constant",
            Family::Linear { .. } => "linear",
            Family::SqrtApproach { .. } => "sqrt_approach",
            Family::WeierstrassPartial { .. } => "weierstrass_partial",
            Family::Brownian { .. } => "brownian",
            Family::Sampled { .. } => "sampled",
            Family::SharpExample { .. } => "sharp_example",
            Family::Composite { .. } => "composite",
        }
    }

    fn raw(&self, t: f64) -> f64 {
        let te = self.t_end;
        match &self.family {
            Family::Constant { value } => *value,
            Family::Linear { slope, intercept } => intercept + slope * t,
            Family::SqrtApproach { c } => c * (te.sqrt() - (te - t).max(0.0).sqrt()),
            Family::WeierstrassPartial { c, b, n } => c * weierstrass_sum(*b, *n, t),
            Family::Brownian { grid_step, path, .. } => {
                let x = t / grid_step;
                let i = (x.floor() as usize).min(path.len() - 2);
                let w = x - i as f64;
                path[i] + w * (path[i + 1] - path[i])
            }
            Family::Sampled { times, values } => interp(times, values, t),
            Family::SharpExample { example, .. } => {
                let u = te - t;
                if u <= 0.0 {
                    return 0.0;
                }
                let s = -0.5 * (u / te).ln();
                -u.sqrt() * example.xi(s)
            }
            Family::Composite { inner, shift, scale } => scale * inner.at(t + shift),
        }
    }

    /// λ(t), clamping `t` into `[0, T]`.
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        let v = self.raw(t.clamp(0.0, self.t_end));
        if self.normalize {
            v - self.origin
        } else {
            v
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.t_end) {
            return Err(domain(format!("t = {t} lies outside [0, {}]", self.t_end)));
        }
        Ok(self.at(t))
    }

    /// `(λ(T) − λ(T−u))/√u` for `u = e^{ln_u}`, evaluated without
    /// cancellation where the family allows it. Valid for tiny `u` that a
    /// plain difference cannot resolve.
    pub fn end_ratio(&self, ln_u: f64) -> f64 {
        let te = self.t_end;
        let u = ln_u.exp();
        let su = (0.5 * ln_u).exp();
        match &self.family {
            Family::Constant { .. } => 0.0,
            Family::Linear { slope, .. } => slope * su,
            Family::SqrtApproach { c } => *c,
            Family::WeierstrassPartial { c, b, n } => {
                let mut acc = 0.0;
                let mut bn = 1.0;
                for _ in 0..*n {
                    bn *= b;
                    acc += -2.0 * (bn * (te - 0.5 * u)).sin() * (0.5 * bn * u).sin() / bn.sqrt();
                }
                c * acc / su
            }
            Family::SharpExample { example, .. } => example.xi(0.5 * (te.ln() - ln_u)),
            Family::Brownian { grid_step, .. } if u <= *grid_step => self.end_slope() * su,
            Family::Sampled { times, .. } if u <= te - times[times.partition_point(|&x| x < te) - 1] => {
                self.end_slope() * su
            }
            Family::Composite { inner, shift, scale }
                if ((shift + te) - inner.t_end).abs() <= 1e-14 * inner.t_end =>
            {
                scale * inner.end_ratio(ln_u)
            }
            _ => {
                if u >= te {
                    (self.at(te) - self.at(0.0)) / te.sqrt()
                } else {
                    (self.at(te) - self.at(te - u)) / su
                }
            }
        }
    }

    // Slope of the last linear piece of an interpolated path.
    fn end_slope(&self) -> f64 {
        let te = self.t_end;
        match &self.family {
            Family::Brownian { grid_step, path, .. } => {
                let x = te / grid_step;
                let i = ((x.ceil() as usize).max(1) - 1).min(path.len() - 2);
                (path[i + 1] - path[i]) / grid_step
            }
            Family::Sampled { times, values } => {
                let j = times.partition_point(|&x| x < te).max(1);
                (values[j] - values[j - 1]) / (times[j] - times[j - 1])
            }
            _ => 0.0,
        }
    }

    /// `t ↦ λ(t + r)` on `[0, T − r]`.
    pub fn shift(&self, r: f64, normalize: bool) -> Result<DrivingSpec> {
        if !(r >= 0.0 && r < self.t_end) {
            return Err(domain(format!("shift {r} must lie in [0, {})", self.t_end)));
        }
        Ok(DrivingSpec::composite(self.clone(), r, 1.0, self.t_end - r)?.normalized(normalize))
    }

    /// `t ↦ −λ(t)`.
    pub fn reflect(&self) -> DrivingSpec {
        DrivingSpec::composite(self.clone(), 0.0, -1.0, self.t_end).expect("same domain")
    }

    /// Grid-pair lower bound on the Hölder-1/2 seminorm.
    pub fn holder_half_norm(&self, grid: &[f64]) -> Result<f64> {
        if grid.len() < 2 {
            return Err(domain("Hölder estimate needs at least two grid points"));
        }
        if grid.iter().any(|&t| !(t >= 0.0 && t <= self.t_end)) {
            return Err(domain(format!("grid leaves [0, {}]", self.t_end)));
        }
        let mut g = grid.to_vec();
        g.sort_by(f64::total_cmp);
        g.dedup();
        if g.len() < 2 {
            return Err(domain("grid is degenerate"));
        }
        let vals: Vec<f64> = g.iter().map(|&t| self.at(t)).collect();
        Ok(holder_pairs(&g, &vals))
    }

    pub fn local_scaling_exponents(&self, t: f64, scales: &[f64]) -> Result<ScalingReport> {
        if scales.is_empty() {
            return Err(domain("scale ladder is empty"));
        }
        if scales.windows(2).any(|w| !(w[1] < w[0])) || scales.iter().any(|&d| !(d > 0.0 && d <= t)) {
            return Err(domain("scales must be strictly decreasing inside (0, t]"));
        }
        let at_end = (t - self.t_end).abs() <= 1e-15 * self.t_end;
        let lt = self.at(t);
        let ratios: Vec<f64> = scales
            .iter()
            .map(|&d| {
                if at_end {
                    self.end_ratio(d.ln()).abs()
                } else {
                    (lt - self.at(t - d)).abs() / d.sqrt()
                }
            })
            .collect();
        Ok(ScalingReport {
            t,
            a_hat: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            b_hat: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            scales_used: scales.to_vec(),
        })
    }

    pub fn to_config(&self) -> DrivingConfig {
        let (family, params, seed) = match &self.family {
            Family::Constant { value } => ("constant", serde_json::json!({ "value": value }), None),
            Family::Linear { slope, intercept } => (
                "linear",
                serde_json::json!({ "slope": slope, "intercept": intercept }),
                None,
            ),
            Family::SqrtApproach { c } => ("sqrt_approach", serde_json::json!({ "c": c }), None),
            Family::WeierstrassPartial { c, b, n } => (
                "weierstrass_partial",
                serde_json::json!({ "c": c, "b": b, "N": n }),
                None,
            ),
            Family::Brownian { kappa, seed, grid_step, .. } => (
                "brownian",
                serde_json::json!({ "kappa": kappa, "grid_step": grid_step }),
                Some(*seed),
            ),
            Family::Sampled { times, values } => (
                "sampled",
                serde_json::json!({ "times": times.as_slice(), "values": values.as_slice() }),
                None,
            ),
            Family::SharpExample { example, k_start } => (
                "sharp_example",
                serde_json::json!({ "a": example.a, "branch": example.branch, "k_start": k_start }),
                None,
            ),
            Family::Composite { inner, shift, scale } => (
                "composite",
                serde_json::json!({ "inner": inner.to_config(), "shift": shift, "scale": scale }),
                None,
            ),
        };
        DrivingConfig {
            family: family.to_string(),
            params,
            t_end: self.t_end,
            normalize: self.normalize,
            seed,
        }
    }

    /// SHA-256 of the canonical JSON form, for output metadata.
    pub fn spec_hash(&self) -> String {
        let text = serde_json::to_string(&self.to_config()).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `Σ_{n=1}^{N} cos(bⁿt)/b^{n/2}`.
pub fn weierstrass_sum(b: f64, n: u32, t: f64) -> f64 {
    let mut acc = 0.0;
    let mut bn = 1.0;
    for _ in 0..n {
        bn *= b;
        acc += (bn * t).cos() / bn.sqrt();
    }
    acc
}

/// Maximum of `|v_j − v_i|/√(t_j − t_i)` over all pairs of a sorted grid.
pub fn holder_pairs(times: &[f64], vals: &[f64]) -> f64 {
    (0..times.len())
        .into_par_iter()
        .map(|i| {
            let mut m: f64 = 0.0;
            for j in i + 1..times.len() {
                m = m.max((vals[j] - vals[i]).abs() / (times[j] - times[i]).sqrt());
            }
            m
        })
        .reduce(|| 0.0, f64::max)
}

/// Geometric ladder `δ₀·2^{−k}`, `k = 0..=K`, with `δ₀ = t/4`, `K = 20`.
pub fn default_scales(t: f64) -> Vec<f64> {
    (0..=20).map(|k| 0.25 * t * 0.5f64.powi(k)).collect()
}

/// JSON form of a driving function.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrivingConfig {
    pub family: String,
    pub params: serde_json::Value,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantP {
    value: f64,
}
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearP {
    slope: f64,
    #[serde(default)]
    intercept: f64,
}
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SqrtP {
    c: f64,
}
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeierstrassP {
    c: f64,
    b: f64,
    #[serde(rename = "N")]
    n: u32,
}
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BrownianP {
    kappa: f64,
    grid_step: Option<f64>,
}
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampledP {
    times: Vec<f64>,
    values: Vec<f64>,
}
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SharpP {
    a: f64,
    branch: Option<Branch>,
    k_start: Option<usize>,
}
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompositeP {
    inner: DrivingConfig,
    #[serde(default)]
    shift: f64,
    #[serde(default = "one")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

fn params<T: serde::de::DeserializeOwned>(family: &str, v: &serde_json::Value) -> Result<T> {
    serde_json::from_value(v.clone())
        .map_err(|e| Error::Config(format!("params for family `{family}`: {e}")))
}

impl DrivingConfig {
    pub fn build(&self) -> Result<DrivingSpec> {
        let f = self.family.as_str();
        let te = self.t_end;
        if self.seed.is_some() && f != "brownian" {
            return Err(Error::Config(format!("`seed` is only meaningful for brownian, not `{f}`")));
        }
        let spec = match f {
            "constant" => DrivingSpec::constant(params::<ConstantP>(f, &self.params)?.value, te),
            "linear" => {
                let p: LinearP = params(f, &self.params)?;
                DrivingSpec::linear(p.slope, p.intercept, te)
            }
            "sqrt_approach" => DrivingSpec::sqrt_approach(params::<SqrtP>(f, &self.params)?.c, te),
            "weierstrass_partial" => {
                let p: WeierstrassP = params(f, &self.params)?;
                DrivingSpec::weierstrass_partial(p.c, p.b, p.n, te)
            }
            "brownian" => {
                let p: BrownianP = params(f, &self.params)?;
                let seed = self
                    .seed
                    .ok_or_else(|| Error::Config("brownian driving needs a top-level `seed`".into()))?;
                DrivingSpec::brownian(p.kappa, seed, p.grid_step, te)
            }
            "sampled" => {
                let p: SampledP = params(f, &self.params)?;
                DrivingSpec::sampled(p.times, p.values, te)
            }
            "sharp_example" => {
                let p: SharpP = params(f, &self.params)?;
                DrivingSpec::sharp_example(p.a, p.branch, p.k_start, te)
            }
            "composite" => {
                let p: CompositeP = params(f, &self.params)?;
                DrivingSpec::composite(p.inner.build()?, p.shift, p.scale, te)
            }
            other => return Err(Error::Config(format!("unknown driving family `{other}`"))),
        }?;
        Ok(spec.normalized(self.normalize))
    }
}

impl std::str::FromStr for DrivingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let cfg: DrivingConfig = serde_json::from_str(s)?;
        cfg.build()
    }
}
