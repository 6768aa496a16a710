//! Shareable real functions of one variable.
//!
//! Transformed drivings (ξ, η), gap functions and test integrands are all
//! passed around as [`Signal`]s. A signal remembers whether it is constant,
//! which lets phase-line arguments replace long integrations.

use std::fmt;
use std::sync::Arc;

type Func = dyn Fn(f64) -> f64 + Send + Sync;
type BreakFn = dyn Fn(f64, f64) -> Vec<f64> + Send + Sync;

#[derive(Clone)]
pub struct Signal {
    f: Arc<Func>,
    constant: Option<f64>,
    breaks: Option<Arc<BreakFn>>,
}

impl Signal {
    pub fn constant(c: f64) -> Self {
        Signal {
            f: Arc::new(move |_| c),
            constant: Some(c),
            breaks: None,
        }
    }

    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Signal {
            f: Arc::new(f),
            constant: None,
            breaks: None,
        }
    }

    /// Attaches a breakpoint oracle: given `[a, b]` it lists the points
    /// inside where the function or its derivative jumps. Quadrature uses
    /// these to split intervals.
    pub fn with_breaks(mut self, b: impl Fn(f64, f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.breaks = Some(Arc::new(b));
        self
    }

    /// Piecewise-linear interpolation through `(xs, ys)`; constant beyond the ends.
    pub fn linear_interp(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(!xs.is_empty());
        let knots = xs.clone();
        Signal::new(move |x| interp(&xs, &ys, x))
            .with_breaks(move |a, b| knots.iter().copied().filter(|&k| k > a && k < b).collect())
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        match &self.breaks {
            Some(bk) => bk(a, b),
            None => Vec::new(),
        }
    }

    pub fn map(&self, g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Signal {
        let f = self.f.clone();
        let mut out = Signal::new(move |x| g(x, f(x)));
        out.breaks = self.breaks.clone();
        out
    }

    /// Pointwise difference `self - other`.
    pub fn minus(&self, other: &Signal) -> Signal {
        let (a, b) = (self.f.clone(), other.f.clone());
        let constant = match (self.constant, other.constant) {
            (Some(x), Some(y)) => Some(x - y),
            _ => None,
        };
        let (ba, bb) = (self.breaks.clone(), other.breaks.clone());
        Signal {
            f: Arc::new(move |x| a(x) - b(x)),
            constant,
            breaks: merge_breaks(ba, bb),
        }
    }

    pub fn scale(&self, c: f64) -> Signal {
        let a = self.f.clone();
        Signal {
            f: Arc::new(move |x| c * a(x)),
            constant: self.constant.map(|v| c * v),
            breaks: self.breaks.clone(),
        }
    }
}

fn merge_breaks(
    a: Option<Arc<BreakFn>>,
    b: Option<Arc<BreakFn>>,
) -> Option<Arc<BreakFn>> {
    match (a, b) {
        (None, None) => None,
        (Some(x), None) | (None, Some(x)) => Some(x),
        (Some(x), Some(y)) => Some(Arc::new(move |lo, hi| {
            let mut v = x(lo, hi);
            v.extend(y(lo, hi));
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })),
    }
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constant {
            Some(c) => write!(f, "Signal::constant({c})"),
            None => write!(f, "Signal(<fn>)"),
        }
    }
}

/// Linear interpolation on a sorted grid, clamped at both ends.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let (x0, x1) = (xs[i], xs[i + 1]);
    let w = (x - x0) / (x1 - x0);
    ys[i] + w * (ys[i + 1] - ys[i])
}
