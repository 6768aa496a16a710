//! Numerical laboratory for the chordal Loewner equation.
//!
//! The crate covers driving functions, an adaptive integrator with event
//! detection, the real and imaginary one-point equations in their original
//! and self-similar time frames, hull traces by slit-map composition,
//! conformal welding, and the Weierstrass-function experiments.

// Negated comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod driving;
pub mod error;
pub mod export;
pub mod hull_trace;
pub mod imaginary_dual;
pub mod ode_engine;
pub mod quad;
pub mod real_line;
pub mod sharp;
pub mod signal;
pub mod weierstrass_suite;

pub use error::{Error, Result};
