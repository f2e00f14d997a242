//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Scalar`], which is a
//! thin bundle of `num-traits` bounds plus the formatting/serde glue the
//! exporters need. `f64` is the type used by the CLI and the test suites;
//! `f32` is supported for callers that want it.

use std::fmt;

/// Floating-point element type of states, matrices and trajectories.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant (tolerance, gain, literal from a config)
    /// into `Self`. Panics only if the value is not representable at all,
    /// which cannot happen for finite constants and f32/f64.
    fn from_real(v: f64) -> Self {
        num_traits::FromPrimitive::from_f64(v).expect("finite constant must be representable")
    }

    /// Lossy view as `f64`, used for diagnostics and report metadata.
    fn to_real(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Parses a decimal/scientific literal, as emitted by the CSV writers.
    fn parse_str(s: &str) -> Option<Self>;
}

impl Scalar for f64 {
    fn parse_str(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}

impl Scalar for f32 {
    fn parse_str(s: &str) -> Option<Self> {
        s.trim().parse().ok()
    }
}

/// Shorthand for `T::from_real` at call sites full of numeric literals.
pub fn real<T: Scalar>(v: f64) -> T {
    T::from_real(v)
}
