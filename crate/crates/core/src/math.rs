//! Float math routed through `libm` so the crate builds without `std` and
//! produces identical bits on every platform.

#![allow(unused_imports)]

pub(crate) use libm::{
    atan, cos, exp, fabs, floor, fmod, hypot, log, log10, pow, round, sin, sincos, sqrt, tan,
};

pub(crate) const TAU: f64 = core::f64::consts::TAU;
pub(crate) const PI: f64 = core::f64::consts::PI;

/// 20·log10 of a magnitude ratio.
pub(crate) fn db(ratio: f64) -> f64 {
    20.0 * log10(ratio)
}
