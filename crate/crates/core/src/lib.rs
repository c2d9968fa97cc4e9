//! Behavioral charge-domain model of a 4-channel time-division-multiplexed
//! capacitively-coupled chopper analog front-end for ear-EEG.
//!
//! The crate covers the complete signal chain at the charge/voltage level:
//! the TDM/chopper/PWM control waveforms, the two-stage impedance boost
//! loop and its trimming, the coarse + fine DC servo loop with its
//! edge-pursuit-comparator quantizer, a discrete-event transient engine
//! with gain/noise/impedance/crosstalk measurements, and Monte-Carlo
//! mismatch studies.
//!
//! # Modules
//!
//! - `model` — unit-safe parameter and signal types shared by everything
//! - `stimuli` — TDM schedule, chopper phases, PI-PWM frames, electrode sources
//! - `impedance` — closed-form input-impedance model and IBL code trimming
//! - `servo` — DC servo loop state machine (SAR coarse search, fine PWM
//!   trimming, EPC quantizer, tracking)
//! - `engine` — event-driven transient simulator and measurement suite
//! - `montecarlo` — mismatch sampling and batch statistics
//!
//! The crate is `no_std`-compatible (`alloc` required); disable the default
//! `std` feature for embedded or sandboxed use. All randomness is
//! counter-based and keyed by explicit seeds, so every simulation is
//! bit-reproducible.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dsp;
pub mod engine;
pub mod error;
pub mod impedance;
mod math;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod servo;
pub mod stimuli;

pub use error::Error;
pub use model::{AfeParams, ChannelTrace, ElectrodeSource, NoiseSpec, TrimCodes};
pub use montecarlo::MismatchInstance;

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, Error>;
