//! Photon-pair generation by spontaneous four-wave mixing in slow-light
//! waveguides: device model, pair-number statistics, gated coincidence
//! counting, Monte Carlo simulation, and spatial multiplexing.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod detection;
pub mod error;
pub mod montecarlo;
pub mod multiplexing;
pub mod numeric;
pub mod pair_statistics;
pub mod presets;
pub mod rng;
pub mod waveguide;

pub use error::{Error, Result};
