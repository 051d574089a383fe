//! Almost-balanced weak-value parameter estimation.
//!
//! The exact two-port detection model and its Fisher information
//! ([`model`]), seeded event and waveform samplers ([`sampler`]), moment and
//! histogram-fit estimators ([`estimators`]), the rotating half-wave plate
//! ([`optics`]) and a Monte Carlo harness ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod fit;
pub mod harness;
pub mod model;
pub mod optics;
pub mod sampler;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/optics.md")]
    mod optics {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
