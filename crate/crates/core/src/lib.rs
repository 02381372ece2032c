//! Speech enhancement with recurrent-convolutional feature extraction.
//!
//! The crate bundles a small reverse-mode differentiation engine
//! ([`tensor`]), the STFT log-power feature pipeline ([`dsp`]), the three
//! model families ([`model`]), training and enhancement ([`train`]) and
//! objective metrics ([`metrics`]).

pub mod dsp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
