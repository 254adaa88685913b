//! Adversarial synthesis of fixed-length time series.
//!
//! The crate trains recurrent/convolutional GANs on sine-wave and ECG
//! corpora, scores synthetic output with MMD² and dynamic time warping, and
//! audits membership leakage with a distance-threshold attack.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod gan;
pub mod layers;
pub mod metrics;
pub mod privacy;

pub use error::{Error, Result};
