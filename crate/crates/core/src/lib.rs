//! EMG and IMU hand-gesture recognition pipeline.

pub mod classify;
pub mod dsp;
pub mod error;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod quality;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
