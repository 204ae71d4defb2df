//! Core library for the ultrasound model-extraction workbench.
//!
//! The pipeline simulates RF data for two mismatched ultrasound machines,
//! trains a phantom classifier on the victim machine, estimates the
//! machine-to-machine spectral transfer function from calibration phantom
//! recordings, and uses iterative noisy-label training to clone the victim
//! classifier onto the perpetrator machine under a query budget.

pub mod blackbox;
pub mod calibration;
pub mod dsp;
pub mod error;
pub mod extraction;
pub mod harness;
pub mod model;
pub mod rfsim;
pub mod seeds;

pub use error::{Error, Result};
