//! Non-local means filtering for images corrupted by Poisson noise.
//!
//! The crate provides the image model and Poisson sampler, patch kernels,
//! true and estimated patch similarities, oracle and adaptive weighted
//! estimators, the two-step whole-image filter, quality metrics, the
//! theoretical rate constants with a Monte-Carlo experiment harness, and
//! file I/O plus a command-line driver.

pub mod cli;
pub mod config;
mod engine;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod image;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod phantoms;
pub mod pipeline;
pub mod poisson;
pub mod similarity;
pub mod theory;

pub use error::{Error, Result};
pub use image::{CountImage, Image, IntensityImage, Offset, Pixel, PixelGrid, WindowSpec};
pub use kernels::KernelChoice;
pub use pipeline::{denoise, nlmpf_step1, nlmpf_step2, FilterConfig, Variant};
