//! Biophysical skin decomposition for multispectral images.
//!
//! A two-layer skin model predicts radiance from shading and two chromophore
//! fractions; [`fitter`] inverts it per pixel, [`segmenter`] classifies skin,
//! [`editor`] changes the parameter maps and [`renderer`] turns the result
//! back into sRGB.

pub mod cube;
pub mod editor;
pub mod envi;
pub mod error;
pub mod fitter;
pub mod forward;
pub mod maps;
pub mod renderer;
pub mod segmenter;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
