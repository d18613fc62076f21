//! Camera spectral sensitivity estimation and RGB-to-hyperspectral
//! reconstruction.
//!
//! The crate covers the whole pipeline: rendering RGB from radiance cubes,
//! generating and ingesting sensitivity functions, recovering a sensitivity
//! from an image (closed form and learned), reconstructing 31-band spectra
//! with generic, conditional and specialized networks, and scoring the
//! results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod metrics;
pub mod nets;
pub mod sensitivity;
pub mod spectral;

pub use error::{Error, Result};
pub use estimation::{FlattenedScene, LossWeights};
pub use sensitivity::{CameraSensitivitySet, GmmSensitivityParams, SmoothnessOperator};
pub use spectral::{RgbImage, SensitivityMatrix, SpectralCube, WavelengthGrid};
