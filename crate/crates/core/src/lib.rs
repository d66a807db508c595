//! Hierarchical glioma subtyping from trimodal MRI.
//!
//! The crate covers the whole pipeline: NIfTI and manifest I/O, a synthetic
//! cohort generator, preprocessing (resampling, rigid registration, mask
//! transfer, z-scoring), 2.5D ROI stacking with augmentation, a weight-shared
//! residual network with max fusion across slices, cross-validated training
//! of the four binary tasks, ROC metrics and composition of the binary
//! probabilities into five leaf subtypes.

pub mod cli;
pub mod config;
pub mod error;
pub mod hierarchy;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod nifti_io;
pub mod nn;
pub mod plot;
pub mod preprocess;
pub mod provenance;
pub mod roi;
pub mod split;
pub mod synth;
pub mod taxonomy;
pub mod train;
pub mod volume;

pub use error::{Error, Result};
