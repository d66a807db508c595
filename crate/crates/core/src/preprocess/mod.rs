//! Image preprocessing: resampling to a common spacing, rigid registration of
//! T1w and T1CE onto T2w, tumor-mask transfer and intensity normalization.
//! No bias-field correction is applied.

mod interp;
mod normalize;
mod pipeline;
mod register;
mod resample;
mod transform;

pub use interp::{sample, sample_bilinear_2d, sample_cubic, sample_linear, Interpolation};
pub use normalize::normalize_intensity;
pub use pipeline::{
    preprocess_manifest, preprocess_patient, PatientProvenance, PipelineStage, PreprocessConfig,
    PreprocessedPatient, RegistrationMode, PIPELINE_STAGES,
};
pub use register::{register_rigid, register_rigid_with, RegistrationConfig};
pub use resample::{output_len, resample_mask, resample_volume};
pub use transform::{
    apply_transform_mask, apply_transform_volume, mask_into, normalize_degrees, resample_into,
    RigidTransform,
};
