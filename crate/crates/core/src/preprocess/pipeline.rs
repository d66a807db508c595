use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, Modality, PatientRecord, Stage};
use crate::nifti_io;
use crate::preprocess::interp::Interpolation;
use crate::preprocess::normalize::normalize_intensity;
use crate::preprocess::register::{register_rigid_with, RegistrationConfig};
use crate::preprocess::resample::{resample_mask, resample_volume};
use crate::preprocess::transform::{mask_into, resample_into, RigidTransform};
use crate::provenance;
use crate::volume::{TumorMask, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrationMode {
    InPlaneRigid,
    /// Inputs are already co-registered; only grids are unified.
    Bypass,
}

impl std::str::FromStr for RegistrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_plane_rigid" => Ok(RegistrationMode::InPlaneRigid),
            "bypass" => Ok(RegistrationMode::Bypass),
            other => Err(Error::Config(format!(
                "unknown registration mode `{other}` (expected in_plane_rigid or bypass)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Millimetres per voxel along x, y, z.
    pub target_spacing: [f64; 3],
    /// Interpolation for intensity volumes; masks always use nearest neighbour.
    pub interpolation: Interpolation,
    pub registration: RegistrationMode,
    pub search: RegistrationConfig,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_spacing: [0.34, 0.34, 5.0],
            interpolation: Interpolation::Cubic,
            registration: RegistrationMode::InPlaneRigid,
            search: RegistrationConfig::default(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self
            .target_spacing
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::Config(format!(
                "target spacing must be positive, got {:?}",
                self.target_spacing
            )));
        }
        if self.interpolation == Interpolation::Nearest {
            return Err(Error::Config(
                "intensity volumes need linear or cubic interpolation".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Resample,
    Register,
    MaskTransfer,
    Normalize,
}

/// The complete, ordered preprocessing graph.
pub const PIPELINE_STAGES: [PipelineStage; 4] = [
    PipelineStage::Resample,
    PipelineStage::Register,
    PipelineStage::MaskTransfer,
    PipelineStage::Normalize,
];

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedPatient {
    /// T1w, T1CE, T2w on the common (resampled T2w) grid.
    pub volumes: [Volume; 3],
    pub mask: TumorMask,
    /// Transforms that map T2w space into T1w and T1CE space respectively.
    pub transforms: [RigidTransform; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProvenance {
    pub id: String,
    pub stages: Vec<PipelineStage>,
    pub config_hash: String,
    pub t1w_to_t2w: RigidTransform,
    pub t1ce_to_t2w: RigidTransform,
    pub grid_dims: [usize; 3],
    pub spacing: [f64; 3],
}

/// Runs resample → register → mask transfer → normalize for one patient.
/// `volumes` are in [`Modality::ALL`] order and `mask` lives on the T2w grid.
pub fn preprocess_patient(
    volumes: [Volume; 3],
    mask: TumorMask,
    cfg: &PreprocessConfig,
) -> Result<PreprocessedPatient> {
    cfg.validate()?;
    let mut resampled = Vec::with_capacity(3);
    for v in &volumes {
        resampled.push(resample_volume(v, cfg.target_spacing, cfg.interpolation)?);
    }
    let mask = resample_mask(&mask, cfg.target_spacing)?;

    let fixed = resampled.pop().expect("three volumes");
    let mut transforms = [RigidTransform::identity(); 2];
    let mut registered = Vec::with_capacity(3);
    for (slot, moving) in resampled.iter().enumerate() {
        let t = match cfg.registration {
            RegistrationMode::InPlaneRigid => register_rigid_with(moving, &fixed, &cfg.search)?,
            RegistrationMode::Bypass => RigidTransform::identity(),
        };
        transforms[slot] = t;
        registered.push(resample_into(moving, &t, &fixed.grid, cfg.interpolation));
    }
    registered.push(fixed);

    // the mask was drawn on T2w, which is now the shared grid of all modalities
    let fixed_grid = &registered[2].grid;
    let mask = if mask.grid.same_lattice(fixed_grid) {
        TumorMask {
            grid: fixed_grid.clone(),
            voxels: mask.voxels,
        }
    } else {
        let voxels = mask_into(&mask, &RigidTransform::identity(), fixed_grid);
        TumorMask::new(fixed_grid.clone(), voxels)
            .map_err(|_| Error::EmptyMask(" after transfer onto the T2w grid".into()))?
    };

    let mut normalized = Vec::with_capacity(3);
    for v in &registered {
        normalized.push(normalize_intensity(v)?);
    }
    let volumes: [Volume; 3] = normalized.try_into().expect("three volumes");
    Ok(PreprocessedPatient {
        volumes,
        mask,
        transforms,
    })
}

fn read_patient(r: &PatientRecord) -> Result<([Volume; 3], TumorMask)> {
    let mut vols = Vec::with_capacity(3);
    for m in Modality::ALL {
        vols.push(nifti_io::read_volume(r.volume_path(m))?);
    }
    let mask = nifti_io::read_mask(&r.mask_path)?;
    Ok((vols.try_into().expect("three volumes"), mask))
}

/// Preprocesses every patient of `manifest` into `out_dir`, writing
/// `<id>/{t1w,t1ce,t2w,mask}.nii.gz` plus a per-patient `preprocess.json`
/// provenance record. Returns the manifest of the written files.
pub fn preprocess_manifest(
    manifest: &DatasetManifest,
    out_dir: &Path,
    cfg: &PreprocessConfig,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    let hash = provenance::hash_json(cfg);
    let mut out = DatasetManifest {
        stage: Stage::Preprocessed,
        records: Vec::with_capacity(manifest.records.len()),
        split: manifest.split.clone(),
    };
    for r in &manifest.records {
        let (vols, mask) = read_patient(r)?;
        let p = preprocess_patient(vols, mask, cfg)?;
        let dir = out_dir.join(&r.id);
        let mut paths = Vec::with_capacity(3);
        for (m, v) in Modality::ALL.iter().zip(&p.volumes) {
            let path = dir.join(format!("{}.nii.gz", m.key()));
            nifti_io::write_volume(&path, v)?;
            paths.push(path);
        }
        let mask_path = dir.join("mask.nii.gz");
        nifti_io::write_mask(&mask_path, &p.mask)?;
        let prov = PatientProvenance {
            id: r.id.clone(),
            stages: PIPELINE_STAGES.to_vec(),
            config_hash: hash.clone(),
            t1w_to_t2w: p.transforms[0],
            t1ce_to_t2w: p.transforms[1],
            grid_dims: p.mask.grid.dims,
            spacing: p.mask.grid.spacing,
        };
        provenance::write_json(&dir.join("preprocess.json"), &prov)?;
        out.records.push(PatientRecord {
            volume_paths: paths.try_into().expect("three volumes"),
            mask_path,
            ..r.clone()
        });
    }
    Ok(out)
}
