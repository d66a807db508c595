use crate::error::{Error, Result};
use crate::volume::Volume;

/// Z-scores intensities using the mean and standard deviation of the whole volume.
pub fn normalize_intensity(vol: &Volume) -> Result<Volume> {
    vol.validate()?;
    let (mean, std) = vol.mean_std();
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::ZeroVariance);
    }
    let voxels = vol
        .voxels
        .iter()
        .map(|&v| ((v as f64 - mean) / std) as f32)
        .collect();
    Ok(Volume {
        grid: vol.grid.clone(),
        voxels,
    })
}
