//! Intensity-based rigid registration by normalized cross-correlation.
//!
//! The search runs over in-plane rotation and 3-D translation. A coarse
//! exhaustive grid is evaluated on a sparse subsample of the fixed image, then
//! a pattern search with halving steps refines the best candidate on denser
//! subsamples. Trilinear sampling is used while searching; the final
//! transform is applied with cubic interpolation by the caller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::interp::sample_linear;
use crate::preprocess::transform::RigidTransform;
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    /// Half-width of the coarse rotation grid, degrees.
    pub rotation_range_deg: f64,
    pub rotation_step_deg: f64,
    /// Half-width of the coarse in-plane translation grid, in fixed-image voxels.
    pub translation_range_vox: f64,
    pub translation_step_vox: f64,
    /// Half-width of the coarse through-plane translation grid, in slices.
    pub slice_range: f64,
    /// Refinement stops once steps fall below these.
    pub min_rotation_step_deg: f64,
    pub min_translation_step_vox: f64,
    /// In-plane subsampling strides for the coarse and refinement stages.
    pub coarse_stride: usize,
    pub fine_strides: Vec<usize>,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            rotation_range_deg: 10.0,
            rotation_step_deg: 5.0,
            translation_range_vox: 6.0,
            translation_step_vox: 2.0,
            slice_range: 1.0,
            min_rotation_step_deg: 0.1,
            min_translation_step_vox: 0.1,
            coarse_stride: 4,
            fine_strides: vec![2, 1],
        }
    }
}

/// Fixed-image sample points at one subsampling level.
struct Samples {
    world: Vec<[f64; 3]>,
    values: Vec<f64>,
}

impl Samples {
    fn new(fixed: &Volume, stride: usize) -> Self {
        let [nx, ny, nz] = fixed.grid.dims;
        let stride = stride.max(1);
        let mut world = Vec::new();
        let mut values = Vec::new();
        for z in 0..nz {
            for y in (0..ny).step_by(stride) {
                for x in (0..nx).step_by(stride) {
                    world.push(fixed.grid.voxel_to_world([x as f64, y as f64, z as f64]));
                    values.push(fixed.get(x, y, z) as f64);
                }
            }
        }
        Samples { world, values }
    }
}

/// NCC between the fixed samples and the moving image seen through `t`.
/// Returns -1 when less than half the samples overlap or the moving patch
/// is flat.
fn ncc(samples: &Samples, moving: &Volume, t: &RigidTransform) -> f64 {
    let dims = moving.grid.dims;
    let (mut n, mut sf, mut sm, mut sff, mut smm, mut sfm) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (w, &f) in samples.world.iter().zip(&samples.values) {
        let c = moving.grid.world_to_voxel(t.apply_point(*w));
        let inside = (0..3).all(|a| c[a] >= -0.5 && c[a] <= dims[a] as f64 - 0.5);
        if !inside {
            continue;
        }
        let m = sample_linear(moving, c);
        n += 1;
        sf += f;
        sm += m;
        sff += f * f;
        smm += m * m;
        sfm += f * m;
    }
    if n * 2 < samples.values.len() {
        return -1.0;
    }
    let nf = n as f64;
    let cov = sfm - sf * sm / nf;
    let vf = sff - sf * sf / nf;
    let vm = smm - sm * sm / nf;
    if vf <= 1e-12 || vm <= 1e-12 {
        return -1.0;
    }
    cov / (vf * vm).sqrt()
}

#[derive(Clone, Copy, Debug)]
struct Params {
    rot: f64,
    tx: f64,
    ty: f64,
    tz: f64,
}

/// Finds the in-plane rigid transform that best aligns `moving` to `fixed`.
pub fn register_rigid(moving: &Volume, fixed: &Volume) -> Result<RigidTransform> {
    register_rigid_with(moving, fixed, &RegistrationConfig::default())
}

pub fn register_rigid_with(
    moving: &Volume,
    fixed: &Volume,
    cfg: &RegistrationConfig,
) -> Result<RigidTransform> {
    moving.validate()?;
    fixed.validate()?;
    for v in [moving, fixed] {
        let (_, std) = v.mean_std();
        if std <= 1e-12 {
            return Err(Error::CorrelationPlateau);
        }
    }
    let center = fixed.grid.center_world();
    let sp = fixed.grid.spacing;
    let make = |p: Params| {
        RigidTransform::new(
            p.rot,
            [p.tx * sp[0], p.ty * sp[1], p.tz * sp[2]],
            center,
        )
    };

    // coarse exhaustive grid
    let coarse = Samples::new(fixed, cfg.coarse_stride);
    let steps = |range: f64, step: f64| -> Vec<f64> {
        if step <= 0.0 || range <= 0.0 {
            return vec![0.0];
        }
        let k = (range / step).floor() as i64;
        (-k..=k).map(|i| i as f64 * step).collect()
    };
    let rots = steps(cfg.rotation_range_deg, cfg.rotation_step_deg);
    let trans = steps(cfg.translation_range_vox, cfg.translation_step_vox);
    let slices = steps(cfg.slice_range, 1.0);
    let mut best = Params {
        rot: 0.0,
        tx: 0.0,
        ty: 0.0,
        tz: 0.0,
    };
    let mut best_score = ncc(&coarse, moving, &make(best));
    let (mut lo, mut hi) = (best_score, best_score);
    for &rot in &rots {
        for &tz in &slices {
            for &ty in &trans {
                for &tx in &trans {
                    let p = Params { rot, tx, ty, tz };
                    let s = ncc(&coarse, moving, &make(p));
                    lo = lo.min(s);
                    hi = hi.max(s);
                    if s > best_score {
                        best_score = s;
                        best = p;
                    }
                }
            }
        }
    }
    if hi - lo <= 1e-12 {
        return Err(Error::CorrelationPlateau);
    }

    // pattern search refinement, one pass per subsampling level
    for &stride in &cfg.fine_strides {
        let samples = Samples::new(fixed, stride);
        best_score = ncc(&samples, moving, &make(best));
        let mut rot_step = cfg.rotation_step_deg / 2.0;
        let mut trans_step = cfg.translation_step_vox / 2.0;
        while rot_step >= cfg.min_rotation_step_deg || trans_step >= cfg.min_translation_step_vox {
            let mut improved = true;
            while improved {
                improved = false;
                let mut candidates = Vec::with_capacity(8);
                for sign in [-1.0, 1.0] {
                    candidates.push(Params {
                        rot: best.rot + sign * rot_step,
                        ..best
                    });
                    candidates.push(Params {
                        tx: best.tx + sign * trans_step,
                        ..best
                    });
                    candidates.push(Params {
                        ty: best.ty + sign * trans_step,
                        ..best
                    });
                    candidates.push(Params {
                        tz: best.tz + sign * trans_step,
                        ..best
                    });
                }
                // stay within one coarse step of the searched window so weak
                // through-plane structure cannot drag the fit off the slab
                let in_window = |p: &Params| {
                    p.rot.abs() <= cfg.rotation_range_deg + cfg.rotation_step_deg
                        && p.tx.abs() <= cfg.translation_range_vox + cfg.translation_step_vox
                        && p.ty.abs() <= cfg.translation_range_vox + cfg.translation_step_vox
                        && p.tz.abs() <= cfg.slice_range
                };
                for p in candidates.into_iter().filter(in_window) {
                    let s = ncc(&samples, moving, &make(p));
                    if s > best_score + 1e-12 {
                        best_score = s;
                        best = p;
                        improved = true;
                    }
                }
            }
            rot_step /= 2.0;
            trans_step /= 2.0;
        }
    }
    Ok(make(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::transform::resample_into;
    use crate::preprocess::interp::Interpolation;
    use crate::volume::Grid;

    /// Smooth asymmetric phantom: head ellipse plus an off-centre blob.
    pub(crate) fn phantom(grid: Grid) -> Volume {
        let c = grid.center_world();
        let g = grid.clone();
        Volume::from_fn(grid, move |x, y, z| {
            let w = g.voxel_to_world([x as f64, y as f64, z as f64]);
            let (dx, dy, dz) = (w[0] - c[0], w[1] - c[1], w[2] - c[2]);
            let head = 1.0 / (1.0 + (((dx / 16.0).powi(2) + (dy / 12.0).powi(2)).sqrt() - 1.0).mul_add(8.0, 0.0).exp());
            let blob = 2.0 * (-((dx - 6.0).powi(2) + (dy + 4.0).powi(2)) / 18.0 - (dz / 12.0).powi(2)).exp();
            let bar = if dy > 2.0 && dy < 5.0 && dx.abs() < 8.0 { 0.7 } else { 0.0 };
            (head + blob + bar) as f32
        })
    }

    fn grid() -> Grid {
        Grid::new([48, 48, 9], [1.0, 1.0, 5.0])
    }

    #[test]
    fn identical_images_give_identity() {
        let fixed = phantom(grid());
        let t = register_rigid(&fixed, &fixed).unwrap();
        assert_eq!(t.rotation_deg, 0.0);
        assert_eq!(t.translation_mm, [0.0; 3]);
    }

    #[test]
    fn recovers_voxel_shift() {
        let fixed = phantom(grid());
        // moving content displaced by (+3, +4, 0) voxels
        let shift = RigidTransform::new(0.0, [-3.0, -4.0, 0.0], fixed.grid.center_world());
        let moving = resample_into(&fixed, &shift, &fixed.grid, Interpolation::Cubic);
        let t = register_rigid(&moving, &fixed).unwrap();
        assert!((t.translation_mm[0] - 3.0).abs() <= 1.0, "{t:?}");
        assert!((t.translation_mm[1] - 4.0).abs() <= 1.0, "{t:?}");
        assert!(t.translation_mm[2].abs() <= 5.0, "{t:?}");
    }

    #[test]
    fn recovers_in_plane_rotation() {
        let fixed = phantom(grid());
        let rot = RigidTransform::new(-5.0, [0.0; 3], fixed.grid.center_world());
        let moving = resample_into(&fixed, &rot, &fixed.grid, Interpolation::Cubic);
        let t = register_rigid(&moving, &fixed).unwrap();
        assert!((t.rotation_deg - 5.0).abs() <= 1.0, "{t:?}");
    }

    #[test]
    fn constant_image_is_a_plateau() {
        let flat = Volume::filled(grid(), 3.0);
        let fixed = phantom(grid());
        assert!(matches!(register_rigid(&flat, &fixed), Err(Error::CorrelationPlateau)));
        assert!(matches!(register_rigid(&fixed, &flat), Err(Error::CorrelationPlateau)));
    }
}
