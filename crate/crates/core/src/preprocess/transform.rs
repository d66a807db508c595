use serde::{Deserialize, Serialize};

use crate::preprocess::interp::{sample, Interpolation};
use crate::volume::{Grid, TumorMask, Volume};

/// In-plane rigid motion: rotation about the scanner z axis through `center`,
/// followed by a 3-D translation. Maps a point of the fixed (reference) image
/// to the corresponding point of the moving image:
/// `T(p) = R(p - center) + center + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Degrees, normalized into [-180, 180).
    pub rotation_deg: f64,
    pub translation_mm: [f64; 3],
    pub center_mm: [f64; 3],
}

pub fn normalize_degrees(deg: f64) -> f64 {
    let r = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if r >= 180.0 {
        r - 360.0
    } else {
        r
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation_deg: 0.0,
            translation_mm: [0.0; 3],
            center_mm: [0.0; 3],
        }
    }

    pub fn new(rotation_deg: f64, translation_mm: [f64; 3], center_mm: [f64; 3]) -> Self {
        RigidTransform {
            rotation_deg: normalize_degrees(rotation_deg),
            translation_mm,
            center_mm,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation_deg == 0.0 && self.translation_mm == [0.0; 3]
    }

    fn rotate(deg: f64, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = deg.to_radians().sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    pub fn apply_point(&self, p: [f64; 3]) -> [f64; 3] {
        let c = self.center_mm;
        let r = Self::rotate(self.rotation_deg, [p[0] - c[0], p[1] - c[1]]);
        [
            r[0] + c[0] + self.translation_mm[0],
            r[1] + c[1] + self.translation_mm[1],
            p[2] + self.translation_mm[2],
        ]
    }

    pub fn inverse(&self) -> Self {
        let t = self.translation_mm;
        let r = Self::rotate(-self.rotation_deg, [t[0], t[1]]);
        RigidTransform::new(-self.rotation_deg, [-r[0], -r[1], -t[2]], self.center_mm)
    }

    /// `self.then(other)` maps `p` to `other(self(p))`, expressed about `self`'s centre.
    pub fn then(&self, other: &RigidTransform) -> Self {
        let c1 = self.center_mm;
        let c2 = other.center_mm;
        let t1 = self.translation_mm;
        let d = [c1[0] + t1[0] - c2[0], c1[1] + t1[1] - c2[1]];
        let rd = Self::rotate(other.rotation_deg, d);
        let t2 = other.translation_mm;
        RigidTransform::new(
            self.rotation_deg + other.rotation_deg,
            [
                rd[0] + c2[0] + t2[0] - c1[0],
                rd[1] + c2[1] + t2[1] - c1[1],
                t1[2] + t2[2],
            ],
            c1,
        )
    }
}

/// Samples `vol` through `t` at every voxel of `reference`.
pub fn resample_into(
    vol: &Volume,
    t: &RigidTransform,
    reference: &Grid,
    method: Interpolation,
) -> Volume {
    if t.is_identity() && vol.grid == *reference {
        return vol.clone();
    }
    let [nx, ny, nz] = reference.dims;
    let mut voxels = Vec::with_capacity(reference.len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let w = reference.voxel_to_world([x as f64, y as f64, z as f64]);
                let c = vol.grid.world_to_voxel(t.apply_point(w));
                voxels.push(sample(vol, c, method) as f32);
            }
        }
    }
    Volume {
        grid: reference.clone(),
        voxels,
    }
}

/// Nearest-neighbour mask transfer onto `reference`. Points falling outside
/// the source mask's field of view are background.
pub fn mask_into(mask: &TumorMask, t: &RigidTransform, reference: &Grid) -> Vec<u8> {
    if t.is_identity() && mask.grid == *reference {
        return mask.voxels.clone();
    }
    let [nx, ny, nz] = reference.dims;
    let dims = mask.grid.dims;
    let mut voxels = Vec::with_capacity(reference.len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let w = reference.voxel_to_world([x as f64, y as f64, z as f64]);
                let c = mask.grid.world_to_voxel(t.apply_point(w));
                let mut idx = [0usize; 3];
                let mut inside = true;
                for a in 0..3 {
                    let i = (c[a] + 0.5).floor();
                    if i < 0.0 || i >= dims[a] as f64 {
                        inside = false;
                        break;
                    }
                    idx[a] = i as usize;
                }
                voxels.push(if inside {
                    mask.voxels[mask.grid.index(idx[0], idx[1], idx[2])]
                } else {
                    0
                });
            }
        }
    }
    voxels
}

/// Resamples a volume through `t` on its own grid (cubic interpolation).
pub fn apply_transform_volume(vol: &Volume, t: &RigidTransform) -> Volume {
    resample_into(vol, t, &vol.grid, Interpolation::Cubic)
}

/// Resamples a mask through `t` on its own grid (nearest neighbour). Returns
/// `None` when the lesion leaves the field of view entirely.
pub fn apply_transform_mask(mask: &TumorMask, t: &RigidTransform) -> Option<TumorMask> {
    TumorMask::new(mask.grid.clone(), mask_into(mask, t, &mask.grid)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blob(grid: Grid) -> Volume {
        let c = grid.center_world();
        let g = grid.clone();
        Volume::from_fn(grid, move |x, y, z| {
            let w = g.voxel_to_world([x as f64, y as f64, z as f64]);
            let d2 = ((w[0] - c[0] - 2.0) / 7.0).powi(2)
                + ((w[1] - c[1] + 1.0) / 5.0).powi(2)
                + ((w[2] - c[2]) / 12.0).powi(2);
            (10.0 * (-d2).exp()) as f32
        })
    }

    #[test]
    fn identity_is_exact() {
        let grid = Grid::new([10, 9, 4], [1.0, 1.0, 5.0]);
        let mask = TumorMask::from_fn(grid.clone(), |x, y, _| x > 3 && y < 5).unwrap();
        let id = RigidTransform::identity();
        assert_eq!(apply_transform_mask(&mask, &id).unwrap(), mask);
        let vol = blob(grid);
        assert_eq!(apply_transform_volume(&vol, &id), vol);
    }

    #[test]
    fn integer_voxel_translation_is_an_exact_shift() {
        let grid = Grid::new([12, 10, 5], [0.5, 0.5, 5.0]);
        let vol = Volume::from_fn(grid, |x, y, z| (x * 3 + y * 5 + z * 7) as f32);
        // sample 2 voxels further along x and one slice up
        let t = RigidTransform::new(0.0, [1.0, 0.0, 5.0], [0.0; 3]);
        let out = apply_transform_volume(&vol, &t);
        for z in 0..4 {
            for y in 0..10 {
                for x in 0..10 {
                    assert_eq!(out.get(x, y, z), vol.get(x + 2, y, z + 1));
                }
            }
        }
    }

    #[test]
    fn round_trip_through_inverse() {
        let grid = Grid::new([48, 48, 12], [0.8, 0.8, 5.0]);
        let vol = blob(grid.clone());
        let c = grid.center_world();
        let t = RigidTransform::new(7.0, [1.3, -0.9, 0.0], c);
        let back = apply_transform_volume(&apply_transform_volume(&vol, &t), &t.inverse());
        let (lo, hi) = vol.min_max();
        let tol = 1e-3 * (hi - lo) as f64;
        for z in 2..10 {
            for y in 10..38 {
                for x in 10..38 {
                    let d = (back.get(x, y, z) - vol.get(x, y, z)).abs() as f64;
                    assert!(d <= tol, "({x},{y},{z}) deviates by {d}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn compose_and_invert(rot in -170.0f64..170.0, tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
                              rot2 in -20.0f64..20.0, px in -20.0f64..20.0, py in -20.0f64..20.0) {
            let a = RigidTransform::new(rot, [tx, ty, tz], [3.0, -2.0, 1.0]);
            let b = RigidTransform::new(rot2, [ty, tz, tx], [-1.0, 4.0, 0.0]);
            let p = [px, py, 2.5];
            let via = b.apply_point(a.apply_point(p));
            let composed = a.then(&b).apply_point(p);
            let back = a.inverse().apply_point(a.apply_point(p));
            for i in 0..3 {
                prop_assert!((via[i] - composed[i]).abs() < 1e-9);
                prop_assert!((back[i] - p[i]).abs() < 1e-9);
            }
            prop_assert!((-180.0..180.0).contains(&a.then(&b).rotation_deg));
        }
    }
}
