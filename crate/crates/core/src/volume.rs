//! Voxel grids, intensity volumes and binary tumor masks.
//!
//! Voxels are stored x-fastest (`x + nx * (y + ny * z)`), the same order as
//! NIfTI files. The z axis is the slice axis; within a slice, `y` indexes rows
//! and `x` indexes columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement of a voxel grid in scanner space (millimetres).
///
/// World position of voxel `i` is `origin + axes · (i ⊙ spacing)`, where
/// `axes` holds the unit direction of each grid axis as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub axes: [[f64; 3]; 3],
}

pub const IDENTITY_AXES: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        Grid {
            dims,
            spacing,
            origin: [0.0; 3],
            axes: IDENTITY_AXES,
        }
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Invalid("voxel grid is empty".into()));
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Invalid(format!(
                "voxel spacing must be strictly positive, got {:?}",
                self.spacing
            )));
        }
        Ok(())
    }

    /// Continuous voxel coordinate to world coordinate.
    pub fn voxel_to_world(&self, v: [f64; 3]) -> [f64; 3] {
        let mut w = self.origin;
        for axis in 0..3 {
            let d = v[axis] * self.spacing[axis];
            for row in 0..3 {
                w[row] += self.axes[row][axis] * d;
            }
        }
        w
    }

    /// World coordinate to continuous voxel coordinate (axes are orthonormal).
    pub fn world_to_voxel(&self, w: [f64; 3]) -> [f64; 3] {
        let rel = [
            w[0] - self.origin[0],
            w[1] - self.origin[1],
            w[2] - self.origin[2],
        ];
        let mut v = [0.0; 3];
        for axis in 0..3 {
            let proj: f64 = (0..3).map(|row| self.axes[row][axis] * rel[row]).sum();
            v[axis] = proj / self.spacing[axis];
        }
        v
    }

    /// World coordinate of the centre of the field of view.
    pub fn center_world(&self) -> [f64; 3] {
        self.voxel_to_world([
            (self.dims[0] as f64 - 1.0) / 2.0,
            (self.dims[1] as f64 - 1.0) / 2.0,
            (self.dims[2] as f64 - 1.0) / 2.0,
        ])
    }

    pub fn same_lattice(&self, other: &Grid) -> bool {
        const TOL: f64 = 1e-4;
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(&other.spacing)
                .all(|(a, b)| (a - b).abs() <= TOL)
            && self
                .origin
                .iter()
                .zip(&other.origin)
                .all(|(a, b)| (a - b).abs() <= TOL)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: Grid,
    pub voxels: Vec<f32>,
}

impl Volume {
    pub fn new(grid: Grid, voxels: Vec<f32>) -> Result<Self> {
        let vol = Volume { grid, voxels };
        vol.validate()?;
        Ok(vol)
    }

    pub fn filled(grid: Grid, value: f32) -> Self {
        let n = grid.len();
        Volume {
            grid,
            voxels: vec![value; n],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let [nx, ny, nz] = grid.dims;
        let mut voxels = Vec::with_capacity(grid.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    voxels.push(f(x, y, z));
                }
            }
        }
        Volume { grid, voxels }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.voxels.len() != self.grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "volume has {} voxels but grid {:?} needs {}",
                self.voxels.len(),
                self.grid.dims,
                self.grid.len()
            )));
        }
        if self.voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume voxels".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.grid.index(x, y, z)]
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.grid.slice_len();
        &self.voxels[z * n..(z + 1) * n]
    }

    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.voxels.len() as f64;
        let mean = self.voxels.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = self
            .voxels
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.voxels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TumorMask {
    pub grid: Grid,
    pub voxels: Vec<u8>,
}

impl TumorMask {
    /// Builds a mask, binarizing nonzero input and rejecting empty masks.
    pub fn new(grid: Grid, voxels: Vec<u8>) -> Result<Self> {
        grid.validate()?;
        if voxels.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} voxels but grid {:?} needs {}",
                voxels.len(),
                grid.dims,
                grid.len()
            )));
        }
        let voxels: Vec<u8> = voxels.into_iter().map(|v| u8::from(v != 0)).collect();
        let mask = TumorMask { grid, voxels };
        if mask.count() == 0 {
            return Err(Error::EmptyMask(String::new()));
        }
        Ok(mask)
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> bool) -> Result<Self> {
        let [nx, ny, nz] = grid.dims;
        let mut voxels = Vec::with_capacity(grid.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    voxels.push(u8::from(f(x, y, z)));
                }
            }
        }
        TumorMask::new(grid, voxels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.voxels[self.grid.index(x, y, z)] != 0
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v != 0).count()
    }

    pub fn slice(&self, z: usize) -> &[u8] {
        let n = self.grid.slice_len();
        &self.voxels[z * n..(z + 1) * n]
    }

    /// Physical lesion volume in mm³.
    pub fn physical_volume(&self) -> f64 {
        self.count() as f64 * self.grid.spacing.iter().product::<f64>()
    }
}
