//! NIfTI-1 reading and writing for volumes and masks (`.nii` or `.nii.gz`).

use std::path::Path;

use ndarray::{Array3, ShapeBuilder};
use nifti::writer::WriterOptions;
use nifti::{IntoNdArray, NiftiHeader, NiftiObject, ReaderOptions};

use crate::error::{Error, Result};
use crate::volume::{Grid, TumorMask, Volume};

fn unreadable(path: &Path, reason: impl ToString) -> Error {
    Error::UnreadableVolume {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Reads only the header and returns the voxel grid it describes.
pub fn read_grid(path: &Path) -> Result<Grid> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let header = NiftiHeader::from_file(path).map_err(|e| unreadable(path, e))?;
    grid_from_header(&header).map_err(|e| unreadable(path, e))
}

fn grid_from_header(h: &NiftiHeader) -> std::result::Result<Grid, String> {
    let dim = h.dim().map_err(|e| e.to_string())?;
    if dim.len() < 3 || dim.iter().skip(3).any(|&d| d != 1) {
        return Err(format!("expected a 3-D volume, got dims {dim:?}"));
    }
    let dims = [dim[0] as usize, dim[1] as usize, dim[2] as usize];
    let spacing = [
        h.pixdim[1].abs() as f64,
        h.pixdim[2].abs() as f64,
        h.pixdim[3].abs() as f64,
    ];
    let (axes, origin) = if h.sform_code > 0 {
        let rows = [h.srow_x, h.srow_y, h.srow_z];
        let mut axes = [[0.0; 3]; 3];
        for col in 0..3 {
            let norm = (0..3)
                .map(|r| (rows[r][col] as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return Err("degenerate sform".into());
            }
            for r in 0..3 {
                axes[r][col] = rows[r][col] as f64 / norm;
            }
        }
        (
            axes,
            [rows[0][3] as f64, rows[1][3] as f64, rows[2][3] as f64],
        )
    } else if h.qform_code > 0 {
        let (b, c, d) = (h.quatern_b as f64, h.quatern_c as f64, h.quatern_d as f64);
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let qfac = if h.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let mut axes = [
            [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
            [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
            [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
        ];
        for row in axes.iter_mut() {
            row[2] *= qfac;
        }
        (
            axes,
            [
                h.quatern_x as f64,
                h.quatern_y as f64,
                h.quatern_z as f64,
            ],
        )
    } else {
        (crate::volume::IDENTITY_AXES, [0.0; 3])
    };
    let grid = Grid {
        dims,
        spacing,
        origin,
        axes,
    };
    grid.validate().map_err(|e| e.to_string())?;
    Ok(grid)
}

fn header_for(grid: &Grid) -> NiftiHeader {
    let mut h = NiftiHeader::default();
    h.pixdim = [
        1.0,
        grid.spacing[0] as f32,
        grid.spacing[1] as f32,
        grid.spacing[2] as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    // millimetres, seconds
    h.xyzt_units = 2 | 8;
    h.qform_code = 0;
    h.sform_code = 1;
    let row = |r: usize| -> [f32; 4] {
        [
            (grid.axes[r][0] * grid.spacing[0]) as f32,
            (grid.axes[r][1] * grid.spacing[1]) as f32,
            (grid.axes[r][2] * grid.spacing[2]) as f32,
            grid.origin[r] as f32,
        ]
    };
    h.srow_x = row(0);
    h.srow_y = row(1);
    h.srow_z = row(2);
    h
}

fn read_array(path: &Path) -> Result<(Grid, ndarray::ArrayD<f32>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let obj = ReaderOptions::new()
        .read_file(path)
        .map_err(|e| unreadable(path, e))?;
    let grid = grid_from_header(obj.header()).map_err(|e| unreadable(path, e))?;
    let arr = obj
        .into_volume()
        .into_ndarray::<f32>()
        .map_err(|e| unreadable(path, e))?;
    if arr.shape() != grid.dims {
        return Err(unreadable(path, format!("array shape {:?} does not match header", arr.shape())));
    }
    Ok((grid, arr))
}

fn flatten(grid: &Grid, arr: &ndarray::ArrayD<f32>) -> Vec<f32> {
    let [nx, ny, nz] = grid.dims;
    let mut out = Vec::with_capacity(grid.len());
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                out.push(arr[[x, y, z]]);
            }
        }
    }
    out
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let (grid, arr) = read_array(path)?;
    let voxels = flatten(&grid, &arr);
    Volume::new(grid, voxels).map_err(|e| unreadable(path, e))
}

pub fn read_mask(path: &Path) -> Result<TumorMask> {
    let (grid, arr) = read_array(path)?;
    let voxels = flatten(&grid, &arr)
        .into_iter()
        .map(|v| u8::from(v != 0.0))
        .collect();
    TumorMask::new(grid, voxels).map_err(|e| match e {
        Error::EmptyMask(_) => Error::EmptyMask(format!(" in {}", path.display())),
        other => unreadable(path, other),
    })
}

fn write_array<T: nifti::DataElement + bytemuck::Pod>(
    path: &Path,
    grid: &Grid,
    voxels: Vec<T>,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let [nx, ny, nz] = grid.dims;
    let arr = Array3::from_shape_vec((nx, ny, nz).f(), voxels)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let header = header_for(grid);
    WriterOptions::new(path)
        .reference_header(&header)
        .write_nifti(&arr)
        .map_err(|e| match e {
            nifti::NiftiError::Io(io) => Error::io(path, io),
            other => unreadable(path, other),
        })
}

pub fn write_volume(path: &Path, vol: &Volume) -> Result<()> {
    write_array(path, &vol.grid, vol.voxels.clone())
}

pub fn write_mask(path: &Path, mask: &TumorMask) -> Result<()> {
    write_array(path, &mask.grid, mask.voxels.clone())
}
