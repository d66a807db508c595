use crate::error::{Error, Result};
use crate::preprocess::interp::{cubic_weights, nearest_index, Interpolation};
use crate::volume::{Grid, TumorMask, Volume};

const SAME_SPACING_TOL: f64 = 1e-6;

/// Source coordinate (in input voxels) for each output voxel along one axis.
/// The fields of view are aligned at their outer edges.
fn axis_coords(n_in: usize, s_in: f64, s_out: f64) -> Vec<f64> {
    let n_out = output_len(n_in, s_in, s_out);
    let ratio = s_out / s_in;
    if (ratio - 1.0).abs() <= SAME_SPACING_TOL && n_out == n_in {
        return (0..n_out).map(|i| i as f64).collect();
    }
    (0..n_out).map(|i| (i as f64 + 0.5) * ratio - 0.5).collect()
}

pub fn output_len(n_in: usize, s_in: f64, s_out: f64) -> usize {
    ((n_in as f64 * s_in / s_out).round() as usize).max(1)
}

fn target_grid(grid: &Grid, target: [f64; 3], coords: &[Vec<f64>; 3]) -> Grid {
    let first = [coords[0][0], coords[1][0], coords[2][0]];
    Grid {
        dims: [coords[0].len(), coords[1].len(), coords[2].len()],
        spacing: target,
        origin: grid.voxel_to_world(first),
        axes: grid.axes,
    }
}

fn check_input(grid: &Grid, target: [f64; 3]) -> Result<()> {
    grid.validate()?;
    if target.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Invalid(format!(
            "target spacing must be strictly positive, got {target:?}"
        )));
    }
    if let Some(axis) = grid.dims.iter().position(|&d| d < 2) {
        return Err(Error::DegenerateAxis {
            axis,
            len: grid.dims[axis],
        });
    }
    Ok(())
}

/// One separable pass along `axis`, producing `coords.len()` samples per line.
fn pass(
    data: &[f64],
    dims: [usize; 3],
    axis: usize,
    coords: &[f64],
    method: Interpolation,
) -> (Vec<f64>, [usize; 3]) {
    let mut out_dims = dims;
    out_dims[axis] = coords.len();
    let n = dims[axis] as i64;
    let stride_in = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let stride_out = match axis {
        0 => 1,
        1 => out_dims[0],
        _ => out_dims[0] * out_dims[1],
    };
    // precompute taps per output coordinate
    let taps: Vec<Vec<(usize, f64)>> = coords
        .iter()
        .map(|&c| match method {
            Interpolation::Nearest => vec![(nearest_index(c, dims[axis]), 1.0)],
            Interpolation::Linear => {
                let f = c.floor();
                let t = c - f;
                let i = f as i64;
                let mut v = vec![((i.clamp(0, n - 1)) as usize, 1.0 - t)];
                if t != 0.0 {
                    v.push((((i + 1).clamp(0, n - 1)) as usize, t));
                }
                v
            }
            Interpolation::Cubic => {
                let r = c.round();
                let (i, t) = if (c - r).abs() < 1e-9 {
                    (r as i64, 0.0)
                } else {
                    (c.floor() as i64, c - c.floor())
                };
                cubic_weights(t)
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(k, &w)| (((i - 1 + k as i64).clamp(0, n - 1)) as usize, w))
                    .collect()
            }
        })
        .collect();

    let total: usize = out_dims.iter().product();
    let mut out = vec![0.0; total];
    // iterate over all lines orthogonal to `axis`
    let (outer_a, outer_b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    for b in 0..dims[outer_b] {
        for a in 0..dims[outer_a] {
            let mut pos_in = [0usize; 3];
            pos_in[outer_a] = a;
            pos_in[outer_b] = b;
            let base_in = pos_in[0] + dims[0] * (pos_in[1] + dims[1] * pos_in[2]);
            let base_out = pos_in[0] + out_dims[0] * (pos_in[1] + out_dims[1] * pos_in[2]);
            for (o, tap) in taps.iter().enumerate() {
                let mut acc = 0.0;
                for &(i, w) in tap {
                    acc += w * data[base_in + i * stride_in];
                }
                out[base_out + o * stride_out] = acc;
            }
        }
    }
    (out, out_dims)
}

fn resample_separable(
    voxels: Vec<f64>,
    grid: &Grid,
    target: [f64; 3],
    method: Interpolation,
) -> (Vec<f64>, Grid) {
    let coords = [
        axis_coords(grid.dims[0], grid.spacing[0], target[0]),
        axis_coords(grid.dims[1], grid.spacing[1], target[1]),
        axis_coords(grid.dims[2], grid.spacing[2], target[2]),
    ];
    let out_grid = target_grid(grid, target, &coords);
    let mut data = voxels;
    let mut dims = grid.dims;
    for axis in 0..3 {
        let (d, nd) = pass(&data, dims, axis, &coords[axis], method);
        data = d;
        dims = nd;
    }
    (data, out_grid)
}

/// Resamples intensities onto a grid with the given spacing. The output size
/// along each axis is `round(n · spacing / target)`.
pub fn resample_volume(vol: &Volume, target: [f64; 3], method: Interpolation) -> Result<Volume> {
    check_input(&vol.grid, target)?;
    let data = vol.voxels.iter().map(|&v| v as f64).collect();
    let (out, grid) = resample_separable(data, &vol.grid, target, method);
    Volume::new(grid, out.into_iter().map(|v| v as f32).collect())
}

/// Nearest-neighbour resampling of a binary mask.
pub fn resample_mask(mask: &TumorMask, target: [f64; 3]) -> Result<TumorMask> {
    check_input(&mask.grid, target)?;
    let data = mask.voxels.iter().map(|&v| v as f64).collect();
    let (out, grid) = resample_separable(data, &mask.grid, target, Interpolation::Nearest);
    TumorMask::new(grid, out.into_iter().map(|v| u8::from(v != 0.0)).collect())
}
