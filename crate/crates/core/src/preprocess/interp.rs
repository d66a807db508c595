//! Point samplers over voxel grids with clamp-to-edge boundary handling.

use serde::{Deserialize, Serialize};

use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    Linear,
    Cubic,
}

/// Coordinates this close to an integer are treated as lying on the lattice,
/// so integer shifts and identity maps reproduce voxel values exactly.
const SNAP: f64 = 1e-9;

fn split(c: f64) -> (i64, f64) {
    let r = c.round();
    if (c - r).abs() < SNAP {
        return (r as i64, 0.0);
    }
    let f = c.floor();
    (f as i64, c - f)
}

#[inline]
fn clamp(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Keys cubic convolution weights (a = -0.5) for taps at -1, 0, +1, +2.
#[inline]
pub fn cubic_weights(t: f64) -> [f64; 4] {
    const A: f64 = -0.5;
    let near = |x: f64| ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0;
    let far = |x: f64| ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A;
    if t == 0.0 {
        return [0.0, 1.0, 0.0, 0.0];
    }
    [far(1.0 + t), near(t), near(1.0 - t), far(2.0 - t)]
}

pub fn sample(vol: &Volume, c: [f64; 3], method: Interpolation) -> f64 {
    match method {
        Interpolation::Nearest => sample_nearest(vol, c),
        Interpolation::Linear => sample_linear(vol, c),
        Interpolation::Cubic => sample_cubic(vol, c),
    }
}

pub fn nearest_index(c: f64, n: usize) -> usize {
    clamp((c + 0.5).floor() as i64, n)
}

pub fn sample_nearest(vol: &Volume, c: [f64; 3]) -> f64 {
    let [nx, ny, nz] = vol.grid.dims;
    vol.get(
        nearest_index(c[0], nx),
        nearest_index(c[1], ny),
        nearest_index(c[2], nz),
    ) as f64
}

pub fn sample_linear(vol: &Volume, c: [f64; 3]) -> f64 {
    let dims = vol.grid.dims;
    let mut base = [0usize; 3];
    let mut next = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let (i, t) = split(c[a]);
        base[a] = clamp(i, dims[a]);
        next[a] = clamp(i + 1, dims[a]);
        frac[a] = t;
    }
    let mut acc = 0.0;
    for (dz, wz) in [(base[2], 1.0 - frac[2]), (next[2], frac[2])] {
        if wz == 0.0 {
            continue;
        }
        for (dy, wy) in [(base[1], 1.0 - frac[1]), (next[1], frac[1])] {
            if wy == 0.0 {
                continue;
            }
            let row = vol.grid.index(0, dy, dz);
            let v0 = vol.voxels[row + base[0]] as f64;
            let v1 = vol.voxels[row + next[0]] as f64;
            acc += wz * wy * (v0 * (1.0 - frac[0]) + v1 * frac[0]);
        }
    }
    acc
}

pub fn sample_cubic(vol: &Volume, c: [f64; 3]) -> f64 {
    let dims = vol.grid.dims;
    let mut idx = [[0usize; 4]; 3];
    let mut w = [[0.0; 4]; 3];
    for a in 0..3 {
        let (i, t) = split(c[a]);
        w[a] = cubic_weights(t);
        for k in 0..4 {
            idx[a][k] = clamp(i - 1 + k as i64, dims[a]);
        }
    }
    let mut acc = 0.0;
    for kz in 0..4 {
        if w[2][kz] == 0.0 {
            continue;
        }
        let mut plane = 0.0;
        for ky in 0..4 {
            if w[1][ky] == 0.0 {
                continue;
            }
            let row = vol.grid.index(0, idx[1][ky], idx[2][kz]);
            let mut line = 0.0;
            for kx in 0..4 {
                if w[0][kx] != 0.0 {
                    line += w[0][kx] * vol.voxels[row + idx[0][kx]] as f64;
                }
            }
            plane += w[1][ky] * line;
        }
        acc += w[2][kz] * plane;
    }
    acc
}

/// Bilinear sample of one 2-D slice (`width` columns, row-major) with edge clamping.
pub fn sample_bilinear_2d(slice: &[f32], width: usize, height: usize, row: f64, col: f64) -> f64 {
    let (r0, tr) = split(row);
    let (c0, tc) = split(col);
    let ra = clamp(r0, height);
    let rb = clamp(r0 + 1, height);
    let ca = clamp(c0, width);
    let cb = clamp(c0 + 1, width);
    let at = |r: usize, c: usize| slice[r * width + c] as f64;
    if tr == 0.0 && tc == 0.0 {
        return at(ra, ca);
    }
    let top = at(ra, ca) * (1.0 - tc) + at(ra, cb) * tc;
    let bottom = at(rb, ca) * (1.0 - tc) + at(rb, cb) * tc;
    top * (1.0 - tr) + bottom * tr
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    #[test]
    fn cubic_weights_partition_unity_and_reproduce_lines() {
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let w = cubic_weights(t);
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
            // first moment: sum w_k * (k - 1) == t
            let m: f64 = w.iter().enumerate().map(|(k, wk)| wk * (k as f64 - 1.0)).sum();
            assert!((m - t).abs() < 1e-14);
        }
    }

    #[test]
    fn samplers_agree_on_lattice_points() {
        let grid = Grid::new([5, 4, 3], [1.0; 3]);
        let vol = Volume::from_fn(grid, |x, y, z| (x * 7 + y * 3 + z * 11) as f32);
        for (x, y, z) in [(0, 0, 0), (2, 3, 1), (4, 1, 2)] {
            let c = [x as f64, y as f64, z as f64];
            let v = vol.get(x, y, z) as f64;
            assert_eq!(sample_cubic(&vol, c), v);
            assert_eq!(sample_linear(&vol, c), v);
            assert_eq!(sample_nearest(&vol, c), v);
        }
    }
}
