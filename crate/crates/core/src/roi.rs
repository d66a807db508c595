//! 2.5D input construction: slice triplet choice, tumor ROI, crop-and-resize
//! stacks and training-time augmentation.
//!
//! A stack holds 3 slices × 3 channels (T1w, T1CE, T2w) × `size` × `size`
//! values, slice-major.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::sample_bilinear_2d;
use crate::volume::{TumorMask, Volume};

pub const DEFAULT_STACK_SIZE: usize = 224;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoiConfig {
    pub margin_fraction: f64,
    /// Output edge length in pixels.
    pub stack_size: usize,
    /// Distance between the centre slice and its neighbours (2 takes every
    /// other slice, 1 takes consecutive slices).
    pub slice_gap: usize,
}

impl Default for RoiConfig {
    fn default() -> Self {
        RoiConfig {
            margin_fraction: 0.1,
            stack_size: DEFAULT_STACK_SIZE,
            slice_gap: 2,
        }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.margin_fraction) {
            return Err(Error::Config(format!(
                "roi margin must lie in [0, 1], got {}",
                self.margin_fraction
            )));
        }
        if self.stack_size == 0 || self.slice_gap == 0 {
            return Err(Error::Config("stack size and slice gap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    DeterministicMaxArea,
    RandomTop3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSelection {
    pub center: usize,
    pub triplet: [usize; 3],
    pub mode: SelectionMode,
}

/// Inclusive in-plane rectangle in voxel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiRect {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
    pub margin_fraction: f64,
}

impl RoiRect {
    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_min..=self.row_max).contains(&row) && (self.col_min..=self.col_max).contains(&col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stack25D {
    pub size: usize,
    pub data: Vec<f64>,
    pub triplet: [usize; 3],
    pub roi: RoiRect,
}

impl Stack25D {
    pub fn plane_len(&self) -> usize {
        self.size * self.size
    }

    /// The 3 × size × size image of one slice.
    pub fn slice(&self, s: usize) -> &[f64] {
        let n = 3 * self.plane_len();
        &self.data[s * n..(s + 1) * n]
    }

    pub fn get(&self, slice: usize, channel: usize, row: usize, col: usize) -> f64 {
        self.data[((slice * 3 + channel) * self.size + row) * self.size + col]
    }

    /// Writes the 3 × 3 grid of planes (rows: slices, columns: channels) as
    /// an 8-bit PGM image, each plane min-max scaled.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let n = self.size;
        let (w, h) = (3 * n + 2, 3 * n + 2);
        let mut img = vec![0u8; w * h];
        for s in 0..3 {
            for ch in 0..3 {
                let off = (s * 3 + ch) * n * n;
                let plane = &self.data[off..off + n * n];
                let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let span = if hi > lo { hi - lo } else { 1.0 };
                for r in 0..n {
                    for c in 0..n {
                        let v = ((plane[r * n + c] - lo) / span * 255.0).round() as u8;
                        img[(s * (n + 1) + r) * w + ch * (n + 1) + c] = v;
                    }
                }
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write!(f, "P5\n{w} {h}\n255\n")
            .and_then(|_| f.write_all(&img))
            .map_err(|e| Error::io(path, e))
    }
}

pub fn tumor_area_per_slice(mask: &TumorMask) -> Vec<usize> {
    (0..mask.dims()[2])
        .map(|z| mask.slice(z).iter().filter(|&&v| v != 0).count())
        .collect()
}

/// Slice indices ordered by decreasing area, lowest index first on ties.
fn ranked_slices(areas: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..areas.len()).filter(|&i| areas[i] > 0).collect();
    idx.sort_by(|&a, &b| areas[b].cmp(&areas[a]).then(a.cmp(&b)));
    idx
}

pub fn triplet_around(center: usize, gap: usize, n_slices: usize) -> [usize; 3] {
    let last = n_slices - 1;
    [center.saturating_sub(gap), center, (center + gap).min(last)]
}

pub fn select_slices_from_areas(
    areas: &[usize],
    mode: SelectionMode,
    gap: usize,
    rng: &mut impl Rng,
) -> Result<SliceSelection> {
    select_among(areas, mode, 3, gap, rng)
}

fn select_among(
    areas: &[usize],
    mode: SelectionMode,
    top_k: usize,
    gap: usize,
    rng: &mut impl Rng,
) -> Result<SliceSelection> {
    let ranked = ranked_slices(areas);
    if ranked.is_empty() {
        return Err(Error::EmptyMask(String::new()));
    }
    let center = match mode {
        SelectionMode::DeterministicMaxArea => ranked[0],
        SelectionMode::RandomTop3 => ranked[rng.gen_range(0..ranked.len().min(top_k.max(1)))],
    };
    Ok(SliceSelection {
        center,
        triplet: triplet_around(center, gap, areas.len()),
        mode,
    })
}

pub fn select_slices(
    mask: &TumorMask,
    mode: SelectionMode,
    gap: usize,
    rng: &mut impl Rng,
) -> Result<SliceSelection> {
    select_slices_from_areas(&tumor_area_per_slice(mask), mode, gap, rng)
}

/// Union of the tumor bounding boxes on the selected slices, grown by
/// `round(margin · extent)` on each side and clipped to the image.
pub fn compute_roi(mask: &TumorMask, selection: &SliceSelection, margin_fraction: f64) -> Result<RoiRect> {
    let [nx, ny, _] = mask.dims();
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for &z in &selection.triplet {
        let plane = mask.slice(z);
        for row in 0..ny {
            for col in 0..nx {
                if plane[row * nx + col] != 0 {
                    r0 = r0.min(row);
                    r1 = r1.max(row);
                    c0 = c0.min(col);
                    c1 = c1.max(col);
                }
            }
        }
    }
    if r0 == usize::MAX {
        return Err(Error::EmptyMask(format!(" on slices {:?}", selection.triplet)));
    }
    let mr = (margin_fraction * (r1 - r0 + 1) as f64).round() as usize;
    let mc = (margin_fraction * (c1 - c0 + 1) as f64).round() as usize;
    Ok(RoiRect {
        row_min: r0.saturating_sub(mr),
        row_max: (r1 + mr).min(ny - 1),
        col_min: c0.saturating_sub(mc),
        col_max: (c1 + mc).min(nx - 1),
        margin_fraction,
    })
}

/// Sampling geometry of a stack in voxel coordinates.
#[derive(Debug, Clone, Copy)]
struct View {
    center_row: f64,
    center_col: f64,
    height: f64,
    width: f64,
    rotation_rad: f64,
    mirror: bool,
    intensity: f64,
}

impl View {
    fn of(roi: &RoiRect) -> Self {
        View {
            center_row: roi.row_min as f64 - 0.5 + roi.height() as f64 / 2.0,
            center_col: roi.col_min as f64 - 0.5 + roi.width() as f64 / 2.0,
            height: roi.height() as f64,
            width: roi.width() as f64,
            rotation_rad: 0.0,
            mirror: false,
            intensity: 1.0,
        }
    }
}

fn check_volumes(volumes: &[Volume; 3]) -> Result<()> {
    let g = &volumes[2].grid;
    if volumes.iter().any(|v| !v.grid.same_lattice(g)) {
        return Err(Error::ShapeMismatch(
            "modalities are not on a common grid; preprocess first".into(),
        ));
    }
    Ok(())
}

fn render(volumes: &[Volume; 3], triplet: [usize; 3], roi: RoiRect, view: View, size: usize) -> Stack25D {
    let [nx, ny, _] = volumes[2].dims();
    let (sin, cos) = view.rotation_rad.sin_cos();
    let n = size as f64;
    let mut coords = Vec::with_capacity(size * size);
    for r in 0..size {
        let v = ((r as f64 + 0.5) / n - 0.5) * view.height;
        for c in 0..size {
            let u = ((c as f64 + 0.5) / n - 0.5) * view.width;
            let col = view.center_col + (u * cos - v * sin);
            let row = view.center_row + (u * sin + v * cos);
            coords.push((row, col));
        }
    }
    let mut data = Vec::with_capacity(9 * size * size);
    for &z in &triplet {
        for vol in volumes {
            let plane = vol.slice(z);
            for r in 0..size {
                for c in 0..size {
                    let src = if view.mirror { size - 1 - c } else { c };
                    let (row, col) = coords[r * size + src];
                    data.push(sample_bilinear_2d(plane, nx, ny, row, col) * view.intensity);
                }
            }
        }
    }
    Stack25D {
        size,
        data,
        triplet,
        roi,
    }
}

/// Crops `roi` from the selected slices of each modality and resizes to
/// `size` × `size` bilinearly.
pub fn extract_stack(volumes: &[Volume; 3], selection: &SliceSelection, roi: &RoiRect, size: usize) -> Result<Stack25D> {
    check_volumes(volumes)?;
    let nz = volumes[2].dims()[2];
    if selection.triplet.iter().any(|&z| z >= nz) {
        return Err(Error::Invalid(format!("slice triplet {:?} outside {nz} slices", selection.triplet)));
    }
    Ok(render(volumes, selection.triplet, *roi, View::of(roi), size))
}

/// Deterministic test-time stack: max-area centre slice, no augmentation.
pub fn build_stack(volumes: &[Volume; 3], mask: &TumorMask, cfg: &RoiConfig) -> Result<Stack25D> {
    let mut unused = rand::rngs::mock::StepRng::new(0, 0);
    let sel = select_slices(mask, SelectionMode::DeterministicMaxArea, cfg.slice_gap, &mut unused)?;
    let roi = compute_roi(mask, &sel, cfg.margin_fraction)?;
    extract_stack(volumes, &sel, &roi, cfg.stack_size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Centre slice drawn from this many largest-area slices (1 disables).
    pub center_slice_candidates: usize,
    pub max_translation_fraction: f64,
    pub scale_range: [f64; 2],
    pub rotation_range_degrees: f64,
    pub intensity_scale_range: [f64; 2],
    pub mirror_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            center_slice_candidates: 3,
            max_translation_fraction: 0.1,
            scale_range: [0.9, 1.1],
            rotation_range_degrees: 10.0,
            intensity_scale_range: [0.9, 1.1],
            mirror_probability: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        AugmentConfig {
            enabled: true,
            center_slice_candidates: 1,
            max_translation_fraction: 0.0,
            scale_range: [1.0, 1.0],
            rotation_range_degrees: 0.0,
            intensity_scale_range: [1.0, 1.0],
            mirror_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let contains = |r: [f64; 2], v: f64| r[0] <= v && v <= r[1];
        let ok = self.center_slice_candidates >= 1
            && self.max_translation_fraction >= 0.0
            && self.rotation_range_degrees >= 0.0
            && contains(self.scale_range, 1.0)
            && self.scale_range[0] > 0.0
            && contains(self.intensity_scale_range, 1.0)
            && (0.0..=1.0).contains(&self.mirror_probability);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "augmentation ranges must be non-negative and contain the identity".into(),
            ))
        }
    }
}

/// Randomized training stack. With identity ranges this reproduces the
/// deterministic stack exactly.
pub fn augment(
    volumes: &[Volume; 3],
    mask: &TumorMask,
    roi_cfg: &RoiConfig,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<Stack25D> {
    if !cfg.enabled {
        return build_stack(volumes, mask, roi_cfg);
    }
    check_volumes(volumes)?;
    let mode = if cfg.center_slice_candidates > 1 {
        SelectionMode::RandomTop3
    } else {
        SelectionMode::DeterministicMaxArea
    };
    let areas = tumor_area_per_slice(mask);
    let sel = select_among(&areas, mode, cfg.center_slice_candidates, roi_cfg.slice_gap, rng)?;
    let roi = compute_roi(mask, &sel, roi_cfg.margin_fraction)?;
    let mut view = View::of(&roi);
    let t = cfg.max_translation_fraction;
    view.center_col += rng.gen_range(-t..=t) * view.width;
    view.center_row += rng.gen_range(-t..=t) * view.height;
    let s = rng.gen_range(cfg.scale_range[0]..=cfg.scale_range[1]);
    view.width *= s;
    view.height *= s;
    let rot = cfg.rotation_range_degrees;
    view.rotation_rad = rng.gen_range(-rot..=rot).to_radians();
    view.mirror = rng.gen_bool(cfg.mirror_probability);
    view.intensity = rng.gen_range(cfg.intensity_scale_range[0]..=cfg.intensity_scale_range[1]);
    Ok(render(volumes, sel.triplet, roi, view, roi_cfg.stack_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    fn det(areas: &[usize]) -> [usize; 3] {
        select_slices_from_areas(areas, SelectionMode::DeterministicMaxArea, 2, &mut rng())
            .unwrap()
            .triplet
    }

    #[test]
    fn area_profile() {
        let grid = Grid::new([6, 6, 10], [1.0; 3]);
        let m = TumorMask::from_fn(grid, |x, y, z| x == 1 && y == 2 && z == 3).unwrap();
        let a = tumor_area_per_slice(&m);
        assert_eq!(a.len(), 10);
        assert_eq!(a[3], 1);
        assert_eq!(a.iter().sum::<usize>(), m.count());
    }

    #[test]
    fn triplet_rules() {
        assert_eq!(det(&[0, 5, 9, 5, 0]), [0, 2, 4]);
        let mut peak0 = vec![0; 10];
        peak0[0] = 4;
        peak0[1] = 2;
        assert_eq!(det(&peak0), [0, 0, 2]);
        assert_eq!(det(&[3, 7, 7, 1]), [0, 1, 3]);
        assert!(select_slices_from_areas(&[0, 0], SelectionMode::DeterministicMaxArea, 2, &mut rng()).is_err());
    }

    #[test]
    fn random_top3_is_uniform() {
        let mut r = rng();
        let mut hits = [0usize; 4];
        for _ in 0..10_000 {
            let s = select_slices_from_areas(&[9, 8, 7, 0], SelectionMode::RandomTop3, 2, &mut r).unwrap();
            hits[s.center] += 1;
        }
        assert_eq!(hits[3], 0);
        for h in &hits[..3] {
            assert!((*h as f64 / 10_000.0 - 1.0 / 3.0).abs() < 0.05);
        }
    }

    fn rect_mask(rows: (usize, usize), cols: (usize, usize), z: usize) -> TumorMask {
        TumorMask::from_fn(Grid::new([64, 64, 5], [1.0; 3]), |x, y, zz| {
            zz == z && (rows.0..=rows.1).contains(&y) && (cols.0..=cols.1).contains(&x)
        })
        .unwrap()
    }

    #[test]
    fn roi_bounds_and_margin() {
        let m = rect_mask((10, 20), (30, 40), 2);
        let sel = SliceSelection {
            center: 2,
            triplet: [0, 2, 4],
            mode: SelectionMode::DeterministicMaxArea,
        };
        let r = compute_roi(&m, &sel, 0.0).unwrap();
        assert_eq!((r.row_min, r.row_max, r.col_min, r.col_max), (10, 20, 30, 40));

        let m = rect_mask((10, 19), (30, 39), 2);
        let r = compute_roi(&m, &sel, 0.1).unwrap();
        assert_eq!(r.width(), 12);
        assert_eq!(r.height(), 12);

        let mut both = rect_mask((5, 8), (5, 8), 0);
        let other = rect_mask((30, 33), (40, 50), 4);
        for (a, b) in both.voxels.iter_mut().zip(&other.voxels) {
            *a |= *b;
        }
        let r = compute_roi(&both, &sel, 0.0).unwrap();
        assert_eq!((r.row_min, r.row_max, r.col_min, r.col_max), (5, 33, 5, 50));
    }

    fn volumes(f: impl Fn(usize, usize, usize, usize) -> f32) -> [Volume; 3] {
        let g = Grid::new([64, 64, 5], [1.0; 3]);
        [0, 1, 2].map(|c| Volume::from_fn(g.clone(), |x, y, z| f(c, x, y, z)))
    }

    #[test]
    fn identity_resize_and_constants() {
        let vols = volumes(|c, x, y, z| (c * 1000 + z * 100 + y) as f32 + 0.01 * x as f32);
        let sel = SliceSelection {
            center: 2,
            triplet: [0, 2, 4],
            mode: SelectionMode::DeterministicMaxArea,
        };
        let roi = RoiRect {
            row_min: 3,
            row_max: 18,
            col_min: 7,
            col_max: 22,
            margin_fraction: 0.0,
        };
        let s = extract_stack(&vols, &sel, &roi, 16).unwrap();
        assert_eq!(s.data.len(), 9 * 16 * 16);
        for (si, &z) in sel.triplet.iter().enumerate() {
            for c in 0..3 {
                for r in 0..16 {
                    for k in 0..16 {
                        assert_eq!(s.get(si, c, r, k), vols[c].get(7 + k, 3 + r, z) as f64);
                    }
                }
            }
        }
        let flat = volumes(|_, _, _, _| 2.5);
        let s = extract_stack(&flat, &sel, &roi, 9).unwrap();
        assert!(s.data.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn augmentation_identities() {
        let vols = volumes(|c, x, y, z| ((c + 1) * (x * 3 + y * 7 + z)) as f32 * 0.01);
        let m = rect_mask((20, 35), (18, 40), 2);
        let roi_cfg = RoiConfig {
            stack_size: 12,
            ..Default::default()
        };
        let base = build_stack(&vols, &m, &roi_cfg).unwrap();
        let same = augment(&vols, &m, &roi_cfg, &AugmentConfig::identity(), &mut rng()).unwrap();
        assert_eq!(same.data, base.data);

        let mirror = AugmentConfig {
            mirror_probability: 1.0,
            ..AugmentConfig::identity()
        };
        let flipped = augment(&vols, &m, &roi_cfg, &mirror, &mut rng()).unwrap();
        for s in 0..3 {
            for c in 0..3 {
                for r in 0..12 {
                    for k in 0..12 {
                        assert_eq!(flipped.get(s, c, r, k), base.get(s, c, r, 11 - k));
                    }
                }
            }
        }

        let bright = AugmentConfig {
            intensity_scale_range: [1.1, 1.1],
            ..AugmentConfig::identity()
        };
        let scaled = augment(&vols, &m, &roi_cfg, &bright, &mut rng()).unwrap();
        for (a, b) in scaled.data.iter().zip(&base.data) {
            assert_eq!(*a, 1.1 * b);
        }

        let full = augment(&vols, &m, &roi_cfg, &AugmentConfig::default(), &mut rng()).unwrap();
        assert!(full.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pgm_dump() {
        let vols = volumes(|c, x, _, _| (c + x) as f32);
        let m = rect_mask((20, 35), (18, 40), 2);
        let cfg = RoiConfig {
            stack_size: 8,
            ..Default::default()
        };
        let s = build_stack(&vols, &m, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.pgm");
        s.write_pgm(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n26 26\n255\n"));
        assert_eq!(bytes.len(), 13 + 26 * 26);
    }
}
