//! Synthetic trimodal phantom cohort for desk-scale verification.
//!
//! Each patient is a squat head ellipsoid with two ventricles and one
//! ellipsoidal lesion, rendered into T1w, T1CE and T2w volumes plus a tumor
//! mask on the T2w grid. The lesion appearance is driven by the patient's
//! subtype through three radiological cues:
//!
//! * rim enhancement and necrotic core on T1CE (GBM vs. LGG),
//! * T2w texture heterogeneity (IDH wild type vs. mutant),
//! * T1w hypointensity depth (1p/19q codeleted vs. non-codeleted),
//!
//! plus a larger lesion size for GBMs. Every cue is jittered per patient, but
//! the class-conditional ranges never overlap, so all four tasks are learnable.
//! T1w and T1CE are misaligned from T2w by a small random in-plane rigid
//! motion, and slice thickness and in-plane spacing vary between patients.
//! Subtype counts follow the published training-set proportions.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{write_manifest, DatasetManifest, Modality, PatientRecord, Sex, Stage};
use crate::nifti_io;
use crate::preprocess::RigidTransform;
use crate::split::random_split;
use crate::taxonomy::GliomaSubtype;
use crate::volume::{Grid, TumorMask, Volume};

/// Training-set subtype counts (I, II, III, IV, V).
pub const REFERENCE_SUBTYPE_COUNTS: [usize; 5] = [138, 116, 191, 60, 275];
const MALE_FRACTION: f64 = 445.0 / 780.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub dims: [usize; 3],
    /// Nominal spacing; each patient's in-plane spacing is jittered by ±10%
    /// and slice thickness is drawn from `slice_thickness_range`.
    pub in_plane_spacing: f64,
    pub slice_thickness_range: [f64; 2],
    pub noise_sigma: f64,
    pub max_misalignment_deg: f64,
    pub max_misalignment_mm: f64,
    pub test_probability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dims: [64, 64, 16],
            in_plane_spacing: 0.9,
            slice_thickness_range: [5.0, 7.15],
            noise_sigma: 0.05,
            max_misalignment_deg: 3.0,
            max_misalignment_mm: 1.5,
            test_probability: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let [nx, ny, nz] = self.dims;
        if nx < 24 || ny < 24 || nz < 10 {
            return Err(Error::Config(format!(
                "synthetic grid must be at least 24x24x10, got {:?}",
                self.dims
            )));
        }
        let [lo, hi] = self.slice_thickness_range;
        if !(self.in_plane_spacing > 0.0 && lo > 0.0 && hi >= lo) {
            return Err(Error::Config("synthetic spacing must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.test_probability) {
            return Err(Error::Config("test probability must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Generating parameters of one lesion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionParams {
    /// T1CE rim enhancement amplitude (0 for LGG).
    pub rim_enhancement: f64,
    /// Depth of the necrotic core (0 for LGG).
    pub necrosis: f64,
    /// Amplitude of T2w texture inside the lesion.
    pub t2_heterogeneity: f64,
    /// Intensity drop of the lesion on T1w.
    pub t1_hypointensity: f64,
    /// Multiplier on the nominal lesion radius.
    pub size_factor: f64,
}

impl LesionParams {
    pub fn nominal(subtype: GliomaSubtype) -> Self {
        use GliomaSubtype::*;
        let (rim, nec, het, hypo, size) = match subtype {
            I => (0.0, 0.0, 0.12, 0.75, 0.85),
            II => (0.0, 0.0, 0.12, 0.30, 0.9),
            III => (0.0, 0.0, 0.60, 0.45, 0.9),
            IV => (1.2, 0.3, 0.15, 0.45, 1.1),
            V => (1.6, 0.9, 0.65, 0.50, 1.15),
        };
        LesionParams {
            rim_enhancement: rim,
            necrosis: nec,
            t2_heterogeneity: het,
            t1_hypointensity: hypo,
            size_factor: size,
        }
    }

    /// Nominal parameters with independent ±10% multiplicative jitter.
    pub fn sample(subtype: GliomaSubtype, rng: &mut impl Rng) -> Self {
        let n = Self::nominal(subtype);
        let mut j = |v: f64| v * rng.gen_range(0.9..=1.1);
        LesionParams {
            rim_enhancement: j(n.rim_enhancement),
            necrosis: j(n.necrosis),
            t2_heterogeneity: j(n.t2_heterogeneity),
            t1_hypointensity: j(n.t1_hypointensity),
            size_factor: j(n.size_factor),
        }
    }
}

/// Largest-remainder allocation of `n` patients to the reference proportions.
pub fn subtype_quota(n: usize) -> [usize; 5] {
    let total: usize = REFERENCE_SUBTYPE_COUNTS.iter().sum();
    let mut counts = [0usize; 5];
    let mut rema: Vec<(usize, usize)> = Vec::with_capacity(5);
    for (i, &c) in REFERENCE_SUBTYPE_COUNTS.iter().enumerate() {
        counts[i] = n * c / total;
        rema.push(((n * c) % total, i));
    }
    let assigned: usize = counts.iter().sum();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rema.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

struct Texture {
    waves: Vec<([f64; 3], f64)>,
}

impl Texture {
    fn new(rng: &mut impl Rng) -> Self {
        let waves = (0..6)
            .map(|_| {
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let wavelength = rng.gen_range(4.0..8.0);
                let k = std::f64::consts::TAU / wavelength;
                let kz = rng.gen_range(-0.1..0.1);
                ([k * theta.cos(), k * theta.sin(), kz], rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Texture { waves }
    }

    /// Zero-mean field with unit RMS amplitude.
    fn at(&self, p: [f64; 3]) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|(k, phase)| (k[0] * p[0] + k[1] * p[1] + k[2] * p[2] + phase).cos())
            .sum();
        s * (2.0 / self.waves.len() as f64).sqrt()
    }
}

fn smoothstep_inside(r: f64, width: f64) -> f64 {
    1.0 / (1.0 + ((r - 1.0) / width).exp())
}

/// Anatomy of one synthetic patient in T2w world coordinates.
struct Phantom {
    head_center: [f64; 3],
    head_axes: [f64; 2],
    head_half_height: f64,
    ventricles: [([f64; 2], [f64; 2]); 2],
    lesion_center: [f64; 3],
    lesion_axes: [f64; 3],
    params: LesionParams,
    texture: Texture,
}

impl Phantom {
    /// Normalized lesion radius (1 on the boundary).
    fn lesion_radius(&self, p: [f64; 3]) -> f64 {
        let c = self.lesion_center;
        let a = self.lesion_axes;
        (((p[0] - c[0]) / a[0]).powi(2) + ((p[1] - c[1]) / a[1]).powi(2) + ((p[2] - c[2]) / a[2]).powi(2))
            .sqrt()
    }

    /// In-plane scale of the head section at height `z`, so the head is a
    /// squat ellipsoid and slices are distinguishable through-plane.
    fn head_taper(&self, z: f64) -> f64 {
        let d = (z - self.head_center[2]) / self.head_half_height;
        (1.0 - d * d).max(0.05).sqrt()
    }

    /// Noise-free intensity of one modality at world point `p`.
    fn intensity(&self, modality: Modality, p: [f64; 3]) -> f64 {
        let hc = self.head_center;
        let taper = self.head_taper(p[2]);
        let hr = (((p[0] - hc[0]) / (self.head_axes[0] * taper)).powi(2)
            + ((p[1] - hc[1]) / (self.head_axes[1] * taper)).powi(2))
        .sqrt();
        let head = smoothstep_inside(hr, 0.03);
        if head < 1e-6 {
            return 0.0;
        }
        let mut ventricle = 0.0f64;
        for (vc, va) in &self.ventricles {
            let vr = (((p[0] - hc[0] - taper * vc[0]) / (taper * va[0])).powi(2)
                + ((p[1] - hc[1] - taper * vc[1]) / (taper * va[1])).powi(2))
            .sqrt();
            ventricle = ventricle.max(smoothstep_inside(vr, 0.08));
        }
        let (brain, csf) = match modality {
            Modality::T1w => (1.0, 0.35),
            Modality::T1ce => (1.05, 0.4),
            Modality::T2w => (0.8, 2.0),
        };
        let mut v = brain + (csf - brain) * ventricle;

        let r = self.lesion_radius(p);
        if r < 1.3 {
            let inside = smoothstep_inside(r, 0.04);
            let lp = &self.params;
            let tex = self.texture.at(p);
            let core = smoothstep_inside(r / 0.5, 0.1);
            let lesion = match modality {
                Modality::T1w => {
                    brain - lp.t1_hypointensity + 0.2 * lp.t2_heterogeneity * tex
                }
                Modality::T1ce => {
                    let rim = (-((r - 0.85) / 0.12).powi(2)).exp();
                    0.9 + lp.rim_enhancement * rim - 0.6 * lp.necrosis * core
                }
                Modality::T2w => 1.9 + lp.t2_heterogeneity * tex + 0.5 * lp.necrosis * core,
            };
            v += (lesion - v) * inside;
        }
        v * head
    }
}

pub struct SyntheticPatient {
    /// T1w, T1CE, T2w.
    pub volumes: [Volume; 3],
    pub mask: TumorMask,
    pub params: LesionParams,
    pub misalignment: [RigidTransform; 2],
}

/// Renders one patient from its own random stream.
pub fn generate_patient(subtype: GliomaSubtype, cfg: &SynthConfig, rng: &mut impl Rng) -> Result<SyntheticPatient> {
    cfg.validate()?;
    let [nx, ny, nz] = cfg.dims;
    let sxy = cfg.in_plane_spacing * rng.gen_range(0.9..=1.1);
    let [tlo, thi] = cfg.slice_thickness_range;
    let sz = if thi > tlo { rng.gen_range(tlo..=thi) } else { tlo };
    let grid = Grid::new(cfg.dims, [sxy, sxy, sz]);
    let fov = [nx as f64 * sxy, ny as f64 * sxy];
    let head_center = grid.center_world();
    let head_axes = [
        0.42 * fov[0] * rng.gen_range(0.95..=1.0),
        0.45 * fov[1] * rng.gen_range(0.95..=1.0),
    ];
    let ventricles = [
        ([-0.12 * head_axes[0], -0.05 * head_axes[1]], [0.07 * head_axes[0], 0.22 * head_axes[1]]),
        ([0.12 * head_axes[0], -0.08 * head_axes[1]], [0.06 * head_axes[0], 0.2 * head_axes[1]]),
    ];

    let params = LesionParams::sample(subtype, rng);
    let base = 0.14 * fov[0].min(fov[1]) * params.size_factor;
    let lesion_axes = [
        base * rng.gen_range(0.85..=1.15),
        base * rng.gen_range(0.85..=1.15),
        sz * rng.gen_range(2.2..=3.0),
    ];
    let head_half_height = 0.75 * nz as f64 * sz;
    // keep the lesion inside the slab through-plane and inside the head
    // section at its height in-plane
    let z_lo = lesion_axes[2] + sz;
    let z_hi = (nz as f64 - 1.0) * sz - lesion_axes[2] - sz;
    let zc = if z_hi > z_lo { rng.gen_range(z_lo..=z_hi) } else { (nz as f64 - 1.0) * sz / 2.0 };
    let d = (zc - head_center[2]) / head_half_height;
    let taper = (1.0 - d * d).max(0.05).sqrt();
    let room = [
        (head_axes[0] * taper - lesion_axes[0]).max(0.0) * 0.6,
        (head_axes[1] * taper - lesion_axes[1]).max(0.0) * 0.6,
    ];
    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
    let rad = rng.gen_range(0.3..=1.0);
    let lesion_center = [
        head_center[0] + rad * room[0] * ang.cos(),
        head_center[1] + rad * room[1] * ang.sin(),
        zc,
    ];
    let phantom = Phantom {
        head_center,
        head_axes,
        head_half_height,
        ventricles,
        lesion_center,
        lesion_axes,
        params,
        texture: Texture::new(rng),
    };

    let mut misalignment = [RigidTransform::identity(); 2];
    for m in misalignment.iter_mut() {
        let d = cfg.max_misalignment_mm;
        *m = RigidTransform::new(
            rng.gen_range(-cfg.max_misalignment_deg..=cfg.max_misalignment_deg),
            [rng.gen_range(-d..=d), rng.gen_range(-d..=d), 0.0],
            head_center,
        );
    }

    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let render = |modality: Modality, motion: Option<&RigidTransform>, rng: &mut dyn rand::RngCore| {
        let g = grid.clone();
        Volume::from_fn(grid.clone(), |x, y, z| {
            let w = g.voxel_to_world([x as f64, y as f64, z as f64]);
            let p = motion.map_or(w, |t| t.apply_point(w));
            (phantom.intensity(modality, p) + noise.sample(rng)) as f32
        })
    };
    let t1w = render(Modality::T1w, Some(&misalignment[0]), rng);
    let t1ce = render(Modality::T1ce, Some(&misalignment[1]), rng);
    let t2w = render(Modality::T2w, None, rng);
    let mask = TumorMask::from_fn(grid.clone(), |x, y, z| {
        phantom.lesion_radius(grid.voxel_to_world([x as f64, y as f64, z as f64])) <= 1.0
    })?;
    Ok(SyntheticPatient {
        volumes: [t1w, t1ce, t2w],
        mask,
        params,
        misalignment,
    })
}

/// Patient stream `i` of a cohort seed.
pub fn patient_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Writes `n` synthetic patients plus `manifest.jsonl` into `out_dir`.
pub fn generate_synthetic_cohort(
    n: usize,
    seed: u64,
    out_dir: &Path,
    cfg: &SynthConfig,
) -> Result<DatasetManifest> {
    if n < 10 {
        return Err(Error::Invalid(format!("synthetic cohort needs n >= 10, got {n}")));
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut cohort_rng = ChaCha8Rng::seed_from_u64(seed);
    let quota = subtype_quota(n);
    let mut subtypes: Vec<GliomaSubtype> = GliomaSubtype::ALL
        .iter()
        .zip(quota)
        .flat_map(|(&s, k)| std::iter::repeat_n(s, k))
        .collect();
    subtypes.shuffle(&mut cohort_rng);
    let age = Normal::new(47.0, 15.0).expect("valid normal");

    let mut records = Vec::with_capacity(n);
    for (i, &subtype) in subtypes.iter().enumerate() {
        let id = format!("syn{:04}", i + 1);
        let mut rng = patient_rng(seed, i);
        let patient = generate_patient(subtype, cfg, &mut rng)?;
        let dir = out_dir.join(&id);
        let mut paths = Vec::with_capacity(3);
        for (m, v) in Modality::ALL.iter().zip(&patient.volumes) {
            let p = dir.join(format!("{}.nii.gz", m.key()));
            nifti_io::write_volume(&p, v)?;
            paths.push(p);
        }
        let mask_path = dir.join("mask.nii.gz");
        nifti_io::write_mask(&mask_path, &patient.mask)?;
        let sex = if cohort_rng.gen_bool(MALE_FRACTION) { Sex::Male } else { Sex::Female };
        let age_years: f64 = age.sample(&mut cohort_rng);
        records.push(PatientRecord {
            id,
            volume_paths: paths.try_into().expect("three modalities"),
            mask_path,
            subtype,
            age: Some(age_years.clamp(18.0, 85.0).round()),
            sex: Some(sex),
        });
    }
    let split = random_split(&records, cfg.test_probability, seed ^ 0x5EED_5A17)?;
    let manifest = DatasetManifest {
        stage: Stage::Raw,
        records,
        split,
    };
    write_manifest(&out_dir.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{derive_binary_label, ClassificationTask};

    fn small() -> SynthConfig {
        SynthConfig {
            dims: [32, 32, 12],
            ..Default::default()
        }
    }

    #[test]
    fn quota_matches_reference_proportions() {
        assert_eq!(subtype_quota(780), REFERENCE_SUBTYPE_COUNTS);
        assert_eq!(subtype_quota(200).iter().sum::<usize>(), 200);
        let big = subtype_quota(100_000);
        for (k, &c) in big.iter().enumerate() {
            let expected = REFERENCE_SUBTYPE_COUNTS[k] as f64 / 780.0;
            assert!((c as f64 / 100_000.0 - expected).abs() < 1e-4);
        }
    }

    #[test]
    fn masks_are_nonempty_and_in_bounds() {
        let cfg = small();
        for (i, s) in GliomaSubtype::ALL.iter().cycle().take(15).enumerate() {
            let p = generate_patient(*s, &cfg, &mut patient_rng(11, i)).unwrap();
            assert!(p.mask.count() > 0);
            let [nx, ny, nz] = p.mask.dims();
            // lesion must not touch the outer boundary of the grid
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        if p.mask.get(x, y, z) {
                            assert!(x > 0 && y > 0 && z > 0 && x + 1 < nx && y + 1 < ny && z + 1 < nz);
                        }
                    }
                }
            }
            for v in &p.volumes {
                assert!(v.voxels.iter().all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn generating_statistics_separate_every_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stat = |task: ClassificationTask, p: &LesionParams| match task {
            ClassificationTask::GradeGbmVsLgg => p.rim_enhancement,
            ClassificationTask::IdhInLgg | ClassificationTask::IdhInGbm => p.t2_heterogeneity,
            ClassificationTask::CodelInIdhMutLgg => p.t1_hypointensity,
        };
        for task in ClassificationTask::ALL {
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for _ in 0..400 {
                for s in GliomaSubtype::ALL {
                    let p = LesionParams::sample(s, &mut rng);
                    match derive_binary_label(s, task).as_bool() {
                        Some(true) => pos.push(stat(task, &p)),
                        Some(false) => neg.push(stat(task, &p)),
                        None => {}
                    }
                }
            }
            let max = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max);
            let min = |v: &[f64]| v.iter().cloned().fold(f64::MAX, f64::min);
            let disjoint = max(&pos) < min(&neg) || max(&neg) < min(&pos);
            assert!(disjoint, "{task}: class ranges overlap");
        }
    }

    #[test]
    fn cohort_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_synthetic_cohort(12, 7, a.path(), &small()).unwrap();
        let mb = generate_synthetic_cohort(12, 7, b.path(), &small()).unwrap();
        assert_eq!(ma.records.len(), 12);
        assert_eq!(ma.split, mb.split);
        for (ra, rb) in ma.records.iter().zip(&mb.records) {
            assert_eq!(ra.subtype, rb.subtype);
            for m in Modality::ALL {
                let va = std::fs::read(ra.volume_path(m)).unwrap();
                let vb = std::fs::read(rb.volume_path(m)).unwrap();
                assert_eq!(va, vb);
            }
        }
        assert!(generate_synthetic_cohort(9, 7, a.path(), &small()).is_err());
    }
}
