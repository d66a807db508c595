//! Builds the deterministic 2.5D stack of one phantom patient plus a few
//! augmented variants, and writes each as a PGM contact sheet.
//!
//! cargo run --release --example roi_stack -- [out_dir]

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use glioma_subtyping::roi::{augment, build_stack, tumor_area_per_slice, AugmentConfig, RoiConfig};
use glioma_subtyping::synth::{generate_patient, patient_rng, SynthConfig};
use glioma_subtyping::taxonomy::GliomaSubtype;

fn main() -> glioma_subtyping::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("glioma_stacks"), PathBuf::from);
    std::fs::create_dir_all(&out).map_err(|e| glioma_subtyping::Error::Io { path: out.clone(), source: e })?;

    let p = generate_patient(GliomaSubtype::IV, &SynthConfig::default(), &mut patient_rng(5, 1))?;
    println!("tumor area per slice: {:?}", tumor_area_per_slice(&p.mask));

    let roi = RoiConfig {
        stack_size: 64,
        ..Default::default()
    };
    let stack = build_stack(&p.volumes, &p.mask, &roi)?;
    println!(
        "slices {:?}, ROI rows {}..={} cols {}..={}",
        stack.triplet, stack.roi.row_min, stack.roi.row_max, stack.roi.col_min, stack.roi.col_max
    );
    stack.write_pgm(&out.join("deterministic.pgm"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let aug = AugmentConfig::default();
    for i in 0..4 {
        let s = augment(&p.volumes, &p.mask, &roi, &aug, &mut rng)?;
        s.write_pgm(&out.join(format!("augmented{i}.pgm")))?;
        println!("augmented {i}: slices {:?}", s.triplet);
    }
    println!("wrote contact sheets to {}", out.display());
    Ok(())
}
