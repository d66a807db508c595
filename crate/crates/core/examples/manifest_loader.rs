//! Reads a dataset manifest, checks every referenced NIfTI file and prints
//! each patient's grid and tumor extent.
//!
//! cargo run --release --example manifest_loader -- <manifest.jsonl>
//!
//! Without an argument a 12-patient phantom cohort is generated first.

use std::path::PathBuf;

use glioma_subtyping::manifest::read_manifest;
use glioma_subtyping::nifti_io::{read_mask, read_volume};
use glioma_subtyping::roi::tumor_area_per_slice;
use glioma_subtyping::synth::{generate_synthetic_cohort, SynthConfig};

fn main() -> glioma_subtyping::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let dir = std::env::temp_dir().join("glioma_manifest_loader");
            generate_synthetic_cohort(12, 1, &dir, &SynthConfig::default())?;
            dir.join("manifest.jsonl")
        }
    };
    let manifest = read_manifest(&path)?;
    manifest.validate_files()?;
    println!("{}: {} patients, stage {:?}", path.display(), manifest.records.len(), manifest.stage);
    for r in &manifest.records {
        let t2 = read_volume(&r.volume_paths[2])?;
        let mask = read_mask(&r.mask_path)?;
        let areas = tumor_area_per_slice(&mask);
        let slices: Vec<usize> = (0..areas.len()).filter(|&z| areas[z] > 0).collect();
        println!(
            "  {} {:>3} {:?} {:?}  tumor {:.0} mm^3 on slices {}..={}",
            r.id,
            r.subtype.as_str(),
            t2.grid.dims,
            manifest.split_of(&r.id),
            mask.physical_volume(),
            slices.first().unwrap_or(&0),
            slices.last().unwrap_or(&0)
        );
    }
    Ok(())
}
