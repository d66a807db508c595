//! Generates a small phantom cohort and prints per-subtype counts, the
//! split and the lesion cue parameters of one patient per subtype.
//!
//! cargo run --release --example synthetic_cohort -- [n] [out_dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use glioma_subtyping::synth::{generate_synthetic_cohort, LesionParams, SynthConfig};
use glioma_subtyping::taxonomy::GliomaSubtype;

fn main() -> glioma_subtyping::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(50, |s| s.parse().expect("patient count"));
    let out = args
        .next()
        .map_or_else(|| std::env::temp_dir().join("glioma_synth"), PathBuf::from);
    let manifest = generate_synthetic_cohort(n, 7, &out, &SynthConfig::default())?;

    let mut counts: BTreeMap<GliomaSubtype, usize> = BTreeMap::new();
    for r in &manifest.records {
        *counts.entry(r.subtype).or_default() += 1;
    }
    println!("{} patients in {}", manifest.records.len(), out.display());
    for (s, c) in &counts {
        println!("  {s:>3}  {c:>4}  {}", s.description());
    }
    let split = manifest.split_counts();
    println!("split: {} train, {} test", split.train, split.test);

    println!("\nnominal lesion cues (rim, necrosis, T2 heterogeneity, T1 hypointensity, size)");
    for s in GliomaSubtype::ALL {
        let p = LesionParams::nominal(s);
        println!(
            "  {s:>3}  {:.2} {:.2} {:.2} {:.2} {:.2}",
            p.rim_enhancement, p.necrosis, p.t2_heterogeneity, p.t1_hypointensity, p.size_factor
        );
    }
    Ok(())
}
