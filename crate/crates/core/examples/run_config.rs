//! Loads the desk-scale run config, shows the resolved values and its hash,
//! and demonstrates that unknown keys are rejected.
//!
//! cargo run --release --example run_config

use std::path::PathBuf;

use glioma_subtyping::config::RunConfig;

fn main() -> glioma_subtyping::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic_stub.toml");
    let cfg = RunConfig::load(&path)?;
    println!("# resolved from {}\n{}", path.display(), cfg.to_toml());
    println!("config hash {}", cfg.hash());
    println!("defaults hash {}", RunConfig::default().hash());
    match RunConfig::parse("[train]\nlearnig_rate = 0.1\n") {
        Err(e) => println!("typo rejected: {e}"),
        Ok(_) => println!("unexpected: typo accepted"),
    }
    Ok(())
}
