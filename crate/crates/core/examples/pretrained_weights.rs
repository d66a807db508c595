//! Exports a backbone as safetensors with torchvision tensor names and
//! loads it back as a pretrained initialization with checksum pinning.
//!
//! cargo run --release --example pretrained_weights

use glioma_subtyping::model::{init_params, save_backbone_safetensors, Architecture, ModelConfig, PretrainedInit};
use glioma_subtyping::provenance::sha256_file;

fn main() -> glioma_subtyping::Result<()> {
    let dir = std::env::temp_dir().join("glioma_pretrained");
    std::fs::create_dir_all(&dir).map_err(|e| glioma_subtyping::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("resnet18_backbone.safetensors");

    let source = init_params(&ModelConfig::default(), 42)?;
    save_backbone_safetensors(&source.backbone, &path)?;
    let sha = sha256_file(&path)?;
    println!("wrote {} (sha256 {sha})", path.display());

    let cfg = ModelConfig {
        architecture: Architecture::Resnet18,
        init: PretrainedInit::NaturalImageCorpus,
        pretrained_weights: Some(path.clone()),
        pretrained_sha256: Some(sha),
        ..Default::default()
    };
    let net = init_params(&cfg, 7)?;
    let same = net
        .named_tensors()
        .iter()
        .zip(source.named_tensors())
        .filter(|(a, _)| a.0.starts_with("backbone."))
        .all(|(a, b)| a.2.iter().zip(&b.2).all(|(x, y)| (*x as f32) == (*y as f32)));
    println!("backbone matches the exported weights at f32 precision: {same}");

    let wrong = ModelConfig {
        pretrained_sha256: Some("0".repeat(64)),
        ..cfg
    };
    match init_params(&wrong, 7) {
        Err(e) => println!("pinned checksum mismatch is refused: {e}"),
        Ok(_) => println!("unexpected: mismatched checksum accepted"),
    }
    Ok(())
}
