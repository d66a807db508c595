//! Backbone weights in safetensors format with torchvision tensor names
//! (`conv1.weight`, `layer2.0.downsample.1.running_var`, ...). Classifier
//! tensors (`fc.*`) and `num_batches_tracked` counters are ignored.

use std::path::Path;

use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use sha2::{Digest, Sha256};

use super::Backbone;
use crate::error::{Error, Result};
use crate::nn::Visit;

fn to_f64(view: &TensorView<'_>) -> Result<Vec<f64>> {
    let data = view.data();
    Ok(match view.dtype() {
        Dtype::F32 => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F64 => data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        other => return Err(Error::Pretrained(format!("unsupported dtype {other:?}"))),
    })
}

pub fn load_pretrained_backbone(backbone: &mut Backbone, path: &Path, expected_sha256: Option<&str>) -> Result<()> {
    if !path.exists() {
        return Err(Error::Pretrained(format!("weight file {} not found", path.display())));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if let Some(want) = expected_sha256 {
        let got = hex::encode(Sha256::digest(&bytes));
        if !got.eq_ignore_ascii_case(want.trim()) {
            return Err(Error::Pretrained(format!(
                "checksum mismatch for {}: expected {want}, got {got}",
                path.display()
            )));
        }
    }
    let st = SafeTensors::deserialize(&bytes)
        .map_err(|e| Error::Pretrained(format!("{}: {e}", path.display())))?;
    let mut problem: Option<String> = None;
    backbone.visit("", &mut |name, _, p| {
        if problem.is_some() {
            return;
        }
        match st.tensor(name) {
            Ok(view) if view.shape() == p.shape.as_slice() => match to_f64(&view) {
                Ok(v) => p.value = v,
                Err(e) => problem = Some(e.to_string()),
            },
            Ok(view) => {
                problem = Some(format!("{name} has shape {:?}, expected {:?}", view.shape(), p.shape));
            }
            Err(_) => problem = Some(format!("tensor {name} missing")),
        }
    });
    match problem {
        Some(m) => Err(Error::Pretrained(m)),
        None => Ok(()),
    }
}

/// Writes the backbone as f32 safetensors under torchvision names.
pub fn save_backbone_safetensors(backbone: &Backbone, path: &Path) -> Result<()> {
    let mut named: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    backbone.clone().visit("", &mut |name, _, p| {
        let bytes = p.value.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        named.push((name.to_string(), p.shape.clone(), bytes));
    });
    let views = named
        .iter()
        .map(|(n, s, b)| {
            TensorView::new(Dtype::F32, s.clone(), b)
                .map(|v| (n.clone(), v))
                .map_err(|e| Error::Pretrained(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::tensor::serialize_to_file(views, &None, path).map_err(|e| Error::Pretrained(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Architecture, ModelConfig, PretrainedInit};
    use crate::provenance::sha256_file;

    #[test]
    fn round_trip_with_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stub.safetensors");
        let src = init_params(&ModelConfig::stub(), 4).unwrap();
        save_backbone_safetensors(&src.backbone, &p).unwrap();
        let sum = sha256_file(&p).unwrap();
        let cfg = ModelConfig {
            init: PretrainedInit::NaturalImageCorpus,
            pretrained_weights: Some(p.clone()),
            pretrained_sha256: Some(sum),
            ..ModelConfig::stub()
        };
        let net = init_params(&cfg, 99).unwrap();
        for ((n, _, a), (_, _, b)) in net.named_tensors().iter().zip(src.named_tensors()) {
            if n.starts_with("backbone") {
                for (x, y) in a.iter().zip(&b) {
                    assert_eq!(*x, *y as f32 as f64);
                }
            }
        }
        let bad = ModelConfig {
            pretrained_sha256: Some("00".repeat(32)),
            ..cfg.clone()
        };
        assert!(matches!(init_params(&bad, 1), Err(Error::Pretrained(_))));
        let missing = ModelConfig {
            pretrained_weights: Some(dir.path().join("nope.safetensors")),
            pretrained_sha256: None,
            ..cfg.clone()
        };
        assert!(matches!(init_params(&missing, 1), Err(Error::Pretrained(_))));
        let wrong_arch = ModelConfig {
            architecture: Architecture::Resnet18,
            pretrained_sha256: None,
            ..cfg
        };
        assert!(matches!(init_params(&wrong_arch, 1), Err(Error::Pretrained(_))));
    }
}
