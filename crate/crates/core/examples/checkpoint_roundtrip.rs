//! Saves a checkpoint, reloads it bit-exactly and shows that a flipped
//! byte is caught by the checksum.
//!
//! cargo run --release --example checkpoint_roundtrip

use glioma_subtyping::model::{encode_checkpoint, decode_checkpoint, init_params, Checkpoint, CheckpointMeta, ModelConfig};
use glioma_subtyping::taxonomy::ClassificationTask;

fn main() -> glioma_subtyping::Result<()> {
    let cfg = ModelConfig::stub();
    let network = init_params(&cfg, 9)?;
    let ckpt = Checkpoint {
        meta: CheckpointMeta {
            task: ClassificationTask::IdhInLgg,
            fold: 3,
            epoch: 14,
            validation_auc: 0.93,
            threshold: 0.47,
            config_hash: "example".into(),
            architecture: network.architecture(),
            pooling: network.pooling,
        },
        network,
    };
    let bytes = encode_checkpoint(&ckpt)?;
    println!("encoded {} bytes, {} tensors", bytes.len(), ckpt.network.named_tensors().len());
    let back = decode_checkpoint(&bytes)?;
    println!("round trip identical: {}", back == ckpt);

    let mut damaged = bytes.clone();
    let mid = damaged.len() / 2;
    damaged[mid] ^= 0x01;
    match decode_checkpoint(&damaged) {
        Err(e) => println!("damaged file rejected: {e}"),
        Ok(_) => println!("unexpected: damaged file accepted"),
    }
    Ok(())
}
