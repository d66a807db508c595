//! Parameter counts of both backbones and the slice-order invariance of the
//! max-fused network on a random stack.
//!
//! cargo run --release --example network_forward

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use glioma_subtyping::model::{init_params, Architecture, ModelConfig};
use glioma_subtyping::nn::{ParamKind, Visit};
use glioma_subtyping::roi::{RoiRect, Stack25D};

fn main() -> glioma_subtyping::Result<()> {
    for arch in [Architecture::Resnet18, Architecture::Stub] {
        let cfg = ModelConfig {
            architecture: arch,
            ..Default::default()
        };
        let mut net = init_params(&cfg, 0)?;
        let mut trainable = 0;
        net.visit("", &mut |_, kind, p| {
            if kind == ParamKind::Trainable {
                trainable += p.value.len();
            }
        });
        println!("{arch:?}: {} features, {trainable} trainable parameters", net.feature_dim());
    }

    let net = init_params(&ModelConfig::stub(), 1)?;
    let size = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let stack = Stack25D {
        size,
        data: (0..9 * size * size).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        triplet: [4, 6, 8],
        roi: RoiRect {
            row_min: 0,
            row_max: size - 1,
            col_min: 0,
            col_max: size - 1,
            margin_fraction: 0.0,
        },
    };
    let reversed = Stack25D {
        data: [2, 1, 0].iter().flat_map(|&s| stack.slice(s).to_vec()).collect(),
        ..stack.clone()
    };
    let p = net.predict(&[&stack, &reversed])?;
    println!("p(stack) = {:.12}, p(reversed slices) = {:.12}", p[0], p[1]);
    Ok(())
}
