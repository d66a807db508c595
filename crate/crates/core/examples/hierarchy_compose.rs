//! Leaf probabilities from the four branch probabilities and the hard
//! subtype from vote routing, for every combination of branch votes.
//!
//! cargo run --release --example hierarchy_compose

use glioma_subtyping::hierarchy::{compose_leaf_probs, route_votes, Branches, HardRule, SubtypePrediction};

fn main() -> glioma_subtyping::Result<()> {
    let probs = Branches {
        gbm: 0.2,
        idh_lgg: 0.9,
        codel: 0.3,
        idh_gbm: 0.1,
    };
    let leaf = compose_leaf_probs(probs)?;
    println!("leaf probabilities I..V: {leaf:.3?} (sum {})", leaf.iter().sum::<f64>());

    let votes = probs.map(|&p| p >= 0.5);
    for rule in [HardRule::VoteRouting, HardRule::Argmax] {
        let pred = SubtypePrediction::new(probs, votes, rule)?;
        println!("{rule:?}: {}", pred.hard_subtype);
    }

    println!("\ngbm idh_lgg codel idh_gbm -> subtype");
    for bits in 0..16u8 {
        let v = Branches {
            gbm: bits & 8 != 0,
            idh_lgg: bits & 4 != 0,
            codel: bits & 2 != 0,
            idh_gbm: bits & 1 != 0,
        };
        println!(
            "  {}   {}       {}     {}       -> {}",
            u8::from(v.gbm),
            u8::from(v.idh_lgg),
            u8::from(v.codel),
            u8::from(v.idh_gbm),
            route_votes(v)
        );
    }
    Ok(())
}
