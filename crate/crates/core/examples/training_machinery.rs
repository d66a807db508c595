//! The schedule, rebalancing, fold and stopping rules that drive training,
//! shown on the reference class counts.
//!
//! cargo run --release --example training_machinery

use glioma_subtyping::train::{lr_at_epoch, make_folds, rebalance_oversample, select_best_epoch, TrainConfig};

fn main() -> glioma_subtyping::Result<()> {
    let cfg = TrainConfig::default();
    for ep in [0, 1, 10, 50, 100] {
        println!("lr at epoch index {ep:>3}: {:.6e}", lr_at_epoch(ep, &cfg)?);
    }

    // IDH status within GBMs: 60 mutant vs 275 wild type
    let mut labels = vec![true; 60];
    labels.extend(vec![false; 275]);
    let pool = rebalance_oversample(&labels)?;
    let pos = pool.iter().filter(|&&i| labels[i]).count();
    println!("rebalanced pool: {pos} positive, {} negative", pool.len() - pos);

    let folds = make_folds(&labels, cfg.folds, 0)?;
    for (k, f) in folds.iter().enumerate() {
        let p = f.iter().filter(|&&i| labels[i]).count();
        println!("fold {}: {} cases, {p} positive", k + 1, f.len());
    }

    let rule = cfg.stop_rule();
    let history: Vec<f64> = (1..=60).map(|e| 1.0 - 0.5 * 0.85f64.powi(e)).collect();
    let crossing = rule.first_crossing(&history);
    println!("train AUC first exceeds {} at epoch {crossing:?}; training halts after epoch {:?}", rule.threshold, rule.halting_epoch(&history));
    let val = [0.71, 0.80, 0.86, 0.86, 0.84];
    println!("best validation epoch of {val:?}: {:?}", select_best_epoch(&val));
    Ok(())
}
