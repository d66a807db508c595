//! ROC curve, exact AUC, Youden operating point, confusion metrics and a
//! five-member ensemble vote on a toy score set; writes the ROC table and
//! an SVG.
//!
//! cargo run --release --example roc_metrics

use glioma_subtyping::metrics::{
    confusion_metrics, ensemble_vote, operating_point, read_roc_table, roc_curve, write_roc_table, REPORT_HEADER,
};
use glioma_subtyping::plot::{plot_roc, RocPanel};

fn main() -> glioma_subtyping::Result<()> {
    let scores = [0.95, 0.9, 0.8, 0.8, 0.7, 0.6, 0.55, 0.4, 0.3, 0.2, 0.1, 0.05];
    let labels = [true, true, false, true, true, false, true, false, false, true, false, false];
    let roc = roc_curve(&scores, &labels)?;
    println!("AUC {:.4} over {} positives and {} negatives", roc.auc, roc.positives, roc.negatives);
    for p in &roc.points {
        println!("  t={:<5} fpr={:.3} tpr={:.3}", p.threshold, p.fpr, p.tpr);
    }
    let op = operating_point(&roc)?;
    println!("Youden point: threshold {}, J = {:.3}", op.threshold, op.youden);

    let preds: Vec<bool> = scores.iter().map(|&s| s >= op.threshold).collect();
    let report = confusion_metrics(&preds, &labels)?.with_auc(roc.auc);
    println!("{REPORT_HEADER}\n{report}");

    let vote = ensemble_vote(&[0.62, 0.48, 0.71, 0.55, 0.40], &[0.5, 0.5, 0.6, 0.6, 0.45])?;
    println!("ensemble: mean p {:.3}, {} of 5 votes, prediction {}", vote.probability, vote.votes, vote.prediction);

    let dir = std::env::temp_dir().join("glioma_roc");
    std::fs::create_dir_all(&dir).map_err(|e| glioma_subtyping::Error::Io { path: dir.clone(), source: e })?;
    let table = dir.join("roc.csv");
    write_roc_table(&table, &roc)?;
    plot_roc(
        &[RocPanel {
            title: "toy".into(),
            curves: vec![("scores".into(), read_roc_table(&table)?)],
        }],
        &dir.join("roc.svg"),
    )?;
    println!("wrote {} and roc.svg", table.display());
    Ok(())
}
