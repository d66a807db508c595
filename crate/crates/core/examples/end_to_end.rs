//! Synthetic cohort through preprocessing, four-task training and test-set
//! evaluation, using the desk-scale config.
//!
//! cargo run --release --example end_to_end -- [n_patients] [work_dir]

use std::path::PathBuf;
use std::time::Instant;

use glioma_subtyping::config::RunConfig;
use glioma_subtyping::manifest::Split;
use glioma_subtyping::metrics::REPORT_HEADER;
use glioma_subtyping::preprocess::preprocess_manifest;
use glioma_subtyping::synth::{generate_synthetic_cohort, SynthConfig};
use glioma_subtyping::taxonomy::ClassificationTask;
use glioma_subtyping::train::{evaluate_ensemble, load_task_cases, train_task};

fn main() -> glioma_subtyping::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(200, |s| s.parse().expect("patient count"));
    let work = args
        .next()
        .map_or_else(|| std::env::temp_dir().join("glioma_end_to_end"), PathBuf::from);
    let cfg = RunConfig::load(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic_stub.toml"))?;

    let t = Instant::now();
    let raw = generate_synthetic_cohort(n, cfg.seed, &work.join("raw"), &SynthConfig::default())?;
    println!("synth: {n} patients in {:.1?}", t.elapsed());
    let t = Instant::now();
    let prep = preprocess_manifest(&raw, &work.join("prep"), &cfg.preprocess)?;
    println!("preprocess: {:.1?}", t.elapsed());

    println!("{:<8} {REPORT_HEADER}", "task");
    for task in ClassificationTask::ALL {
        let t = Instant::now();
        let trained = train_task(task, &prep, &cfg)?;
        let stops: Vec<usize> = trained.report.folds.iter().map(|f| f.stop_epoch).collect();
        let test = load_task_cases(&prep, task, Some(Split::Test))?;
        let eval = evaluate_ensemble(&trained.ensemble, &test, &cfg.roi)?;
        println!(
            "{:<8} {}   (stops {stops:?}, {} test cases, {:.1?})",
            task.cli_name(),
            eval.report,
            test.len(),
            t.elapsed()
        );
    }
    Ok(())
}
