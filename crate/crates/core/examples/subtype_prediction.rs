//! Trains tiny ensembles for all four tasks on a small phantom cohort and
//! predicts the five-way subtype of a few held-out patients.
//!
//! cargo run --release --example subtype_prediction

use glioma_subtyping::config::RunConfig;
use glioma_subtyping::hierarchy::{predict_subtype, Branches, HardRule};
use glioma_subtyping::manifest::Split;
use glioma_subtyping::preprocess::{preprocess_manifest, RegistrationMode};
use glioma_subtyping::synth::{generate_synthetic_cohort, SynthConfig};
use glioma_subtyping::train::{load_task_cases, train_task, TaskEnsemble};

fn main() -> glioma_subtyping::Result<()> {
    let work = std::env::temp_dir().join("glioma_subtype_prediction");
    let synth = SynthConfig {
        dims: [40, 40, 12],
        ..Default::default()
    };
    let raw = generate_synthetic_cohort(80, 21, &work.join("raw"), &synth)?;

    let mut cfg = RunConfig::parse(
        "seed = 2\n[roi]\nstack_size = 16\n[model]\narchitecture = \"stub\"\n[train]\nfolds = 3\nmax_epochs = 8\ninitial_lr = 0.003\nbatch_size = 16\n",
    )?;
    cfg.preprocess.target_spacing = [1.0, 1.0, 5.0];
    cfg.preprocess.registration = RegistrationMode::Bypass;
    let prep = preprocess_manifest(&raw, &work.join("prep"), &cfg.preprocess)?;

    let trained = Branches::try_from_fn(|task| {
        let t = train_task(task, &prep, &cfg)?;
        println!("trained {task}: {} members", t.ensemble.members.len());
        Ok::<TaskEnsemble, glioma_subtyping::Error>(t.ensemble)
    })?;
    let ensembles = trained.map(|e| e);

    // any task with every subtype in its cohort would do; grade covers all
    let test = load_task_cases(&prep, glioma_subtyping::taxonomy::ClassificationTask::GradeGbmVsLgg, Some(Split::Test))?;
    for case in test.iter().take(6) {
        let truth = prep.get(&case.id).map(|r| r.subtype);
        let pred = predict_subtype(&ensembles, &case.volumes, &case.mask, &cfg.roi, HardRule::VoteRouting)?;
        let leaf: Vec<String> = pred.leaf_probs.values().map(|p| format!("{p:.2}")).collect();
        println!("{}: true {:?}, predicted {} [{}]", case.id, truth.unwrap(), pred.hard_subtype, leaf.join(" "));
    }
    Ok(())
}
