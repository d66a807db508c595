use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lr_at_epoch, make_folds, oversample_factor, rebalance_oversample, Adam};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, Modality, Split};
use crate::metrics::{
    auc, confusion_metrics, ensemble_vote, operating_point, roc_curve, EnsembleOutput, MetricsReport, RocCurve,
};
use crate::model::{init_params, load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Network};
use crate::nifti_io::{read_mask, read_volume};
use crate::provenance::{sha256_file, write_json};
use crate::roi::{augment, build_stack, RoiConfig, Stack25D};
use crate::taxonomy::{derive_binary_label, ClassificationTask};
use crate::volume::{TumorMask, Volume};

const EVAL_CHUNK: usize = 32;
pub const ENSEMBLE_SCHEMA_VERSION: u32 = 1;

/// One in-cohort patient of a task with its binary label.
pub struct TaskCase {
    pub id: String,
    pub label: bool,
    pub volumes: [Volume; 3],
    pub mask: TumorMask,
}

/// Loads the preprocessed patients that belong to `task`, optionally
/// restricted to one split, in manifest order.
pub fn load_task_cases(
    manifest: &DatasetManifest,
    task: ClassificationTask,
    split: Option<Split>,
) -> Result<Vec<TaskCase>> {
    let mut out = Vec::new();
    for rec in &manifest.records {
        if split.is_some_and(|s| manifest.split_of(&rec.id) != Some(s)) {
            continue;
        }
        let Some(label) = derive_binary_label(rec.subtype, task).as_bool() else {
            continue;
        };
        let volumes = [
            read_volume(rec.volume_path(Modality::T1w))?,
            read_volume(rec.volume_path(Modality::T1ce))?,
            read_volume(rec.volume_path(Modality::T2w))?,
        ];
        let mask = read_mask(&rec.mask_path)?;
        out.push(TaskCase {
            id: rec.id.clone(),
            label,
            volumes,
            mask,
        });
    }
    Ok(out)
}

pub(crate) fn predict_all(net: &Network, stacks: &[&Stack25D]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(stacks.len());
    for chunk in stacks.chunks(EVAL_CHUNK) {
        out.extend(net.predict(chunk)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    /// 1-based.
    pub fold: usize,
    pub train_cases: usize,
    pub validation_cases: usize,
    pub oversample_factor: usize,
    pub loss_history: Vec<f64>,
    pub train_auc_history: Vec<f64>,
    pub validation_auc_history: Vec<f64>,
    /// Last epoch run.
    pub stop_epoch: usize,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub validation_auc: f64,
    pub threshold: f64,
}

pub struct FoldResult {
    pub checkpoint: Checkpoint,
    pub validation_roc: RocCurve,
    pub report: FoldReport,
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold as u64)
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(_) => Error::Divergence { epoch },
        other => other,
    }
}

/// Trains one fold. `eval_stacks[i]` is the deterministic stack of
/// `cases[i]`; `fold` is 1-based.
#[allow(clippy::too_many_arguments)]
pub fn train_fold(
    task: ClassificationTask,
    cases: &[TaskCase],
    eval_stacks: &[Stack25D],
    train_idx: &[usize],
    val_idx: &[usize],
    fold: usize,
    cfg: &RunConfig,
    config_hash: &str,
) -> Result<FoldResult> {
    let tc = &cfg.train;
    let mut net = init_params(&cfg.model, fold_seed(cfg.seed, fold))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(fold as u64);

    let train_labels: Vec<bool> = train_idx.iter().map(|&i| cases[i].label).collect();
    let val_labels: Vec<bool> = val_idx.iter().map(|&i| cases[i].label).collect();
    let n_pos = train_labels.iter().filter(|&&l| l).count();
    let factor = oversample_factor(n_pos, train_labels.len() - n_pos)?;
    let pool: Vec<usize> = rebalance_oversample(&train_labels)?
        .into_iter()
        .map(|i| train_idx[i])
        .collect();
    let train_stacks: Vec<&Stack25D> = train_idx.iter().map(|&i| &eval_stacks[i]).collect();
    let val_stacks: Vec<&Stack25D> = val_idx.iter().map(|&i| &eval_stacks[i]).collect();

    let rule = tc.stop_rule();
    let mut opt = Adam::new(tc);
    let (mut losses, mut train_hist, mut val_hist) = (Vec::new(), Vec::new(), Vec::new());
    let mut best: Option<(usize, Network, Vec<f64>)> = None;
    for epoch in 1..=tc.max_epochs {
        let lr = lr_at_epoch(epoch as i64 - 1, tc)?;
        let mut order = pool.clone();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let augmented: Vec<Stack25D> = if cfg.augment.enabled {
                batch
                    .iter()
                    .map(|&i| augment(&cases[i].volumes, &cases[i].mask, &cfg.roi, &cfg.augment, &mut rng))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };
            let refs: Vec<&Stack25D> = if cfg.augment.enabled {
                augmented.iter().collect()
            } else {
                batch.iter().map(|&i| &eval_stacks[i]).collect()
            };
            let labels: Vec<bool> = batch.iter().map(|&i| cases[i].label).collect();
            net.zero_grad();
            let loss = net.train_step_grads(&refs, &labels).map_err(diverged(epoch))?;
            opt.step(&mut net, lr);
            loss_sum += loss * batch.len() as f64;
        }
        losses.push(loss_sum / order.len() as f64);

        let train_probs = predict_all(&net, &train_stacks).map_err(diverged(epoch))?;
        train_hist.push(auc(&train_probs, &train_labels)?);
        let val_probs = predict_all(&net, &val_stacks).map_err(diverged(epoch))?;
        let val_auc = auc(&val_probs, &val_labels)?;
        val_hist.push(val_auc);
        if best.as_ref().is_none_or(|(e, _, _)| val_auc > val_hist[e - 1]) {
            best = Some((epoch, net.clone(), val_probs));
        }
        if rule.should_stop(&train_hist) {
            break;
        }
    }

    let (best_epoch, best_net, best_probs) = best.expect("at least one epoch runs");
    let roc = roc_curve(&best_probs, &val_labels)?;
    let op = operating_point(&roc)?;
    let report = FoldReport {
        fold,
        train_cases: train_idx.len(),
        validation_cases: val_idx.len(),
        oversample_factor: factor,
        loss_history: losses,
        stop_epoch: train_hist.len(),
        train_auc_history: train_hist,
        validation_auc: val_hist[best_epoch - 1],
        validation_auc_history: val_hist,
        best_epoch,
        threshold: op.threshold,
    };
    Ok(FoldResult {
        checkpoint: Checkpoint {
            meta: CheckpointMeta {
                task,
                fold,
                epoch: best_epoch,
                validation_auc: report.validation_auc,
                threshold: op.threshold,
                config_hash: config_hash.to_string(),
                architecture: best_net.architecture(),
                pooling: best_net.pooling,
            },
            network: best_net,
        },
        validation_roc: roc,
        report,
    })
}

/// Five (or `folds`) checkpoints of one task with their thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEnsemble {
    pub task: ClassificationTask,
    pub members: Vec<Checkpoint>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleIndex {
    schema_version: u32,
    task: ClassificationTask,
    members: Vec<EnsembleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleEntry {
    file: String,
    sha256: String,
    threshold: f64,
}

impl TaskEnsemble {
    pub fn new(task: ClassificationTask, members: Vec<Checkpoint>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::MissingEnsemble(task.cli_name().into()));
        }
        if let Some(m) = members.iter().find(|m| m.meta.task != task) {
            return Err(Error::Invalid(format!(
                "checkpoint for {} in the {task} ensemble",
                m.meta.task
            )));
        }
        Ok(TaskEnsemble { task, members })
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.meta.threshold).collect()
    }

    /// Mean probability and threshold majority vote for each stack.
    pub fn predict(&self, stacks: &[&Stack25D]) -> Result<Vec<EnsembleOutput>> {
        let per_member = self
            .members
            .iter()
            .map(|m| predict_all(&m.network, stacks))
            .collect::<Result<Vec<_>>>()?;
        let thresholds = self.thresholds();
        (0..stacks.len())
            .map(|i| {
                let probs: Vec<f64> = per_member.iter().map(|p| p[i]).collect();
                ensemble_vote(&probs, &thresholds)
            })
            .collect()
    }

    /// Writes `fold<k>.ckpt` files and an `ensemble.json` index into `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::new();
        let mut paths = Vec::new();
        for m in &self.members {
            let file = format!("fold{}.ckpt", m.meta.fold);
            let p = dir.join(&file);
            save_checkpoint(m, &p)?;
            entries.push(EnsembleEntry {
                file,
                sha256: sha256_file(&p)?,
                threshold: m.meta.threshold,
            });
            paths.push(p);
        }
        let index = EnsembleIndex {
            schema_version: ENSEMBLE_SCHEMA_VERSION,
            task: self.task,
            members: entries,
        };
        let ip = dir.join("ensemble.json");
        write_json(&ip, &index)?;
        paths.push(ip);
        Ok(paths)
    }

    pub fn load(dir: &Path, task: ClassificationTask) -> Result<Self> {
        let ip = dir.join("ensemble.json");
        if !ip.exists() {
            return Err(Error::MissingEnsemble(format!("{} (no {})", task.cli_name(), ip.display())));
        }
        let text = std::fs::read_to_string(&ip).map_err(|e| Error::io(&ip, e))?;
        let index: EnsembleIndex =
            serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", ip.display())))?;
        if index.schema_version != ENSEMBLE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                what: "ensemble index",
                found: index.schema_version,
                expected: ENSEMBLE_SCHEMA_VERSION,
            });
        }
        if index.task != task {
            return Err(Error::Invalid(format!(
                "{} holds a {} ensemble, expected {task}",
                dir.display(),
                index.task
            )));
        }
        let mut members = Vec::new();
        for e in &index.members {
            let p = dir.join(&e.file);
            if sha256_file(&p)? != e.sha256 {
                return Err(Error::CorruptCheckpoint(format!("{} does not match its index checksum", p.display())));
            }
            members.push(load_checkpoint(&p)?);
        }
        Self::new(task, members)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: ClassificationTask,
    pub cohort_size: usize,
    pub positives: usize,
    pub negatives: usize,
    pub seed: u64,
    pub config_hash: String,
    pub folds: Vec<FoldReport>,
}

pub struct TrainedTask {
    pub ensemble: TaskEnsemble,
    pub folds: Vec<FoldResult>,
    pub report: TrainReport,
}

/// Cross-validated training of `task` on the training split of a
/// preprocessed manifest.
pub fn train_task(task: ClassificationTask, manifest: &DatasetManifest, cfg: &RunConfig) -> Result<TrainedTask> {
    let cases = load_task_cases(manifest, task, Some(Split::Train))?;
    train_task_on(task, &cases, cfg)
}

pub fn train_task_on(task: ClassificationTask, cases: &[TaskCase], cfg: &RunConfig) -> Result<TrainedTask> {
    cfg.validate()?;
    let k = cfg.train.folds;
    let labels: Vec<bool> = cases.iter().map(|c| c.label).collect();
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives < k || negatives < k {
        return Err(Error::TooFewCases(format!(
            "{task} needs at least {k} cases per class for {k}-fold training, got {positives} positive and {negatives} negative"
        )));
    }
    let config_hash = cfg.hash();
    let eval_stacks: Vec<Stack25D> = cases
        .iter()
        .map(|c| build_stack(&c.volumes, &c.mask, &cfg.roi))
        .collect::<Result<_>>()?;
    let folds = make_folds(&labels, k, cfg.seed)?;
    let mut results = Vec::with_capacity(k);
    for (f, val_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = (0..cases.len()).filter(|i| !val_idx.contains(i)).collect();
        results.push(train_fold(task, cases, &eval_stacks, &train_idx, val_idx, f + 1, cfg, &config_hash)?);
    }
    let report = TrainReport {
        task,
        cohort_size: cases.len(),
        positives,
        negatives,
        seed: cfg.seed,
        config_hash,
        folds: results.iter().map(|r| r.report.clone()).collect(),
    };
    let ensemble = TaskEnsemble::new(task, results.iter().map(|r| r.checkpoint.clone()).collect())?;
    Ok(TrainedTask {
        ensemble,
        folds: results,
        report,
    })
}

/// Test-set result of one task ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub task: ClassificationTask,
    pub ids: Vec<String>,
    pub labels: Vec<bool>,
    pub outputs: Vec<EnsembleOutput>,
    /// ROC of the mean ensemble probability; `None` when the cases hold a
    /// single class.
    pub roc: Option<RocCurve>,
    pub report: MetricsReport,
}

/// Scores `cases` with the ensemble on deterministic stacks.
pub fn evaluate_ensemble(ensemble: &TaskEnsemble, cases: &[TaskCase], roi: &RoiConfig) -> Result<Evaluation> {
    let stacks: Vec<Stack25D> = cases
        .iter()
        .map(|c| build_stack(&c.volumes, &c.mask, roi))
        .collect::<Result<_>>()?;
    let refs: Vec<&Stack25D> = stacks.iter().collect();
    let outputs = ensemble.predict(&refs)?;
    let labels: Vec<bool> = cases.iter().map(|c| c.label).collect();
    let probs: Vec<f64> = outputs.iter().map(|o| o.probability).collect();
    let preds: Vec<bool> = outputs.iter().map(|o| o.prediction).collect();
    let report = confusion_metrics(&preds, &labels)?;
    let (roc, report) = match roc_curve(&probs, &labels) {
        Ok(roc) => {
            let auc = roc.auc;
            (Some(roc), report.with_auc(auc))
        }
        Err(Error::SingleClass) => (None, report),
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        task: ensemble.task,
        ids: cases.iter().map(|c| c.id.clone()).collect(),
        labels,
        outputs,
        roc,
        report,
    })
}
