//! Command-line front end. Every subcommand maps onto one library call,
//! writes a provenance sidecar next to each artifact and holds a lock on
//! its output directory.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 data or validation
//! error, 4 training failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hierarchy::{predict_subtype, Branches, HardRule};
use crate::manifest::{read_manifest, write_manifest, Split};
use crate::metrics::{read_roc_table, write_roc_table, RocTable, REPORT_HEADER};
use crate::model::Architecture;
use crate::nifti_io::{read_mask, read_volume};
use crate::plot::{plot_roc, RocPanel};
use crate::preprocess::{preprocess_manifest, RegistrationMode};
use crate::provenance::{write_json, write_sidecar, DirLock};
use crate::roi::build_stack;
use crate::split::resplit;
use crate::synth::{generate_synthetic_cohort, SynthConfig};
use crate::taxonomy::ClassificationTask;
use crate::train::{evaluate_ensemble, load_task_cases, train_task, TaskEnsemble};

#[derive(Debug, Parser)]
#[command(name = "glioma", version, about = "Hierarchical glioma subtyping from T1w, T1CE and T2w MRI")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    /// GBM vs LGG
    Grade,
    /// IDH mutant vs wild type within LGG
    IdhLgg,
    /// 1p/19q codeleted vs not within IDH-mutant LGG
    #[value(name = "1p19q")]
    Codel,
    /// IDH mutant vs wild type within GBM
    IdhGbm,
}

impl From<TaskArg> for ClassificationTask {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Grade => ClassificationTask::GradeGbmVsLgg,
            TaskArg::IdhLgg => ClassificationTask::IdhInLgg,
            TaskArg::Codel => ClassificationTask::CodelInIdhMutLgg,
            TaskArg::IdhGbm => ClassificationTask::IdhInGbm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Resnet18,
    Stub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegistrationArg {
    InPlaneRigid,
    Bypass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HardRuleArg {
    VoteRouting,
    Argmax,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// TOML run config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom cohort with a manifest and split.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Volume size as X,Y,Z voxels.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long)]
        test_probability: Option<f64>,
    },
    /// Reassign the train/test split of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest path; defaults to rewriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        test_probability: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Resample, register, transfer masks and normalize every patient.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Target spacing as X,Y,Z millimetres.
        #[arg(long, value_delimiter = ',')]
        target_spacing: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        registration: Option<RegistrationArg>,
    },
    /// Five-fold training of one task on the training split.
    Train {
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Preprocessed manifest.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        architecture: Option<ArchArg>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        stack_size: Option<usize>,
        /// Write each training case's deterministic stack as a PGM here.
        #[arg(long)]
        dump_stacks: Option<PathBuf>,
    },
    /// Score a task ensemble on one split.
    Evaluate {
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Directory written by `train`.
        #[arg(long)]
        ensembles: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Defaults to `<ensembles>/eval-<split>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Five-subtype prediction for one patient from all four ensembles.
    Predict {
        /// Holds one `train` output directory per task, named by task.
        #[arg(long)]
        ensembles_dir: PathBuf,
        /// Patient id from `--manifest`, or `t1w,t1ce,t2w,mask` paths of a
        /// preprocessed patient.
        #[arg(long)]
        patient: String,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "vote-routing")]
        hard_rule: HardRuleArg,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Draw ROC tables as an SVG, one panel per table.
    PlotRoc {
        /// One table per panel, up to four.
        #[arg(required = true, num_args = 1..=4)]
        tables: Vec<PathBuf>,
        /// Second curve for each panel, in the same order.
        #[arg(long, num_args = 1..=4)]
        overlay: Vec<PathBuf>,
        /// Panel titles; default to table file stems.
        #[arg(long, value_delimiter = ',')]
        titles: Vec<String>,
        /// Legend labels of the first and second curve.
        #[arg(long, value_delimiter = ',', default_values_t = ["model".to_string(), "comparison".to_string()])]
        labels: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(msg) => {
            print!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn triple<T: Copy>(v: &[T], what: &str) -> Result<[T; 3]> {
    v.try_into().map_err(|_| usage(format!("{what} needs three values")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs one parsed command and returns the text to print on success.
pub fn run(command: Command) -> Result<String> {
    match command {
        Command::Synth {
            n,
            seed,
            out,
            dims,
            test_probability,
        } => {
            let mut cfg = SynthConfig::default();
            if let Some(d) = dims {
                cfg.dims = triple(&d, "--dims")?;
            }
            if let Some(p) = test_probability {
                cfg.test_probability = p;
            }
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            let _lock = DirLock::acquire(&out)?;
            let m = generate_synthetic_cohort(n, seed, &out, &cfg)?;
            let path = out.join("manifest.jsonl");
            write_sidecar(&path, "synth", &crate::provenance::hash_json(&cfg), seed)?;
            let c = m.split_counts();
            Ok(format!(
                "wrote {} patients to {} ({} train, {} test)\n",
                m.records.len(),
                out.display(),
                c.train,
                c.test
            ))
        }
        Command::Split {
            manifest,
            out,
            test_probability,
            seed,
        } => {
            let mut m = read_manifest(&manifest)?;
            resplit(&mut m, test_probability, seed)?;
            let out = out.unwrap_or(manifest);
            write_manifest(&out, &m)?;
            write_sidecar(&out, "split", &crate::provenance::hash_json(&test_probability), seed)?;
            let c = m.split_counts();
            Ok(format!("{} train, {} test -> {}\n", c.train, c.test, out.display()))
        }
        Command::Preprocess {
            manifest,
            out,
            cfg,
            target_spacing,
            registration,
        } => {
            let mut cfg = cfg.load()?;
            if let Some(s) = target_spacing {
                cfg.preprocess.target_spacing = triple(&s, "--target-spacing")?;
            }
            if let Some(r) = registration {
                cfg.preprocess.registration = match r {
                    RegistrationArg::InPlaneRigid => RegistrationMode::InPlaneRigid,
                    RegistrationArg::Bypass => RegistrationMode::Bypass,
                };
            }
            cfg.validate()?;
            let m = read_manifest(&manifest)?;
            let _lock = DirLock::acquire(&out)?;
            let pm = preprocess_manifest(&m, &out, &cfg.preprocess)?;
            let path = out.join("manifest.jsonl");
            write_manifest(&path, &pm)?;
            write_sidecar(&path, "preprocess", &cfg.hash(), cfg.seed)?;
            Ok(format!("preprocessed {} patients into {}\n", pm.records.len(), out.display()))
        }
        Command::Train {
            task,
            manifest,
            out,
            cfg,
            architecture,
            max_epochs,
            stack_size,
            dump_stacks,
        } => {
            let task = ClassificationTask::from(task);
            let mut cfg = cfg.load()?;
            if let Some(a) = architecture {
                cfg.model.architecture = match a {
                    ArchArg::Resnet18 => Architecture::Resnet18,
                    ArchArg::Stub => Architecture::Stub,
                };
            }
            if let Some(e) = max_epochs {
                cfg.train.max_epochs = e;
            }
            if let Some(s) = stack_size {
                cfg.roi.stack_size = s;
            }
            cfg.validate()?;
            let m = read_manifest(&manifest)?;
            let _lock = DirLock::acquire(&out)?;
            if let Some(dir) = &dump_stacks {
                create_dir(dir)?;
                for c in load_task_cases(&m, task, Some(Split::Train))? {
                    build_stack(&c.volumes, &c.mask, &cfg.roi)?.write_pgm(&dir.join(format!("{}.pgm", c.id)))?;
                }
            }
            let trained = train_task(task, &m, &cfg)?;
            let hash = cfg.hash();
            let mut artifacts = trained.ensemble.save(&out)?;
            for f in &trained.folds {
                let p = out.join(format!("fold{}_validation_roc.csv", f.report.fold));
                write_roc_table(&p, &f.validation_roc)?;
                artifacts.push(p);
            }
            let report = out.join("train_report.json");
            write_json(&report, &trained.report)?;
            artifacts.push(report);
            let resolved = out.join("config.toml");
            write_text(&resolved, &cfg.to_toml())?;
            artifacts.push(resolved);
            for a in &artifacts {
                write_sidecar(a, "train", &hash, cfg.seed)?;
            }
            let mut msg = format!("{task}: {} folds -> {}\n", trained.folds.len(), out.display());
            for f in &trained.report.folds {
                let _ = writeln!(
                    msg,
                    "  fold {}: best epoch {} of {}, validation AUC {:.3}, threshold {:.4}",
                    f.fold, f.best_epoch, f.stop_epoch, f.validation_auc, f.threshold
                );
            }
            Ok(msg)
        }
        Command::Evaluate {
            task,
            ensembles,
            manifest,
            split,
            out,
            cfg,
        } => {
            let task = ClassificationTask::from(task);
            let cfg = match (&cfg.config, ensembles.join("config.toml")) {
                (None, saved) if saved.exists() => ConfigArgs {
                    config: Some(saved),
                    seed: cfg.seed,
                }
                .load()?,
                _ => cfg.load()?,
            };
            let split = Split::from(split);
            let ensemble = TaskEnsemble::load(&ensembles, task)?;
            let m = read_manifest(&manifest)?;
            let cases = load_task_cases(&m, task, Some(split))?;
            if cases.is_empty() {
                return Err(Error::TooFewCases(format!("no {task} cases in the {split:?} split")));
            }
            let eval = evaluate_ensemble(&ensemble, &cases, &cfg.roi)?;
            let out = out.unwrap_or_else(|| ensembles.join(format!("eval-{}", split_name(split))));
            let _lock = DirLock::acquire(&out)?;
            let hash = cfg.hash();
            let mut artifacts = Vec::new();
            let report = out.join("metrics.txt");
            write_text(&report, &format!("{REPORT_HEADER}\n{}\n", eval.report))?;
            artifacts.push(report);
            let json = out.join("metrics.json");
            write_json(&json, &eval.report)?;
            artifacts.push(json);
            let preds = out.join("predictions.csv");
            write_text(&preds, &predictions_csv(&eval))?;
            artifacts.push(preds);
            if let Some(roc) = &eval.roc {
                let table = out.join("roc.csv");
                write_roc_table(&table, roc)?;
                artifacts.push(table.clone());
                let svg = out.join("roc.svg");
                plot_roc(
                    &[RocPanel {
                        title: task.title().to_string(),
                        curves: vec![("ensemble".into(), read_roc_table(&table)?)],
                    }],
                    &svg,
                )?;
                artifacts.push(svg);
            }
            for a in &artifacts {
                write_sidecar(a, "evaluate", &hash, cfg.seed)?;
            }
            Ok(format!("{task} ({} cases)\n{REPORT_HEADER}\n{}\n", cases.len(), eval.report))
        }
        Command::Predict {
            ensembles_dir,
            patient,
            manifest,
            hard_rule,
            cfg,
        } => {
            let grade_dir = ensembles_dir.join(ClassificationTask::GradeGbmVsLgg.cli_name());
            let cfg = match (&cfg.config, grade_dir.join("config.toml")) {
                (None, saved) if saved.exists() => ConfigArgs {
                    config: Some(saved),
                    seed: cfg.seed,
                }
                .load()?,
                _ => cfg.load()?,
            };
            let loaded = Branches::try_from_fn(|t| TaskEnsemble::load(&ensembles_dir.join(t.cli_name()), t))?;
            let (id, volumes, mask) = load_patient(&patient, manifest.as_deref())?;
            let rule = match hard_rule {
                HardRuleArg::VoteRouting => HardRule::VoteRouting,
                HardRuleArg::Argmax => HardRule::Argmax,
            };
            let pred = predict_subtype(&loaded.map(|e| e), &volumes, &mask, &cfg.roi, rule)?;
            #[derive(Serialize)]
            struct Out<'a> {
                patient: &'a str,
                #[serde(flatten)]
                prediction: &'a crate::hierarchy::SubtypePrediction,
            }
            let mut text = serde_json::to_string_pretty(&Out {
                patient: &id,
                prediction: &pred,
            })
            .expect("prediction serializes");
            text.push('\n');
            Ok(text)
        }
        Command::PlotRoc {
            tables,
            overlay,
            titles,
            labels,
            out,
        } => {
            if !overlay.is_empty() && overlay.len() != tables.len() {
                return Err(usage("--overlay needs one table per panel"));
            }
            if !titles.is_empty() && titles.len() != tables.len() {
                return Err(usage("--titles needs one title per panel"));
            }
            if labels.len() != 2 {
                return Err(usage("--labels takes two names"));
            }
            let mut panels = Vec::new();
            for (i, t) in tables.iter().enumerate() {
                let mut curves: Vec<(String, RocTable)> = vec![(labels[0].clone(), read_roc_table(t)?)];
                if let Some(o) = overlay.get(i) {
                    curves.push((labels[1].clone(), read_roc_table(o)?));
                }
                let title = titles.get(i).cloned().unwrap_or_else(|| {
                    t.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
                });
                panels.push(RocPanel { title, curves });
            }
            plot_roc(&panels, &out)?;
            write_sidecar(&out, "plot-roc", &crate::provenance::hash_json(&(tables, overlay)), 0)?;
            Ok(format!("wrote {}\n", out.display()))
        }
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn predictions_csv(eval: &crate::train::Evaluation) -> String {
    let mut s = String::from("id,label,probability,prediction,votes\n");
    for ((id, l), o) in eval.ids.iter().zip(&eval.labels).zip(&eval.outputs) {
        let _ = writeln!(s, "{id},{},{},{},{}", u8::from(*l), o.probability, u8::from(o.prediction), o.votes);
    }
    s
}

type PatientInputs = (String, [crate::volume::Volume; 3], crate::volume::TumorMask);

fn load_patient(patient: &str, manifest: Option<&Path>) -> Result<PatientInputs> {
    let parts: Vec<&str> = patient.split(',').collect();
    if parts.len() == 4 {
        let vols = [read_volume(Path::new(parts[0]))?, read_volume(Path::new(parts[1]))?, read_volume(Path::new(parts[2]))?];
        return Ok((patient.to_string(), vols, read_mask(Path::new(parts[3]))?));
    }
    let manifest = manifest.ok_or_else(|| usage("--patient <id> needs --manifest (or pass four comma-separated paths)"))?;
    let m = read_manifest(manifest)?;
    let rec = m
        .get(patient)
        .ok_or_else(|| Error::Invalid(format!("patient `{patient}` not in {}", manifest.display())))?;
    let vols = [
        read_volume(&rec.volume_paths[0])?,
        read_volume(&rec.volume_paths[1])?,
        read_volume(&rec.volume_paths[2])?,
    ];
    Ok((rec.id.clone(), vols, read_mask(&rec.mask_path)?))
}
