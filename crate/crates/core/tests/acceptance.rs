//! Acceptance suite: one PASS/FAIL line per criterion. Criteria 7 and 8 run
//! the full command-line pipeline on a 200-patient synthetic cohort twice,
//! which takes several minutes on one CPU core.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use glioma_subtyping::cli::run_command;
use glioma_subtyping::hierarchy::{compose_leaf_probs, Branches};
use glioma_subtyping::metrics::{auc, operating_point, roc_curve};
use glioma_subtyping::model::{init_params, ModelConfig};
use glioma_subtyping::nn::Tensor;
use glioma_subtyping::preprocess::{
    normalize_intensity, output_len, register_rigid, resample_into, resample_volume, Interpolation, RigidTransform,
};
use glioma_subtyping::roi::{RoiRect, Stack25D};
use glioma_subtyping::synth::{generate_patient, patient_rng, SynthConfig};
use glioma_subtyping::taxonomy::{derive_binary_label, BinaryLabel, ClassificationTask, GliomaSubtype};
use glioma_subtyping::train::{lr_at_epoch, make_folds, oversample_factor, TrainConfig};
use glioma_subtyping::volume::{Grid, Volume};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(2..=200);
    // a coarse score grid forces ties
    let levels = rng.gen_range(2..=40);
    let prevalence = rng.gen_range(0.1..0.9);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(prevalence)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
    (scores, labels)
}

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Best `(threshold, youden)` over every distinct score used as a
/// `score >= t` cut: largest J, then more true positives, then lower cut.
fn scan_operating_point(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let p = labels.iter().filter(|&&l| l).count() as i64;
    let n = labels.len() as i64 - p;
    let mut cuts = scores.to_vec();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut best: Option<(i64, i64, f64)> = None;
    for &t in &cuts {
        let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= t).count() as i64;
        let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as i64;
        let j = tp * n - fp * p;
        let better = match best {
            None => true,
            Some((bj, btp, _)) => j > bj || (j == bj && tp > btp),
        };
        if better {
            best = Some((j, tp, t));
        }
    }
    let (j, _, t) = best.expect("at least one cut");
    (t, j as f64 / (p * n) as f64)
}

fn criterion_1() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 1000;
    let mut worst = 0.0f64;
    for k in 0..trials {
        let (s, l) = random_instance(&mut rng);
        let a = auc(&s, &l).map_err(|e| e.to_string())?;
        let b = pairwise_auc(&s, &l);
        worst = worst.max((a - b).abs());
        ensure((a - b).abs() <= 1e-12, || format!("instance {k}: AUC {a} vs pairwise {b}"))?;
        let op = operating_point(&roc_curve(&s, &l).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let (t, j) = scan_operating_point(&s, &l);
        ensure(op.threshold == t && (op.youden - j).abs() <= 1e-12, || {
            format!("instance {k}: operating point ({}, {}) vs scan ({t}, {j})", op.threshold, op.youden)
        })?;
    }
    Ok(format!("{trials} AUC and {trials} operating-point instances agree (max AUC gap {worst:.1e})"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Check {
    use BinaryLabel::{Negative as N, NotInCohort as X, Positive as P};
    // rows: subtypes I..V; columns: grade, idh-lgg, 1p19q, idh-gbm
    let table = [[N, P, P, X], [N, P, N, X], [N, N, X, X], [P, X, X, P], [P, X, X, N]];
    for (s, row) in GliomaSubtype::ALL.iter().zip(table) {
        for (t, want) in ClassificationTask::ALL.iter().zip(row) {
            let got = derive_binary_label(*s, *t);
            ensure(got == want, || format!("{s} / {t}: {got:?}, expected {want:?}"))?;
        }
    }
    Ok("20 of 20 subtype/task labels match".into())
}

// ---------------------------------------------------------------- 3

fn random_stack(rng: &mut ChaCha8Rng, size: usize) -> Stack25D {
    Stack25D {
        size,
        data: (0..9 * size * size).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        triplet: [0, 2, 4],
        roi: RoiRect {
            row_min: 0,
            row_max: size - 1,
            col_min: 0,
            col_max: size - 1,
            margin_fraction: 0.0,
        },
    }
}

fn permute(s: &Stack25D, order: [usize; 3]) -> Stack25D {
    let data = order.iter().flat_map(|&i| s.slice(i).to_vec()).collect();
    Stack25D { data, ..s.clone() }
}

fn criterion_3() -> Check {
    let cfg = ModelConfig::stub();
    let net = init_params(&cfg, 5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let size = 16;

    let mut worst_perm = 0.0f64;
    for _ in 0..5 {
        let s = random_stack(&mut rng, size);
        let base = net.logits(&[&s]).map_err(|e| e.to_string())?[0];
        for order in [[1, 0, 2], [2, 1, 0], [1, 2, 0], [2, 0, 1], [0, 2, 1]] {
            let p = permute(&s, order);
            let z = net.logits(&[&p]).map_err(|e| e.to_string())?[0];
            worst_perm = worst_perm.max((z - base).abs());
        }
    }
    ensure(worst_perm <= 1e-6, || format!("slice permutation changed the logit by {worst_perm:e}"))?;

    let s = random_stack(&mut rng, size);
    let one: Vec<f64> = s.slice(1).to_vec();
    let dup = Stack25D {
        data: one.repeat(3),
        ..s.clone()
    };
    let fused = net.fused_features(&[&dup]).map_err(|e| e.to_string())?;
    let single = net.image_features(&Tensor::from_vec([1, 3, size, size], one));
    let dup_gap = fused.iter().zip(&single).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(dup_gap == 0.0, || format!("max(x, x, x) differs from x by {dup_gap:e}"))?;

    let stacks: Vec<Stack25D> = (0..4).map(|_| random_stack(&mut rng, size)).collect();
    let refs: Vec<&Stack25D> = stacks.iter().collect();
    let labels = [true, false, false, true];
    let (_, dw, db) = net.head_loss_and_grad(&refs, &labels).map_err(|e| e.to_string())?;
    let h = 1e-6;
    let mut analytic = dw.clone();
    analytic.push(db);
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..=dw.len() {
        let loss_at = |delta: f64| -> std::result::Result<f64, String> {
            let mut n2 = net.clone();
            if i < dw.len() {
                n2.head_weight.value[i] += delta;
            } else {
                n2.head_bias.value[0] += delta;
            }
            Ok(n2.head_loss_and_grad(&refs, &labels).map_err(|e| e.to_string())?.0)
        };
        numeric.push((loss_at(h)? - loss_at(-h)?) / (2.0 * h));
    }
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let rel = norm(&mut analytic.iter().zip(&numeric).map(|(a, n)| a - n))
        / (norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied()));
    ensure(rel <= 1e-3, || format!("head gradient relative error {rel:e}"))?;
    Ok(format!(
        "permutation gap {worst_perm:.1e}, duplication gap {dup_gap:.1e}, head gradient error {rel:.1e}"
    ))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Check {
    let cfg = TrainConfig::default();
    let rule = cfg.stop_rule();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let crossing = rng.gen_range(1..=260usize);
        let hist: Vec<f64> = (1..=260)
            .map(|e| if e < crossing { rng.gen_range(0.5..0.99) } else if e == crossing { 0.995 } else { rng.gen_range(0.9..1.0) })
            .collect();
        let want = (crossing + 10).min(cfg.max_epochs);
        let got = rule.halting_epoch(&hist);
        ensure(got == Some(want), || format!("crossing at {crossing}: stopped at {got:?}, expected {want}"))?;
    }
    ensure(rule.halting_epoch(&[0.7; 250]) == Some(200), || "no crossing must stop at max_epochs".into())?;
    for ep in 0..=300 {
        let lr = lr_at_epoch(ep, &cfg).map_err(|e| e.to_string())?;
        let want = 0.0005 * 0.97f64.powi(ep as i32);
        ensure((lr - want).abs() <= 1e-12, || format!("lr at epoch {ep}: {lr} vs {want}"))?;
    }
    let k = oversample_factor(60, 275).map_err(|e| e.to_string())?;
    ensure(k == 5, || format!("60 vs 275 gives factor {k}"))?;
    for _ in 0..200 {
        let n = rng.gen_range(10..=300usize);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let folds = make_folds(&labels, 5, rng.gen()).map_err(|e| e.to_string())?;
        let mut seen = vec![0usize; n];
        folds.iter().flatten().for_each(|&i| seen[i] += 1);
        ensure(seen.iter().all(|&c| c == 1), || format!("n={n}: folds do not partition the cohort"))?;
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        ensure(spread <= 1, || format!("n={n}: fold sizes {sizes:?}"))?;
        let pos: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i]).count()).collect();
        let pspread = pos.iter().max().unwrap() - pos.iter().min().unwrap();
        ensure(pspread <= 1, || format!("n={n}: positives per fold {pos:?}"))?;
    }
    Ok("stopping on 200 injected histories, lr for epochs 0..=300, factor 5 on 60/275, 200 fold partitions".into())
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let p = Branches {
            gbm: rng.gen::<f64>(),
            idh_lgg: rng.gen(),
            codel: rng.gen(),
            idh_gbm: rng.gen(),
        };
        let leaf = compose_leaf_probs(p).map_err(|e| e.to_string())?;
        worst = worst.max((leaf.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst <= 1e-9, || format!("leaf sum off by {worst:e}"))?;
    let half = compose_leaf_probs(Branches {
        gbm: 0.5,
        idh_lgg: 0.5,
        codel: 0.5,
        idh_gbm: 0.5,
    })
    .map_err(|e| e.to_string())?;
    ensure(half == [0.125, 0.125, 0.25, 0.25, 0.25], || format!("all-0.5 gives {half:?}"))?;
    Ok(format!("10^5 quadruples sum to 1 within {worst:.1e}; all-0.5 is exact"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = Grid::new([40, 36, 12], [0.8, 0.8, 6.0]);
    let vol = Volume::from_fn(grid, |_, _, _| rng.gen_range(-3.0f32..40.0));
    let norm = normalize_intensity(&vol).map_err(|e| e.to_string())?;
    let (m, s) = norm.mean_std();
    ensure(m.abs() <= 1e-4 && (s - 1.0).abs() <= 1e-4, || format!("normalized mean {m}, std {s}"))?;

    let target = [0.5, 0.5, 5.0];
    let res = resample_volume(&vol, target, Interpolation::Cubic).map_err(|e| e.to_string())?;
    let want = [output_len(40, 0.8, 0.5), output_len(36, 0.8, 0.5), output_len(12, 6.0, 5.0)];
    ensure(res.grid.spacing == target && res.grid.dims == want, || {
        format!("resampled to {:?} at {:?}, expected {want:?} at {target:?}", res.grid.dims, res.grid.spacing)
    })?;

    let cfg = SynthConfig {
        max_misalignment_deg: 0.0,
        max_misalignment_mm: 0.0,
        noise_sigma: 0.0,
        ..Default::default()
    };
    let patient = generate_patient(GliomaSubtype::IV, &cfg, &mut patient_rng(6, 0)).map_err(|e| e.to_string())?;
    let fixed = &patient.volumes[2];
    let sp = fixed.grid.spacing;
    let center = fixed.grid.center_world();
    // moving content displaced by (+3, +4, 0) voxels
    let shift = RigidTransform::new(0.0, [-3.0 * sp[0], -4.0 * sp[1], 0.0], center);
    let moving = resample_into(fixed, &shift, &fixed.grid, Interpolation::Cubic);
    let t = register_rigid(&moving, fixed).map_err(|e| e.to_string())?;
    let got = [t.translation_mm[0] / sp[0], t.translation_mm[1] / sp[1], t.translation_mm[2] / sp[2]];
    ensure((got[0] - 3.0).abs() <= 1.0 && (got[1] - 4.0).abs() <= 1.0 && got[2].abs() <= 1.0, || {
        format!("recovered shift {got:?} voxels")
    })?;
    let rot = RigidTransform::new(-5.0, [0.0; 3], center);
    let moving = resample_into(fixed, &rot, &fixed.grid, Interpolation::Cubic);
    let r = register_rigid(&moving, fixed).map_err(|e| e.to_string())?;
    ensure((r.rotation_deg - 5.0).abs() <= 1.0, || format!("recovered rotation {}", r.rotation_deg))?;
    Ok(format!(
        "mean {m:.1e}, std {s:.6}; dims {want:?}; shift ({:.2}, {:.2}, {:.2}) vox; rotation {:.2} deg",
        got[0], got[1], got[2], r.rotation_deg
    ))
}

// ---------------------------------------------------------------- 7 and 8

const TASKS: [&str; 4] = ["grade", "idh-lgg", "1p19q", "idh-gbm"];

fn cli(args: &[&str]) -> std::result::Result<(), String> {
    let mut argv = vec!["glioma"];
    argv.extend_from_slice(args);
    match run_command(&argv) {
        0 => Ok(()),
        code => Err(format!("`{}` exited with {code}", args.join(" "))),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// synth → preprocess → train → evaluate for every task; returns the
/// metrics report text of each task.
fn run_pipeline(work: &Path) -> std::result::Result<Vec<String>, String> {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic_stub.toml");
    let (raw, prep, runs) = (work.join("raw"), work.join("prep"), work.join("runs"));
    cli(&["synth", "--n", "200", "--seed", "7", "--out", s(&raw)])?;
    cli(&[
        "preprocess",
        "--manifest",
        s(&raw.join("manifest.jsonl")),
        "--out",
        s(&prep),
        "--config",
        s(&config),
    ])?;
    let manifest = prep.join("manifest.jsonl");
    let mut reports = Vec::new();
    for task in TASKS {
        let out = runs.join(task);
        cli(&["train", "--task", task, "--manifest", s(&manifest), "--out", s(&out), "--config", s(&config)])?;
        cli(&["evaluate", "--task", task, "--ensembles", s(&out), "--manifest", s(&manifest), "--split", "test"])?;
        let report = out.join("eval-test/metrics.txt");
        reports.push(std::fs::read_to_string(&report).map_err(|e| format!("{}: {e}", report.display()))?);
    }
    Ok(reports)
}

fn report_auc(report: &str) -> Option<f64> {
    report.lines().nth(1)?.split('|').next()?.trim().parse().ok()
}

fn criterion_7(reports: &[String], minutes: f64) -> Check {
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for (task, report) in TASKS.iter().zip(reports) {
        let auc = report_auc(report).ok_or_else(|| format!("{task}: no AUC in report:\n{report}"))?;
        let floor = if *task == "idh-gbm" { 0.70 } else { 0.90 };
        parts.push(format!("{task} {auc:.2}"));
        if auc < floor {
            failures.push(format!("{task} AUC {auc:.2} < {floor:.2}"));
        }
    }
    if minutes > 60.0 {
        failures.push(format!("took {minutes:.1} min"));
    }
    if failures.is_empty() {
        Ok(format!("test AUC {} in {minutes:.1} min", parts.join(", ")))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_8(first: &[String], second: &[String]) -> Check {
    for ((task, a), b) in TASKS.iter().zip(first).zip(second) {
        ensure(a == b, || format!("{task} reports differ:\n{a}\nvs\n{b}"))?;
    }
    Ok("two seeded runs wrote byte-identical metric reports for all four tasks".into())
}

fn main() {
    let mut results: Vec<(u32, &str, Check)> = vec![
        (1, "metric oracles", criterion_1()),
        (2, "label truth table", criterion_2()),
        (3, "architecture invariants", criterion_3()),
        (4, "training machinery", criterion_4()),
        (5, "composition identity", criterion_5()),
        (6, "preprocessing", criterion_6()),
    ];
    for (n, name, r) in &results {
        print_line(*n, name, r);
    }

    let tmp = tempfile::tempdir().expect("temp dir");
    let t = Instant::now();
    let first = run_pipeline(&tmp.path().join("a"));
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    let c7 = first.as_ref().map_err(Clone::clone).and_then(|r| criterion_7(r, minutes));
    print_line(7, "end-to-end synthetic run", &c7);
    let second = run_pipeline(&tmp.path().join("b"));
    let c8 = match (&first, &second) {
        (Ok(a), Ok(b)) => criterion_8(a, b),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    print_line(8, "determinism", &c8);
    results.push((7, "end-to-end synthetic run", c7));
    results.push((8, "determinism", c8));

    let failed = results.iter().filter(|(_, _, r)| r.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn print_line(n: u32, name: &str, r: &Check) {
    match r {
        Ok(msg) => println!("criterion {n} PASS {name}: {msg}"),
        Err(msg) => println!("criterion {n} FAIL {name}: {msg}"),
    }
}
