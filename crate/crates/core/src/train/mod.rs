//! Cross-validated training of one binary task: class rebalancing by integer
//! oversampling, stratified folds, Adam with coupled L2 decay and an
//! exponentially decaying learning rate, the train-AUC stopping rule and
//! max-validation-AUC model selection.

mod run;

pub use run::{
    evaluate_ensemble, load_task_cases, train_fold, train_task, train_task_on, Evaluation, FoldReport, FoldResult, TaskCase,
    TaskEnsemble, TrainReport, TrainedTask, ENSEMBLE_SCHEMA_VERSION,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamKind, Visit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub weight_decay: f64,
    pub initial_lr: f64,
    pub lr_decay_base: f64,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub folds: usize,
    pub stop_auc_threshold: f64,
    pub stop_patience_epochs: usize,
    pub max_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            weight_decay: 0.0005,
            initial_lr: 0.0005,
            lr_decay_base: 0.97,
            adam_betas: [0.9, 0.999],
            adam_eps: 1e-8,
            folds: 5,
            stop_auc_threshold: 0.99,
            stop_patience_epochs: 10,
            max_epochs: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.folds < 2 {
            return bad("at least two folds are needed");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if !(self.initial_lr > 0.0 && self.lr_decay_base > 0.0 && self.weight_decay >= 0.0 && self.adam_eps > 0.0) {
            return bad("learning rate, decay and epsilon must be positive");
        }
        if self.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad("adam betas must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            threshold: self.stop_auc_threshold,
            patience: self.stop_patience_epochs,
            max_epochs: self.max_epochs,
        }
    }
}

/// `initial_lr · decay^ep` for the zero-based epoch counter `ep`.
pub fn lr_at_epoch(ep: i64, cfg: &TrainConfig) -> Result<f64> {
    if ep < 0 {
        return Err(Error::Invalid(format!("epoch must be non-negative, got {ep}")));
    }
    Ok(cfg.initial_lr * cfg.lr_decay_base.powi(ep as i32))
}

/// Oversampling factor `max(1, round(n_major / n_minor))`.
pub fn oversample_factor(n_pos: usize, n_neg: usize) -> Result<usize> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let (maj, min) = (n_pos.max(n_neg), n_pos.min(n_neg));
    Ok(((maj as f64 / min as f64).round() as usize).max(1))
}

/// Training multiset: every minority-class index repeated `k` times, the
/// majority class once, in input order.
pub fn rebalance_oversample(labels: &[bool]) -> Result<Vec<usize>> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    let k = oversample_factor(n_pos, n_neg)?;
    let minority = n_pos < n_neg;
    let mut out = Vec::with_capacity(labels.len() + (k - 1) * n_pos.min(n_neg));
    for (i, &l) in labels.iter().enumerate() {
        let reps = if l == minority && n_pos != n_neg { k } else { 1 };
        out.extend(std::iter::repeat_n(i, reps));
    }
    Ok(out)
}

/// Stratified random partition into `k` folds. Each class is shuffled and
/// dealt round-robin with one running counter, so fold sizes differ by at
/// most one and every fold gets both classes when each has `k` members.
pub fn make_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || labels.len() < k {
        return Err(Error::TooFewCases(format!(
            "{} cases cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub threshold: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl StopRule {
    /// First 1-based epoch whose training AUC exceeds the threshold.
    pub fn first_crossing(&self, train_auc: &[f64]) -> Option<usize> {
        train_auc.iter().position(|&a| a > self.threshold).map(|i| i + 1)
    }

    /// Whether training ends after the epochs recorded so far.
    pub fn should_stop(&self, train_auc: &[f64]) -> bool {
        let done = train_auc.len();
        done >= self.max_epochs || self.first_crossing(train_auc).is_some_and(|c| done >= c + self.patience)
    }

    /// Epoch after which a run with this history halts, if it does within it.
    pub fn halting_epoch(&self, train_auc: &[f64]) -> Option<usize> {
        (1..=train_auc.len()).find(|&e| self.should_stop(&train_auc[..e]))
    }
}

/// 1-based epoch of the highest validation AUC, earliest on ties.
pub fn select_best_epoch(val_auc: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &a) in val_auc.iter().enumerate() {
        if best.is_none_or(|b| a > val_auc[b]) {
            best = Some(i);
        }
    }
    best.map(|i| i + 1)
}

/// Adam with L2 decay added to the gradient; buffers are skipped.
#[derive(Debug, Clone)]
pub struct Adam {
    betas: [f64; 2],
    eps: f64,
    weight_decay: f64,
    step: i32,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig) -> Self {
        Adam {
            betas: cfg.adam_betas,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut impl Visit, lr: f64) {
        self.step += 1;
        let [b1, b2] = self.betas;
        let bc1 = 1.0 - b1.powi(self.step);
        let bc2_sqrt = (1.0 - b2.powi(self.step)).sqrt();
        let (eps, wd) = (self.eps, self.weight_decay);
        let moments = &mut self.moments;
        let mut slot = 0;
        model.visit("", &mut |_, kind, p| {
            if kind != ParamKind::Trainable {
                return;
            }
            if moments.len() <= slot {
                moments.push((vec![0.0; p.value.len()], vec![0.0; p.value.len()]));
            }
            let (m, v) = &mut moments[slot];
            for i in 0..p.value.len() {
                let g = p.grad[i] + wd * p.value[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let denom = v[i].sqrt() / bc2_sqrt + eps;
                p.value[i] -= lr / bc1 * m[i] / denom;
            }
            slot += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    #[test]
    fn schedule_examples() {
        let c = TrainConfig::default();
        assert_eq!(lr_at_epoch(0, &c).unwrap(), 0.0005);
        assert!((lr_at_epoch(1, &c).unwrap() - 0.000485).abs() < 1e-15);
        assert!((lr_at_epoch(10, &c).unwrap() - 3.6871e-4).abs() < 1e-8);
        assert!(lr_at_epoch(-1, &c).is_err());
    }

    #[test]
    fn rebalance_examples() {
        assert_eq!(oversample_factor(60, 275).unwrap(), 5);
        assert_eq!(oversample_factor(138, 116).unwrap(), 1);
        let mut labels = vec![true; 60];
        labels.extend(vec![false; 275]);
        let idx = rebalance_oversample(&labels).unwrap();
        assert_eq!(idx.iter().filter(|&&i| labels[i]).count(), 300);
        assert_eq!(idx.iter().filter(|&&i| !labels[i]).count(), 275);
        let eq = [true, false, true, false];
        assert_eq!(rebalance_oversample(&eq).unwrap(), vec![0, 1, 2, 3]);
        assert!(rebalance_oversample(&[true, true]).is_err());
    }

    #[test]
    fn fold_sizes() {
        let folds = make_folds(&[true; 10], 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let mut labels = vec![true; 9];
        labels.extend(vec![false; 14]);
        let folds = make_folds(&labels, 5, 2).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        assert!(folds.iter().all(|f| f.iter().any(|&i| labels[i]) && f.iter().any(|&i| !labels[i])));
        assert!(make_folds(&[true; 4], 5, 0).is_err());
        assert_eq!(make_folds(&labels, 5, 2).unwrap(), folds);
    }

    #[test]
    fn stopping_and_selection() {
        let rule = TrainConfig::default().stop_rule();
        let mut h = vec![0.9; 6];
        h.push(0.995);
        h.extend(vec![0.98; 30]);
        assert_eq!(rule.halting_epoch(&h), Some(17));
        let never = vec![0.5; 250];
        assert_eq!(rule.halting_epoch(&never), Some(200));
        assert_eq!(select_best_epoch(&[0.6, 0.9, 0.8]), Some(2));
        assert_eq!(select_best_epoch(&[0.7, 0.7]), Some(1));
    }

    struct One(Param);

    impl Visit for One {
        fn visit(&mut self, _: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Param)) {
            f("w", ParamKind::Trainable, &mut self.0);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // with bias correction the first update is lr · g / (|g| + eps)
        let mut p = One(Param::new(vec![2], vec![1.0, -2.0]));
        p.0.grad = vec![0.5, -3.0];
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = Adam::new(&cfg);
        opt.step(&mut p, 0.1);
        assert!((p.0.value[0] - 0.9).abs() < 1e-6);
        assert!((p.0.value[1] + 1.9).abs() < 1e-6);
    }
}
