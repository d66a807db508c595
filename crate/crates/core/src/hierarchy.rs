//! Composition of the four binary tasks into five leaf subtypes.
//!
//! ```text
//!                  grade
//!          LGG /          \ GBM
//!        idh-lgg          idh-gbm
//!     mut /    \ wt     mut /   \ wt
//!      1p19q    III        IV    V
//!  codel / \ non
//!       I   II
//! ```
//!
//! Leaf probabilities are products along the path. The hard subtype follows
//! the ensemble votes down the tree, so votes on pruned branches are ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roi::{build_stack, RoiConfig};
use crate::taxonomy::{ClassificationTask, GliomaSubtype};
use crate::train::TaskEnsemble;
use crate::volume::{TumorMask, Volume};

/// Per-task values in tree order: grade, idh-lgg, 1p19q, idh-gbm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branches<T> {
    pub gbm: T,
    pub idh_lgg: T,
    pub codel: T,
    pub idh_gbm: T,
}

impl<T: Copy> Branches<T> {
    pub fn get(&self, task: ClassificationTask) -> T {
        match task {
            ClassificationTask::GradeGbmVsLgg => self.gbm,
            ClassificationTask::IdhInLgg => self.idh_lgg,
            ClassificationTask::CodelInIdhMutLgg => self.codel,
            ClassificationTask::IdhInGbm => self.idh_gbm,
        }
    }

    pub fn from_fn(mut f: impl FnMut(ClassificationTask) -> T) -> Self {
        Branches {
            gbm: f(ClassificationTask::GradeGbmVsLgg),
            idh_lgg: f(ClassificationTask::IdhInLgg),
            codel: f(ClassificationTask::CodelInIdhMutLgg),
            idh_gbm: f(ClassificationTask::IdhInGbm),
        }
    }
}

impl<T> Branches<T> {
    pub fn try_from_fn(mut f: impl FnMut(ClassificationTask) -> Result<T>) -> Result<Self> {
        Ok(Branches {
            gbm: f(ClassificationTask::GradeGbmVsLgg)?,
            idh_lgg: f(ClassificationTask::IdhInLgg)?,
            codel: f(ClassificationTask::CodelInIdhMutLgg)?,
            idh_gbm: f(ClassificationTask::IdhInGbm)?,
        })
    }

    pub fn map<'a, U>(&'a self, mut f: impl FnMut(&'a T) -> U) -> Branches<U> {
        Branches {
            gbm: f(&self.gbm),
            idh_lgg: f(&self.idh_lgg),
            codel: f(&self.codel),
            idh_gbm: f(&self.idh_gbm),
        }
    }
}

/// Leaf probabilities for subtypes I..V.
pub fn compose_leaf_probs(p: Branches<f64>) -> Result<[f64; 5]> {
    for task in ClassificationTask::ALL {
        let v = p.get(task);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Invalid(format!(
                "branch probability for {task} must lie in [0, 1], got {v}"
            )));
        }
    }
    let lgg = 1.0 - p.gbm;
    Ok([
        lgg * p.idh_lgg * p.codel,
        lgg * p.idh_lgg * (1.0 - p.codel),
        lgg * (1.0 - p.idh_lgg),
        p.gbm * p.idh_gbm,
        p.gbm * (1.0 - p.idh_gbm),
    ])
}

/// Routes binary votes down the tree.
pub fn route_votes(votes: Branches<bool>) -> GliomaSubtype {
    match (votes.gbm, votes.idh_gbm, votes.idh_lgg, votes.codel) {
        (true, true, _, _) => GliomaSubtype::IV,
        (true, false, _, _) => GliomaSubtype::V,
        (false, _, false, _) => GliomaSubtype::III,
        (false, _, true, true) => GliomaSubtype::I,
        (false, _, true, false) => GliomaSubtype::II,
    }
}

/// Leaf with the largest composed probability, lowest subtype on ties.
pub fn argmax_subtype(leaf: &[f64; 5]) -> GliomaSubtype {
    let mut best = 0;
    for i in 1..5 {
        if leaf[i] > leaf[best] {
            best = i;
        }
    }
    GliomaSubtype::ALL[best]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardRule {
    #[default]
    VoteRouting,
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtypePrediction {
    pub leaf_probs: BTreeMap<GliomaSubtype, f64>,
    pub hard_subtype: GliomaSubtype,
    pub branch_probs: Branches<f64>,
    pub branch_votes: Branches<bool>,
}

impl SubtypePrediction {
    pub fn new(probs: Branches<f64>, votes: Branches<bool>, rule: HardRule) -> Result<Self> {
        let leaf = compose_leaf_probs(probs)?;
        let hard_subtype = match rule {
            HardRule::VoteRouting => route_votes(votes),
            HardRule::Argmax => argmax_subtype(&leaf),
        };
        Ok(SubtypePrediction {
            leaf_probs: GliomaSubtype::ALL.iter().copied().zip(leaf).collect(),
            hard_subtype,
            branch_probs: probs,
            branch_votes: votes,
        })
    }
}

/// Builds the deterministic stack once and runs all four ensembles on it.
/// `ensembles` are in tree order.
pub fn predict_subtype(
    ensembles: &Branches<&TaskEnsemble>,
    volumes: &[Volume; 3],
    mask: &TumorMask,
    roi: &RoiConfig,
    rule: HardRule,
) -> Result<SubtypePrediction> {
    for task in ClassificationTask::ALL {
        let e = ensembles.get(task);
        if e.task != task {
            return Err(Error::MissingEnsemble(format!(
                "{} branch was given the {} ensemble",
                task.cli_name(),
                e.task.cli_name()
            )));
        }
    }
    let stack = build_stack(volumes, mask, roi)?;
    let out = Branches::try_from_fn(|t| {
        ensembles
            .get(t)
            .predict(&[&stack])
            .map(|mut v| v.remove(0))
    })?;
    SubtypePrediction::new(out.map(|o| o.probability), out.map(|o| o.prediction), rule)
}
