//! The five-subtype glioma taxonomy and the four binary tasks that partition it.
//!
//! ```text
//!  level    biomarker   |        LGG         |     GBM
//!  top      histology   |  I    II    III    |  IV     V
//!  middle   IDH         |  mut  mut   wt     |  mut    wt
//!  bottom   1p/19q      |  cod  non   -      |  -      -
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GliomaSubtype {
    I,
    II,
    III,
    IV,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Histology {
    Lgg,
    Gbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdhStatus {
    Mutant,
    WildType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeletionStatus {
    Codeleted,
    NonCodeleted,
}

impl GliomaSubtype {
    pub const ALL: [GliomaSubtype; 5] = [
        GliomaSubtype::I,
        GliomaSubtype::II,
        GliomaSubtype::III,
        GliomaSubtype::IV,
        GliomaSubtype::V,
    ];

    pub fn histology(self) -> Histology {
        match self {
            GliomaSubtype::I | GliomaSubtype::II | GliomaSubtype::III => Histology::Lgg,
            GliomaSubtype::IV | GliomaSubtype::V => Histology::Gbm,
        }
    }

    pub fn idh(self) -> IdhStatus {
        match self {
            GliomaSubtype::I | GliomaSubtype::II | GliomaSubtype::IV => IdhStatus::Mutant,
            GliomaSubtype::III | GliomaSubtype::V => IdhStatus::WildType,
        }
    }

    /// 1p/19q status; only defined for IDH-mutant lower-grade gliomas.
    pub fn codeletion(self) -> Option<CodeletionStatus> {
        match self {
            GliomaSubtype::I => Some(CodeletionStatus::Codeleted),
            GliomaSubtype::II => Some(CodeletionStatus::NonCodeleted),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GliomaSubtype::I => "I",
            GliomaSubtype::II => "II",
            GliomaSubtype::III => "III",
            GliomaSubtype::IV => "IV",
            GliomaSubtype::V => "V",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            GliomaSubtype::I => "1p/19q codel in IDH mut LGG",
            GliomaSubtype::II => "1p/19q noncodel in IDH mut LGG",
            GliomaSubtype::III => "IDH wt LGG",
            GliomaSubtype::IV => "IDH mut GBM",
            GliomaSubtype::V => "IDH wt GBM",
        }
    }
}

impl fmt::Display for GliomaSubtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GliomaSubtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" => Ok(GliomaSubtype::I),
            "II" => Ok(GliomaSubtype::II),
            "III" => Ok(GliomaSubtype::III),
            "IV" => Ok(GliomaSubtype::IV),
            "V" => Ok(GliomaSubtype::V),
            other => Err(Error::Invalid(format!("unknown glioma subtype `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassificationTask {
    /// GBM (positive) vs. LGG, over the whole cohort.
    #[serde(rename = "grade")]
    GradeGbmVsLgg,
    /// IDH mutant (positive) vs. wild type, within LGGs.
    #[serde(rename = "idh-lgg")]
    IdhInLgg,
    /// 1p/19q codeleted (positive) vs. non-codeleted, within IDH-mutant LGGs.
    #[serde(rename = "1p19q")]
    CodelInIdhMutLgg,
    /// IDH mutant (positive) vs. wild type, within GBMs.
    #[serde(rename = "idh-gbm")]
    IdhInGbm,
}

impl ClassificationTask {
    pub const ALL: [ClassificationTask; 4] = [
        ClassificationTask::GradeGbmVsLgg,
        ClassificationTask::IdhInLgg,
        ClassificationTask::CodelInIdhMutLgg,
        ClassificationTask::IdhInGbm,
    ];

    /// Short name used on the command line and in file names.
    pub fn cli_name(self) -> &'static str {
        match self {
            ClassificationTask::GradeGbmVsLgg => "grade",
            ClassificationTask::IdhInLgg => "idh-lgg",
            ClassificationTask::CodelInIdhMutLgg => "1p19q",
            ClassificationTask::IdhInGbm => "idh-gbm",
        }
    }

    pub fn positive_class(self) -> &'static str {
        match self {
            ClassificationTask::GradeGbmVsLgg => "GBM",
            ClassificationTask::IdhInLgg => "IDH mut",
            ClassificationTask::CodelInIdhMutLgg => "1p/19q codel",
            ClassificationTask::IdhInGbm => "IDH mut",
        }
    }

    pub fn negative_class(self) -> &'static str {
        match self {
            ClassificationTask::GradeGbmVsLgg => "LGG",
            ClassificationTask::IdhInLgg => "IDH wt",
            ClassificationTask::CodelInIdhMutLgg => "1p/19q noncodel",
            ClassificationTask::IdhInGbm => "IDH wt",
        }
    }

    /// Panel title in the style of the published ROC figure.
    pub fn title(self) -> &'static str {
        match self {
            ClassificationTask::GradeGbmVsLgg => "GBM vs. LGG",
            ClassificationTask::IdhInLgg => "IDH mut vs. wt in LGGs",
            ClassificationTask::CodelInIdhMutLgg => "1p/19q codel vs. noncodel in IDH mut LGGs",
            ClassificationTask::IdhInGbm => "IDH mut vs. wt in GBMs",
        }
    }
}

impl fmt::Display for ClassificationTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for ClassificationTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassificationTask::ALL
            .into_iter()
            .find(|t| t.cli_name() == s)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown task `{s}` (expected grade, idh-lgg, 1p19q or idh-gbm)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    Positive,
    Negative,
    NotInCohort,
}

impl BinaryLabel {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            BinaryLabel::Positive => Some(true),
            BinaryLabel::Negative => Some(false),
            BinaryLabel::NotInCohort => None,
        }
    }
}

/// Routes a subtype to its label for one task; patients outside the task's
/// parent node get [`BinaryLabel::NotInCohort`].
pub fn derive_binary_label(subtype: GliomaSubtype, task: ClassificationTask) -> BinaryLabel {
    use BinaryLabel::*;

    let from = |positive: bool| if positive { Positive } else { Negative };
    match task {
        ClassificationTask::GradeGbmVsLgg => from(subtype.histology() == Histology::Gbm),
        ClassificationTask::IdhInLgg => match subtype.histology() {
            Histology::Lgg => from(subtype.idh() == IdhStatus::Mutant),
            Histology::Gbm => NotInCohort,
        },
        ClassificationTask::CodelInIdhMutLgg => match subtype.codeletion() {
            Some(status) => from(status == CodeletionStatus::Codeleted),
            None => NotInCohort,
        },
        ClassificationTask::IdhInGbm => match subtype.histology() {
            Histology::Gbm => from(subtype.idh() == IdhStatus::Mutant),
            Histology::Lgg => NotInCohort,
        },
    }
}
