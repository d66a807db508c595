//! Dataset manifests: one JSON object per line.
//!
//! The first line is a header carrying `schema_version`, the processing stage
//! and the realized split counts; every following line is one patient record.
//! Paths are stored relative to the manifest's directory. See
//! `docs/manifest.md` for the field-by-field schema.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nifti_io;
use crate::taxonomy::GliomaSubtype;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    T1w,
    T1ce,
    T2w,
}

impl Modality {
    /// Channel order of the network input.
    pub const ALL: [Modality; 3] = [Modality::T1w, Modality::T1ce, Modality::T2w];

    pub fn key(self) -> &'static str {
        match self {
            Modality::T1w => "t1w",
            Modality::T1ce => "t1ce",
            Modality::T2w => "t2w",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::T1w => "T1w",
            Modality::T1ce => "T1CE",
            Modality::T2w => "T2w",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[default]
    Raw,
    /// Volumes resampled, co-registered onto the T2w grid and normalized.
    Preprocessed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    /// Indexed in [`Modality::ALL`] order.
    pub volume_paths: [PathBuf; 3],
    pub mask_path: PathBuf,
    pub subtype: GliomaSubtype,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
}

impl PatientRecord {
    pub fn volume_path(&self, modality: Modality) -> &Path {
        &self.volume_paths[modality as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub stage: Stage,
    pub records: Vec<PatientRecord>,
    pub split: BTreeMap<String, Split>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub unassigned: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    schema_version: u32,
    #[serde(default)]
    stage: Stage,
    records: usize,
    split_counts: SplitCounts,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    volumes: BTreeMap<String, String>,
    mask: String,
    subtype: GliomaSubtype,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sex: Option<Sex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

impl DatasetManifest {
    pub fn get(&self, id: &str) -> Option<&PatientRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split.get(id).copied()
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &PatientRecord> {
        self.records
            .iter()
            .filter(move |r| self.split.get(&r.id) == Some(&split))
    }

    pub fn split_counts(&self) -> SplitCounts {
        let mut counts = SplitCounts::default();
        for r in &self.records {
            match self.split.get(&r.id) {
                Some(Split::Train) => counts.train += 1,
                Some(Split::Test) => counts.test += 1,
                None => counts.unassigned += 1,
            }
        }
        counts
    }

    /// Checks the in-memory invariants (unique ids, split keys refer to records).
    pub fn validate_structure(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.id.is_empty() {
                return Err(Error::Invalid("patient id must be nonempty".into()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        if let Some(id) = self.split.keys().find(|id| !seen.contains(id.as_str())) {
            return Err(Error::Invalid(format!(
                "split assignment for unknown patient `{id}`"
            )));
        }
        Ok(())
    }

    /// Checks that every referenced file exists and carries a readable header.
    /// Preprocessed manifests additionally require all four images of a
    /// patient to share the T2w grid.
    pub fn validate_files(&self) -> Result<()> {
        for r in &self.records {
            let mut grids = Vec::with_capacity(4);
            for path in r.volume_paths.iter().chain(std::iter::once(&r.mask_path)) {
                if !path.exists() {
                    return Err(Error::MissingFile(path.clone()));
                }
                grids.push(nifti_io::read_grid(path)?);
            }
            if self.stage == Stage::Preprocessed {
                let t2 = &grids[Modality::T2w as usize];
                if grids.iter().any(|g| !g.same_lattice(t2)) {
                    return Err(Error::ShapeMismatch(format!(
                        "patient `{}`: preprocessed images do not share the T2w grid",
                        r.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Serializes to the line-delimited text format, writing paths relative to `base_dir`.
    pub fn to_text(&self, base_dir: &Path) -> Result<String> {
        let header = HeaderLine {
            schema_version: MANIFEST_SCHEMA_VERSION,
            stage: self.stage,
            records: self.records.len(),
            split_counts: self.split_counts(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            let volumes = Modality::ALL
                .iter()
                .map(|&m| (m.key().to_string(), relative(r.volume_path(m), base_dir)))
                .collect();
            let line = RecordLine {
                id: r.id.clone(),
                volumes,
                mask: relative(&r.mask_path, base_dir),
                subtype: r.subtype,
                age: r.age,
                sex: r.sex,
                split: self.split.get(&r.id).copied(),
            };
            out.push_str(&serde_json::to_string(&line).expect("record serializes"));
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses manifest text; relative paths are resolved against `base_dir`.
    /// Performs structural validation only (no file access).
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(Error::ManifestParse {
            line: 1,
            reason: "empty manifest".into(),
        })?;
        let version: serde_json::Value =
            serde_json::from_str(first).map_err(|e| Error::ManifestParse {
                line: 1,
                reason: e.to_string(),
            })?;
        let found = version
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or(Error::ManifestParse {
                line: 1,
                reason: "header line lacks schema_version".into(),
            })?;
        if found != MANIFEST_SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion {
                what: "manifest",
                found: found as u32,
                expected: MANIFEST_SCHEMA_VERSION,
            });
        }
        let header: HeaderLine =
            serde_json::from_value(version).map_err(|e| Error::ManifestParse {
                line: 1,
                reason: e.to_string(),
            })?;

        let mut manifest = DatasetManifest {
            stage: header.stage,
            ..Default::default()
        };
        let mut seen = HashSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let rec: RecordLine = serde_json::from_str(line).map_err(|e| Error::ManifestParse {
                line: lineno,
                reason: e.to_string(),
            })?;
            if !seen.insert(rec.id.clone()) {
                return Err(Error::DuplicateId(rec.id));
            }
            if let Some(unknown) = rec
                .volumes
                .keys()
                .find(|k| !Modality::ALL.iter().any(|m| m.key() == k.as_str()))
            {
                return Err(Error::ManifestParse {
                    line: lineno,
                    reason: format!("unknown modality `{unknown}` for patient `{}`", rec.id),
                });
            }
            let mut paths: Vec<PathBuf> = Vec::with_capacity(3);
            for m in Modality::ALL {
                let p = rec.volumes.get(m.key()).ok_or_else(|| Error::MissingModality {
                    id: rec.id.clone(),
                    modality: m,
                })?;
                paths.push(resolve(p, base_dir));
            }
            let volume_paths: [PathBuf; 3] = paths.try_into().expect("three modalities");
            if let Some(s) = rec.split {
                manifest.split.insert(rec.id.clone(), s);
            }
            manifest.records.push(PatientRecord {
                id: rec.id,
                volume_paths,
                mask_path: resolve(&rec.mask, base_dir),
                subtype: rec.subtype,
                age: rec.age,
                sex: rec.sex,
            });
        }
        if manifest.records.len() != header.records {
            return Err(Error::ManifestParse {
                line: 1,
                reason: format!(
                    "header announces {} records, found {}",
                    header.records,
                    manifest.records.len()
                ),
            });
        }
        manifest.validate_structure()?;
        Ok(manifest)
    }
}

fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned()
}

fn resolve(p: &str, base: &Path) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn base_dir_of(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Loads and fully validates a manifest, including file existence and
/// header readability of every referenced volume and mask.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let manifest = read_manifest(path)?;
    manifest.validate_files()?;
    Ok(manifest)
}

/// Loads a manifest with structural validation only.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::parse(&text, &base_dir_of(path))
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate_structure()?;
    let base = base_dir_of(path);
    std::fs::create_dir_all(&base).map_err(|e| Error::io(&base, e))?;
    let text = manifest.to_text(&base)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Grid, TumorMask, Volume};

    fn record_line(id: &str, skip: Option<&str>) -> String {
        let mut vols = vec![];
        for k in ["t1w", "t1ce", "t2w"] {
            if Some(k) != skip {
                vols.push(format!("\"{k}\":\"{id}/{k}.nii\""));
            }
        }
        format!(
            "{{\"id\":\"{id}\",\"volumes\":{{{}}},\"mask\":\"{id}/mask.nii\",\"subtype\":\"III\",\"split\":\"train\"}}",
            vols.join(",")
        )
    }

    fn header(n: usize) -> String {
        format!("{{\"schema_version\":1,\"records\":{n},\"split_counts\":{{\"train\":{n},\"test\":0,\"unassigned\":0}}}}")
    }

    fn write_images(dir: &Path, id: &str) {
        let grid = Grid::new([3, 3, 2], [1.0, 1.0, 5.0]);
        let vol = Volume::from_fn(grid.clone(), |x, _, _| x as f32);
        for k in ["t1w", "t1ce", "t2w"] {
            nifti_io::write_volume(&dir.join(id).join(format!("{k}.nii")), &vol).unwrap();
        }
        let mask = TumorMask::from_fn(grid, |x, y, _| x == 1 && y == 1).unwrap();
        nifti_io::write_mask(&dir.join(id).join("mask.nii"), &mask).unwrap();
    }

    #[test]
    fn three_record_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let ids = ["p1", "p2", "p3"];
        let mut text = header(3) + "\n";
        for id in ids {
            write_images(dir.path(), id);
            text += &record_line(id, None);
            text += "\n";
        }
        let path = dir.path().join("manifest.jsonl");
        std::fs::write(&path, text).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.split_counts().train, 3);
        assert_eq!(m.records[1].subtype, GliomaSubtype::III);

        // write(load(m)) reloads to the same value
        let out = dir.path().join("copy.jsonl");
        write_manifest(&out, &m).unwrap();
        assert_eq!(load_manifest(&out).unwrap(), m);
    }

    #[test]
    fn missing_modality_names_patient_and_modality() {
        let text = format!("{}\n{}\n", header(1), record_line("p9", Some("t1ce")));
        let err = DatasetManifest::parse(&text, Path::new("/tmp")).unwrap_err();
        match err {
            Error::MissingModality { id, modality } => {
                assert_eq!(id, "p9");
                assert_eq!(modality, Modality::T1ce);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!(
            "{}\n{}\n{}\n",
            header(2),
            record_line("a", None),
            record_line("a", None)
        );
        assert!(matches!(
            DatasetManifest::parse(&text, Path::new("/tmp")),
            Err(Error::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn wrong_schema_version_and_missing_files() {
        let text = "{\"schema_version\":9,\"records\":0,\"split_counts\":{\"train\":0,\"test\":0,\"unassigned\":0}}\n";
        assert!(matches!(
            DatasetManifest::parse(text, Path::new(".")),
            Err(Error::SchemaVersion { found: 9, .. })
        ));

        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_manifest(&dir.path().join("absent.jsonl")),
            Err(Error::MissingFile(_))
        ));
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, format!("{}\n{}\n", header(1), record_line("x", None))).unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::MissingFile(_))));

        // present but unreadable
        write_images(dir.path(), "x");
        std::fs::write(dir.path().join("x/t2w.nii"), b"garbage").unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(Error::UnreadableVolume { .. })
        ));
    }
}
