//! Run provenance: config hashing, sidecar files and output-directory locks.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 of the compact JSON encoding of `value`, hex encoded.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub artifact: String,
    pub artifact_sha256: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".provenance.json");
    artifact.with_file_name(name)
}

/// Writes `<artifact>.provenance.json` next to an artifact. Contains no
/// absolute paths or timestamps so reruns are byte-identical.
pub fn write_sidecar(artifact: &Path, command: &str, config_hash: &str, seed: u64) -> Result<()> {
    let sidecar = Sidecar {
        artifact: artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        artifact_sha256: sha256_file(artifact)?,
        command: command.to_string(),
        config_hash: config_hash.to_string(),
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&sidecar_path(artifact), &sidecar)
}

/// Exclusive lock on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<DirLock> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(lock);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn sidecar_sits_next_to_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("report.json");
        std::fs::write(&a, "{}").unwrap();
        write_sidecar(&a, "evaluate", "abc", 7).unwrap();
        let s = std::fs::read_to_string(dir.path().join("report.json.provenance.json")).unwrap();
        assert!(s.contains("\"seed\": 7"));
        assert!(!s.contains(dir.path().to_str().unwrap()));
    }
}
