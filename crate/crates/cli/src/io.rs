//! Artifact I/O: atomic writes, line-delimited datasets, checkpoints, and
//! the hash manifest behind `soda verify`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use soda_core::sequence::SequenceExample;
use soda_core::{Checkpoint, ModelParams};

use crate::error::{CliError, CliResult};

/// Writes via a temp file in the target directory plus rename, so a killed
/// run never leaves a truncated artifact readable as valid.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| CliError::runtime("IO_ERROR", format!("persisting {}: {e}", path.display())))?;
    Ok(())
}

/// One line of a dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub prompt: Vec<u32>,
    pub response: Vec<u32>,
    pub source: String,
    pub seed: u64,
}

/// Serializes examples as line-delimited JSON, one record per line.
pub fn write_dataset(
    path: &Path,
    examples: &[SequenceExample],
    seeds: impl Fn(usize) -> u64,
) -> CliResult<()> {
    let mut out = String::new();
    for (i, ex) in examples.iter().enumerate() {
        let record = DatasetRecord {
            prompt: ex.prompt.clone(),
            response: ex.response.clone(),
            source: ex.source.to_string(),
            seed: seeds(i),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_dataset(path: &Path) -> CliResult<Vec<DatasetRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(CliError::from))
        .collect()
}

/// One line of a preference-pair dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub prompt: Vec<u32>,
    pub chosen: Vec<u32>,
    pub rejected: Vec<u32>,
    pub chosen_source: String,
    pub rejected_source: String,
    pub seed: u64,
}

pub fn write_pref_dataset(
    path: &Path,
    pairs: &[soda_core::PreferencePair],
    seeds: impl Fn(usize) -> u64,
) -> CliResult<()> {
    let mut out = String::new();
    for (i, pair) in pairs.iter().enumerate() {
        let record = PreferenceRecord {
            prompt: pair.prompt.clone(),
            chosen: pair.chosen.clone(),
            rejected: pair.rejected.clone(),
            chosen_source: pair.chosen_source.to_string(),
            rejected_source: pair.rejected_source.to_string(),
            seed: seeds(i),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn write_checkpoint(path: &Path, params: &ModelParams, stage: &str) -> CliResult<()> {
    let json = serde_json::to_string(&params.to_checkpoint(stage))?;
    atomic_write(path, json.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> CliResult<ModelParams> {
    let text = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    Ok(ModelParams::from_checkpoint(&ckpt)?)
}

/// SHA-256 hashes of every artifact in a run directory, written last.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub files: BTreeMap<String, String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Hashes all regular files in `dir` (except the manifest itself) and writes
/// the manifest.
pub fn write_manifest(dir: &Path) -> CliResult<()> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        if name == MANIFEST_NAME || !entry.file_type()?.is_file() {
            continue;
        }
        files.insert(name, sha256_file(&entry.path())?);
    }
    let manifest = Manifest { files };
    atomic_write(
        &dir.join(MANIFEST_NAME),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )
}

/// Recomputes hashes against the manifest; returns mismatched or missing
/// file names.
pub fn verify_manifest(dir: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_NAME))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut bad = Vec::new();
    for (name, expected) in &manifest.files {
        let path = dir.join(name);
        if !path.exists() {
            bad.push(format!("{name} (missing)"));
            continue;
        }
        if &sha256_file(&path)? != expected {
            bad.push(format!("{name} (hash mismatch)"));
        }
    }
    Ok(bad)
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Run directories live directly under the output root, one per
/// (method, seed).
pub fn run_dir(out_dir: &Path, method: &str, seed: u64) -> PathBuf {
    out_dir.join(format!("{method}_s{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use soda_core::{ResponseSource, Vocab};

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let examples = vec![
            SequenceExample::new(vec![0, 1], vec![2, 5], ResponseSource::Teacher).unwrap(),
            SequenceExample::new(vec![3], vec![4], ResponseSource::BaseStudent).unwrap(),
        ];
        write_dataset(&path, &examples, |i| 100 + i as u64).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].prompt, vec![0, 1]);
        assert_eq!(back[0].source, "teacher");
        assert_eq!(back[1].seed, 101);
    }

    #[test]
    fn checkpoint_roundtrip_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q0.json");
        let m = ModelParams::tabular_random(Vocab::new(6).unwrap(), 1.7, 3);
        write_checkpoint(&path, &m, "q0").unwrap();
        let back = read_checkpoint(&path).unwrap();
        for (a, b) in m.flat().iter().zip(&back.flat()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn manifest_verifies_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        atomic_write(&dir.path().join("a.txt"), b"alpha").unwrap();
        atomic_write(&dir.path().join("b.txt"), b"beta").unwrap();
        write_manifest(dir.path()).unwrap();
        assert!(verify_manifest(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("a.txt"), b"tampered").unwrap();
        let bad = verify_manifest(dir.path()).unwrap();
        assert_eq!(bad, vec!["a.txt (hash mismatch)".to_string()]);
    }
}
