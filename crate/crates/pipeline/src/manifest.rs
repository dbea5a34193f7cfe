//! Run manifests: one JSON file per run recording the config hash, seed,
//! input and output digests and timings.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};
use crate::layout::{Layout, ARTIFACT_DIRS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the data directory when inside it.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
    pub elapsed_ms: u128,
    pub summary: serde_json::Value,
}

/// What an operation read and wrote, plus a JSON summary for the caller.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

pub fn digest_file(path: &Path, root: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).map_err(|e| PipelineError::internal(format!("digest {}: {e}", path.display())))?;
    let shown = path.strip_prefix(root).unwrap_or(path);
    Ok(FileDigest {
        path: shown.to_string_lossy().replace('\\', "/"),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Times `op`, digests what it reports and writes the manifest. Returns
/// the manifest and where it was written.
pub fn record<F>(
    layout: &Layout,
    command: &str,
    config_sha256: &str,
    seed: u64,
    params: serde_json::Value,
    op: F,
) -> Result<(RunManifest, PathBuf)>
where
    F: FnOnce() -> Result<RunOutput>,
{
    let started_at = chrono::Utc::now();
    let clock = Instant::now();
    let out = op()?;
    let elapsed_ms = clock.elapsed().as_millis();
    let root = layout.root();
    let digests = |paths: &[PathBuf]| -> Result<Vec<FileDigest>> {
        let unique: BTreeSet<&PathBuf> = paths.iter().filter(|p| p.is_file()).collect();
        unique.into_iter().map(|p| digest_file(p, root)).collect()
    };
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config_sha256.to_string(),
        seed,
        params,
        inputs: digests(&out.inputs)?,
        outputs: digests(&out.outputs)?,
        started_at: started_at.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        elapsed_ms,
        summary: out.summary,
    };
    let dir = layout.manifests();
    fs::create_dir_all(&dir)?;
    let stamp = started_at.format("%Y%m%dT%H%M%S%.6fZ");
    let mut path = dir.join(format!("{stamp}-{command}.json"));
    let mut n = 1;
    while path.exists() {
        path = dir.join(format!("{stamp}-{command}-{n}.json"));
        n += 1;
    }
    stance_core::fsutil::write_atomic(&path, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok((manifest, path))
}

pub fn read_manifests(layout: &Layout) -> Result<Vec<RunManifest>> {
    let dir = layout.manifests();
    let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    paths.sort();
    paths
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .map(|p| {
            let bytes = fs::read(p)?;
            serde_json::from_slice(&bytes)
                .map_err(|e| PipelineError::internal(format!("unreadable manifest {}: {e}", p.display())))
        })
        .collect()
}

/// Artifact files that no manifest lists as an output.
pub fn orphan_outputs(layout: &Layout) -> Result<Vec<String>> {
    let listed: BTreeSet<String> = read_manifests(layout)?
        .into_iter()
        .flat_map(|m| m.outputs.into_iter().map(|d| d.path))
        .collect();
    let mut orphans = Vec::new();
    for dir in ARTIFACT_DIRS {
        let dir = layout.root().join(dir);
        let Ok(rd) = fs::read_dir(&dir) else { continue };
        let mut files: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect();
        files.sort();
        for f in files {
            let rel = f.strip_prefix(layout.root()).unwrap_or(&f).to_string_lossy().replace('\\', "/");
            if !listed.contains(&rel) {
                orphans.push(rel);
            }
        }
    }
    Ok(orphans)
}
