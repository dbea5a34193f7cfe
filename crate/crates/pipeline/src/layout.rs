//! Where everything lives under the data directory.

use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

/// Directories holding derived artifacts; every file in them must be named
/// by some run manifest.
pub const ARTIFACT_DIRS: [&str; 6] = ["extract", "models", "predictions", "reports", "series", "plot"];

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn articles(&self) -> PathBuf {
        self.root.join("articles")
    }

    pub fn sentences(&self) -> PathBuf {
        self.root.join("extract/sentences.jsonl")
    }

    pub fn hits(&self) -> PathBuf {
        self.root.join("extract/hits.jsonl")
    }

    pub fn annotation_log(&self) -> PathBuf {
        self.root.join("annotation/log.jsonl")
    }

    pub fn batches(&self) -> PathBuf {
        self.root.join("annotation/batches.json")
    }

    pub fn nb_model(&self) -> PathBuf {
        self.root.join("models/nb.json")
    }

    pub fn predictions(&self, backend: &str) -> PathBuf {
        self.root.join(format!("predictions/{backend}.csv"))
    }

    pub fn failures(&self, backend: &str) -> PathBuf {
        self.root.join(format!("predictions/{backend}.failures.jsonl"))
    }

    pub fn audit(&self) -> PathBuf {
        self.root.join("audit/zeroshot.jsonl")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn series(&self, name: &str) -> PathBuf {
        self.root.join(format!("series/{name}.csv"))
    }

    pub fn plot(&self, name: &str) -> PathBuf {
        self.root.join(format!("plot/{name}.csv"))
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings")
    }

    pub fn manifests(&self) -> PathBuf {
        self.root.join("manifests")
    }

    pub fn jobs(&self) -> PathBuf {
        self.root.join("jobs")
    }
}
