//! Pipeline configuration: one TOML document. Secrets never live in the
//! file; each backend names the environment variable holding its token.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stance_core::annotation::{Coverage, OverlapPlan, Precedence};
use stance_core::corpus::Publisher;
use stance_core::lexicon::Lexicon;

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    /// Lexicon file; the built-in lexicon when unset.
    pub lexicon: Option<PathBuf>,
    pub seed: u64,
    /// Certainty threshold used when thresholded series are requested.
    pub threshold: f64,
    /// Publisher registry. Order matters: per-publisher figure files
    /// follow it.
    pub publishers: Vec<String>,
    pub languages: Vec<String>,
    pub guideline_version: String,
    pub nb: NbConfig,
    pub remote: Option<RemoteConfig>,
    pub zeroshot: Option<ZeroShotConfig>,
    pub embedding: Option<EmbeddingConfig>,
    pub annotation: AnnotationConfig,
    pub similarity: SimilarityConfig,
    pub service: ServiceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data_dir: PathBuf::from("data"),
            lexicon: None,
            seed: 42,
            threshold: stance_core::trends::DEFAULT_THRESHOLD,
            publishers: vec![Publisher::RADICAL_RIGHT.to_string(), Publisher::MAINSTREAM.to_string()],
            languages: vec!["et".to_string()],
            guideline_version: stance_core::annotation::DEFAULT_GUIDELINE_VERSION.to_string(),
            nb: NbConfig::default(),
            remote: None,
            zeroshot: None,
            embedding: None,
            annotation: AnnotationConfig::default(),
            similarity: SimilarityConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbConfig {
    pub alpha: f64,
}

impl Default for NbConfig {
    fn default() -> Self {
        NbConfig { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_remote_batch")]
    pub max_batch: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroShotConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_zs_batch")]
    pub batch_size: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_one")]
    pub concurrency: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub url: String,
    pub provider: String,
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_embed_batch")]
    pub batch_limit: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_remote_batch() -> usize {
    32
}
fn default_zs_batch() -> usize {
    10
}
fn default_embed_batch() -> usize {
    64
}
fn default_retry_limit() -> u32 {
    5
}
fn default_one() -> usize {
    1
}
fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecedenceRule {
    /// First listed primary annotator wins.
    First,
    Majority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    pub primaries: Vec<String>,
    pub overlap_annotator: Option<String>,
    pub overlap_per_primary: usize,
    pub coverage: Coverage,
    pub precedence: PrecedenceRule,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            primaries: vec!["annotator_j".to_string(), "annotator_n".to_string()],
            overlap_annotator: None,
            overlap_per_primary: 0,
            coverage: Coverage::Disjoint,
            precedence: PrecedenceRule::First,
        }
    }
}

impl AnnotationConfig {
    pub fn overlap_plan(&self) -> Option<OverlapPlan> {
        self.overlap_annotator.as_ref().filter(|_| self.overlap_per_primary > 0).map(|a| OverlapPlan {
            annotator: a.clone(),
            per_primary: self.overlap_per_primary,
        })
    }

    pub fn precedence(&self) -> Precedence {
        match self.precedence {
            PrecedenceRule::First => Precedence::Ordered(self.primaries.clone()),
            PrecedenceRule::Majority => Precedence::MajorityWithThird,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub sample_cap: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            sample_cap: stance_core::similarity::DEFAULT_SAMPLE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Concurrent long-running jobs.
    pub workers: usize,
    /// When set, requests must carry `Authorization: Bearer <token>`.
    pub token_env: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".to_string(),
            workers: 2,
            token_env: None,
        }
    }
}

/// Reads a secret from the named environment variable.
pub fn secret(env: Option<&String>) -> Option<String> {
    env.and_then(|name| std::env::var(name).ok()).filter(|v| !v.is_empty())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::validation(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads `path`; relative `data_dir` and `lexicon` resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.data_dir.is_relative() {
            config.data_dir = base.join(&config.data_dir);
        }
        if let Some(lex) = config.lexicon.as_mut().filter(|l| l.is_relative()) {
            *lex = base.join(&*lex);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.threshold;
        if !(t > 1.0 / 3.0 && t <= 1.0) {
            return Err(PipelineError::validation(format!("threshold {t} outside (1/3, 1]")));
        }
        for p in &self.publishers {
            if !Publisher::is_valid_id(p) {
                return Err(PipelineError::validation(format!("invalid publisher id {p:?}")));
            }
        }
        if !(self.nb.alpha.is_finite() && self.nb.alpha > 0.0) {
            return Err(PipelineError::validation("nb.alpha must be positive"));
        }
        if self.similarity.sample_cap == 0 {
            return Err(PipelineError::validation("similarity.sample_cap must be positive"));
        }
        if self.service.workers == 0 {
            return Err(PipelineError::validation("service.workers must be positive"));
        }
        if let Some(z) = &self.zeroshot {
            if z.batch_size == 0 || z.retry_limit == 0 || z.concurrency == 0 {
                return Err(PipelineError::validation(
                    "zeroshot batch_size, retry_limit and concurrency must be positive",
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering, so formatting and comments
    /// in the source file do not change it.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon {
            None => Ok(Lexicon::default_lexicon()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| PipelineError::validation(format!("cannot read lexicon {}: {e}", path.display())))?;
                Lexicon::from_text(&text).map_err(|e| PipelineError::validation(format!("lexicon: {e}")))
            }
        }
    }

    pub fn publisher_registry(&self) -> Vec<Publisher> {
        self.publishers.iter().map(Publisher::new).collect()
    }
}
