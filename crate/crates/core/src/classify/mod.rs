//! Classifier backends behind one prediction contract: multinomial Naive
//! Bayes, a remote inference client for externally fine-tuned models and a
//! zero-shot chat-model client.

mod nb;
mod remote;
mod training;
mod zeroshot;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::label::StanceLabel;

pub use nb::{tokenize, NbError, NbModel, NB_BACKEND};
pub use remote::{InferenceRequest, InferenceResponse, InferenceTransport, ProbTriple, RemoteClient, REMOTE_BACKEND};
pub use training::{emit_training_config, TrainingConfig, TrainingConfigError};
pub use zeroshot::{
    build_prompt, parse_llm_response, AuditEntry, ChatMessage, ChatRequest, ChatTransport, ParseError, PromptError,
    PromptTemplate, ZeroShotClient, DEFAULT_INSTRUCTION, ZEROSHOT_BACKEND,
};

#[cfg(feature = "http")]
pub use remote::HttpInference;
#[cfg(feature = "http")]
pub use zeroshot::HttpChat;
#[cfg(feature = "http")]
pub(crate) use remote::{agent as http_agent, post_json as http_post_json};

/// Tolerance for externally supplied probability triples.
pub const INPUT_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictionError {
    #[error("probability {0} is negative or not finite")]
    BadProbability(f64),
    #[error("probabilities sum to {0}, not 1")]
    BadSum(f64),
}

/// One classifier output.
///
/// `probs` are ordered Against, Neutral, Supportive. `distribution` is
/// false when the backend returned only a label (zero-shot), in which case
/// `probs` is one-hot and must not be thresholded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sentence_id: String,
    pub probs: [f64; 3],
    pub label: StanceLabel,
    pub backend: String,
    pub model_version: String,
    pub distribution: bool,
}

/// Index of the largest probability; ties go to the earlier class.
pub fn argmax(probs: &[f64; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    best
}

impl Prediction {
    /// Validates a probability triple (sum within [`INPUT_SUM_TOLERANCE`]),
    /// renormalizes it and takes the argmax label.
    pub fn from_probs(
        sentence_id: impl Into<String>,
        probs: [f64; 3],
        backend: impl Into<String>,
        model_version: impl Into<String>,
    ) -> Result<Prediction, PredictionError> {
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(PredictionError::BadProbability(p));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > INPUT_SUM_TOLERANCE {
            return Err(PredictionError::BadSum(sum));
        }
        let probs = probs.map(|p| p / sum);
        Ok(Prediction {
            sentence_id: sentence_id.into(),
            label: StanceLabel::CLASSES[argmax(&probs)],
            probs,
            backend: backend.into(),
            model_version: model_version.into(),
            distribution: true,
        })
    }

    /// A label-only prediction with one-hot probabilities.
    pub fn one_hot(
        sentence_id: impl Into<String>,
        label: StanceLabel,
        backend: impl Into<String>,
        model_version: impl Into<String>,
    ) -> Option<Prediction> {
        let idx = label.class_index()?;
        let mut probs = [0.0; 3];
        probs[idx] = 1.0;
        Some(Prediction {
            sentence_id: sentence_id.into(),
            probs,
            label,
            backend: backend.into(),
            model_version: model_version.into(),
            distribution: false,
        })
    }

    /// Probability of the predicted label.
    pub fn confidence(&self) -> f64 {
        self.label.class_index().map_or(0.0, |i| self.probs[i])
    }
}

/// A sentence handed to a classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextItem {
    pub id: String,
    pub text: String,
}

impl TextItem {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        TextItem {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// A sentence the backend could not classify.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub sentence_id: String,
    pub batch: usize,
    pub attempts: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch: usize,
    pub size: usize,
    pub attempts: u32,
    pub ok: bool,
}

/// Every input ends up in exactly one of `predictions` or `failures`, in
/// input order within each.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOutcome {
    pub predictions: Vec<Prediction>,
    pub failures: Vec<Failure>,
    pub batches: Vec<BatchReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("endpoint unreachable: {0}")]
    Unavailable(String),
    #[error("endpoint returned status {0}: {1}")]
    Status(u16, String),
    #[error("undecodable response: {0}")]
    Decode(String),
}

/// Common interface over all backends.
pub trait Classifier {
    fn backend(&self) -> &str;
    fn classify(&self, items: &[TextItem]) -> ClassifyOutcome;
}

#[derive(Debug, thiserror::Error)]
pub enum PredictionCsvError {
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Serialize, Deserialize)]
struct PredictionRow {
    sentence_id: String,
    p_against: f64,
    p_neutral: f64,
    p_supportive: f64,
    label: String,
    backend: String,
    model_version: String,
    #[serde(default = "default_true")]
    distribution: bool,
}

fn default_true() -> bool {
    true
}

/// Writes predictions as CSV. A trailing `distribution` column marks
/// label-only rows.
pub fn write_predictions<W: Write>(predictions: &[Prediction], out: W) -> Result<(), PredictionCsvError> {
    let mut w = csv::Writer::from_writer(out);
    for p in predictions {
        w.serialize(PredictionRow {
            sentence_id: p.sentence_id.clone(),
            p_against: p.probs[0],
            p_neutral: p.probs[1],
            p_supportive: p.probs[2],
            label: p.label.as_str().to_string(),
            backend: p.backend.clone(),
            model_version: p.model_version.clone(),
            distribution: p.distribution,
        })?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a prediction CSV. The `label` column must equal the argmax of the
/// probabilities; a missing `distribution` column means true.
pub fn read_predictions<R: Read>(input: R) -> Result<Vec<Prediction>, PredictionCsvError> {
    let mut out = Vec::new();
    for (i, row) in csv::Reader::from_reader(input).deserialize::<PredictionRow>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| PredictionCsvError::Row {
            row: row_no,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| PredictionCsvError::Row { row: row_no, reason };
        let mut p = Prediction::from_probs(
            row.sentence_id,
            [row.p_against, row.p_neutral, row.p_supportive],
            row.backend,
            row.model_version,
        )
        .map_err(|e| bad(e.to_string()))?;
        let stated: StanceLabel = row.label.parse().map_err(|e: crate::label::UnknownLabel| bad(e.to_string()))?;
        if stated != p.label {
            return Err(bad(format!("label {stated} is not the argmax {}", p.label)));
        }
        p.distribution = row.distribution;
        out.push(p);
    }
    Ok(out)
}
