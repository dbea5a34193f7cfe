use serde::{Deserialize, Serialize};

use super::{BatchReport, Classifier, ClassifyOutcome, Failure, Prediction, TextItem, TransportError};
use crate::retry::Backoff;

pub const REMOTE_BACKEND: &str = "remote";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub model: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbTriple {
    pub against: f64,
    pub neutral: f64,
    pub supportive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResponse {
    pub model_version: String,
    pub predictions: Vec<ProbTriple>,
}

/// Wire boundary to a model server.
pub trait InferenceTransport: Send + Sync {
    fn infer(&self, request: &InferenceRequest) -> Result<InferenceResponse, TransportError>;
}

/// Client for an externally hosted fine-tuned classifier.
pub struct RemoteClient<T> {
    pub transport: T,
    pub model: String,
    pub max_batch: usize,
    pub backoff: Backoff,
}

impl<T: InferenceTransport> RemoteClient<T> {
    pub fn new(transport: T, model: impl Into<String>) -> Self {
        RemoteClient {
            transport,
            model: model.into(),
            max_batch: 32,
            backoff: Backoff::default(),
        }
    }

    fn run_batch(&self, index: usize, batch: &[TextItem], out: &mut ClassifyOutcome) {
        let request = InferenceRequest {
            model: self.model.clone(),
            sentences: batch.iter().map(|it| it.text.clone()).collect(),
        };
        let fail_all = |out: &mut ClassifyOutcome, attempts: u32, reason: String| {
            for it in batch {
                out.failures.push(Failure {
                    sentence_id: it.id.clone(),
                    batch: index,
                    attempts,
                    reason: reason.clone(),
                });
            }
        };
        match self.backoff.run(|_| self.transport.infer(&request)) {
            Err((err, attempts)) => {
                fail_all(out, attempts, err.to_string());
                out.batches.push(BatchReport {
                    batch: index,
                    size: batch.len(),
                    attempts,
                    ok: false,
                });
            }
            Ok((response, attempts)) => {
                if response.predictions.len() != batch.len() {
                    let reason = format!(
                        "response has {} predictions for {} sentences",
                        response.predictions.len(),
                        batch.len()
                    );
                    fail_all(out, attempts, reason);
                    out.batches.push(BatchReport {
                        batch: index,
                        size: batch.len(),
                        attempts,
                        ok: false,
                    });
                    return;
                }
                let mut ok = true;
                for (it, triple) in batch.iter().zip(&response.predictions) {
                    let probs = [triple.against, triple.neutral, triple.supportive];
                    match Prediction::from_probs(&it.id, probs, REMOTE_BACKEND, &response.model_version) {
                        Ok(p) => out.predictions.push(p),
                        Err(e) => {
                            ok = false;
                            out.failures.push(Failure {
                                sentence_id: it.id.clone(),
                                batch: index,
                                attempts,
                                reason: e.to_string(),
                            });
                        }
                    }
                }
                out.batches.push(BatchReport {
                    batch: index,
                    size: batch.len(),
                    attempts,
                    ok,
                });
            }
        }
    }
}

impl<T: InferenceTransport> Classifier for RemoteClient<T> {
    fn backend(&self) -> &str {
        REMOTE_BACKEND
    }

    fn classify(&self, items: &[TextItem]) -> ClassifyOutcome {
        let mut out = ClassifyOutcome::default();
        for (i, batch) in items.chunks(self.max_batch.max(1)).enumerate() {
            self.run_batch(i, batch, &mut out);
        }
        out
    }
}

#[cfg(feature = "http")]
pub(crate) fn post_json<Req: Serialize, Resp: serde::de::DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    token: Option<&str>,
    body: &Req,
) -> Result<Resp, TransportError> {
    let mut req = agent.post(url);
    if let Some(t) = token {
        req = req.header("Authorization", format!("Bearer {t}"));
    }
    let mut resp = req.send_json(body).map_err(|e| TransportError::Unavailable(e.to_string()))?;
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(TransportError::Status(status, text));
    }
    resp.body_mut()
        .read_json()
        .map_err(|e| TransportError::Decode(e.to_string()))
}

#[cfg(feature = "http")]
pub(crate) fn agent(timeout: std::time::Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// JSON-over-HTTP inference endpoint.
#[cfg(feature = "http")]
pub struct HttpInference {
    pub url: String,
    pub token: Option<String>,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpInference {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: std::time::Duration) -> Self {
        HttpInference {
            url: url.into(),
            token,
            agent: agent(timeout),
        }
    }
}

#[cfg(feature = "http")]
impl InferenceTransport for HttpInference {
    fn infer(&self, request: &InferenceRequest) -> Result<InferenceResponse, TransportError> {
        post_json(&self.agent, &self.url, self.token.as_deref(), request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::StanceLabel;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Fixed {
        triples: Vec<[f64; 3]>,
        fail_first: u32,
        calls: AtomicU32,
    }

    impl InferenceTransport for Fixed {
        fn infer(&self, request: &InferenceRequest) -> Result<InferenceResponse, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(TransportError::Unavailable("down".into()));
            }
            Ok(InferenceResponse {
                model_version: "m-7".into(),
                predictions: request
                    .sentences
                    .iter()
                    .enumerate()
                    .map(|(i, _)| {
                        let t = self.triples[i % self.triples.len()];
                        ProbTriple {
                            against: t[0],
                            neutral: t[1],
                            supportive: t[2],
                        }
                    })
                    .collect(),
            })
        }
    }

    fn client(triples: Vec<[f64; 3]>, fail_first: u32) -> RemoteClient<Fixed> {
        let mut c = RemoteClient::new(
            Fixed {
                triples,
                fail_first,
                calls: AtomicU32::new(0),
            },
            "est",
        );
        c.backoff = Backoff::immediate(3);
        c.max_batch = 2;
        c
    }

    fn items(n: usize) -> Vec<TextItem> {
        (0..n).map(|i| TextItem::new(format!("s{i}"), format!("text {i}"))).collect()
    }

    #[test]
    fn labels_follow_argmax_in_order() {
        let out = client(vec![[0.7, 0.2, 0.1], [0.85, 0.11, 0.04], [0.1, 0.1, 0.8]], 0).classify(&items(3));
        assert!(out.failures.is_empty());
        let labels: Vec<_> = out.predictions.iter().map(|p| p.label).collect();
        assert_eq!(labels, vec![StanceLabel::Against, StanceLabel::Against, StanceLabel::Against]);
        assert_eq!(out.predictions[0].model_version, "m-7");
        let ids: Vec<_> = out.predictions.iter().map(|p| p.sentence_id.as_str()).collect();
        assert_eq!(ids, vec!["s0", "s1", "s2"]);
    }

    #[test]
    fn bad_sum_is_a_per_sentence_failure() {
        let out = client(vec![[0.7, 0.2, 0.1], [0.25, 0.15, 0.1]], 0).classify(&items(2));
        assert_eq!(out.predictions.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].sentence_id, "s1");
    }

    #[test]
    fn transport_retries_then_gives_up() {
        let out = client(vec![[0.2, 0.5, 0.3]], 2).classify(&items(1));
        assert_eq!(out.predictions.len(), 1);
        assert_eq!(out.batches[0].attempts, 3);

        let out = client(vec![[0.2, 0.5, 0.3]], 99).classify(&items(3));
        assert_eq!(out.failures.len(), 3);
        assert!(out.predictions.is_empty());
    }
}
