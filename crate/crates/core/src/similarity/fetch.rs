use serde::{Deserialize, Serialize};

use super::cache::{CacheError, EmbeddingCache};
use crate::classify::{TextItem, TransportError};
use crate::retry::Backoff;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

pub trait EmbeddingTransport: Send + Sync {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, TransportError>;
}

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("provider {provider}: {source} (after {attempts} attempts)")]
    Transport {
        provider: String,
        attempts: u32,
        source: TransportError,
    },
    #[error("provider {provider}: {got} vectors for {expected} sentences")]
    CountMismatch { provider: String, expected: usize, got: usize },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchReport {
    pub cache_hits: usize,
    pub fetched: usize,
    pub requests: usize,
}

/// Fills the cache for `items`. Cached ids cost nothing; the rest go out in
/// requests of at most `batch_limit` sentences, each retried with `backoff`.
/// Each batch is cached as soon as it arrives, so a later failure keeps the
/// earlier batches.
pub fn fetch_embeddings<T: EmbeddingTransport>(
    transport: &T,
    cache: &mut EmbeddingCache,
    items: &[TextItem],
    batch_limit: usize,
    backoff: &Backoff,
) -> Result<FetchReport, FetchError> {
    let mut report = FetchReport::default();
    let mut seen = std::collections::HashSet::new();
    let mut missing = Vec::new();
    for it in items {
        if !seen.insert(it.id.as_str()) {
            continue;
        }
        if cache.contains(&it.id) {
            report.cache_hits += 1;
        } else {
            missing.push(it);
        }
    }
    let provider = cache.provider().to_string();
    for batch in missing.chunks(batch_limit.max(1)) {
        let request = EmbedRequest {
            sentences: batch.iter().map(|it| it.text.clone()).collect(),
        };
        report.requests += 1;
        let (response, _) = backoff
            .run(|_| transport.embed(&request))
            .map_err(|(source, attempts)| FetchError::Transport {
                provider: provider.clone(),
                attempts,
                source,
            })?;
        if response.vectors.len() != batch.len() {
            return Err(FetchError::CountMismatch {
                provider,
                expected: batch.len(),
                got: response.vectors.len(),
            });
        }
        if let Some(bad) = response.vectors.iter().find(|v| v.len() != response.dim) {
            return Err(CacheError::DimMismatch {
                provider,
                expected: response.dim,
                got: bad.len(),
            }
            .into());
        }
        let pairs: Vec<(String, Vec<f64>)> = batch
            .iter()
            .zip(response.vectors)
            .map(|(it, v)| (it.id.clone(), v))
            .collect();
        report.fetched += cache.insert_batch(&pairs)?;
    }
    Ok(report)
}

/// Embedding provider over HTTP: POST `{sentences}` → `{dim, vectors}`.
#[cfg(feature = "http")]
pub struct HttpEmbedding {
    pub url: String,
    pub token: Option<String>,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpEmbedding {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: std::time::Duration) -> Self {
        HttpEmbedding {
            url: url.into(),
            token,
            agent: crate::classify::http_agent(timeout),
        }
    }
}

#[cfg(feature = "http")]
impl EmbeddingTransport for HttpEmbedding {
    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, TransportError> {
        crate::classify::http_post_json(&self.agent, &self.url, self.token.as_deref(), request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Fake {
        dim: usize,
        wrong_dim: bool,
        calls: AtomicUsize,
    }

    impl EmbeddingTransport for Fake {
        fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let d = if self.wrong_dim { self.dim + 1 } else { self.dim };
            Ok(EmbedResponse {
                dim: d,
                vectors: request
                    .sentences
                    .iter()
                    .map(|s| (0..d).map(|i| (s.len() + i + 1) as f64).collect())
                    .collect(),
            })
        }
    }

    fn items(n: usize) -> Vec<TextItem> {
        (0..n).map(|i| TextItem::new(format!("s{i}"), format!("lause {i}"))).collect()
    }

    #[test]
    fn batches_and_cache_hits() {
        let t = Fake {
            dim: 4,
            wrong_dim: false,
            calls: AtomicUsize::new(0),
        };
        let mut cache = EmbeddingCache::in_memory("fake");
        let r = fetch_embeddings(&t, &mut cache, &items(1000), 100, &Backoff::immediate(1)).unwrap();
        assert_eq!(r.requests, 10);
        assert_eq!(r.fetched, 1000);
        let again = fetch_embeddings(&t, &mut cache, &items(1000), 100, &Backoff::immediate(1)).unwrap();
        assert_eq!(again.requests, 0);
        assert_eq!(again.cache_hits, 1000);
        assert_eq!(t.calls.load(Ordering::SeqCst), 10);
    }

    #[test]
    fn dimension_change_names_provider() {
        let mut cache = EmbeddingCache::in_memory("fake");
        let ok = Fake {
            dim: 4,
            wrong_dim: false,
            calls: AtomicUsize::new(0),
        };
        fetch_embeddings(&ok, &mut cache, &items(2), 10, &Backoff::immediate(1)).unwrap();
        let bad = Fake {
            dim: 4,
            wrong_dim: true,
            calls: AtomicUsize::new(0),
        };
        let more: Vec<TextItem> = (5..7).map(|i| TextItem::new(format!("s{i}"), "x")).collect();
        let err = fetch_embeddings(&bad, &mut cache, &more, 10, &Backoff::immediate(1)).unwrap_err();
        assert_eq!(err.to_string(), "provider fake: expected dimension 4, got 5");
    }
}
