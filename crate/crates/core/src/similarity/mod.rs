//! Embedding cache and provider client, and monthly mean pairwise cosine
//! similarity per stance, across and within publishers.

mod cache;
mod fetch;

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Publisher;
use crate::label::StanceLabel;
use crate::trends::{Granularity, StanceObs, TimeBucket};

pub use cache::{CacheError, CacheManifest, EmbeddingCache};
#[cfg(feature = "http")]
pub use fetch::HttpEmbedding;
pub use fetch::{fetch_embeddings, EmbedRequest, EmbedResponse, EmbeddingTransport, FetchError, FetchReport};

/// Per-side sample size above which pairs are drawn from a seeded sample.
pub const DEFAULT_SAMPLE_CAP: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CosineError {
    #[error("vectors differ in dimension ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("zero vector")]
    ZeroVector,
}

/// dot(u, v) / (‖u‖‖v‖), clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, CosineError> {
    if u.len() != v.len() {
        return Err(CosineError::DimMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(CosineError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Pairs with one sentence from each publisher; `a` < `b`.
    CrossPublisher { a: Publisher, b: Publisher },
    /// Distinct pairs within one publisher.
    WithinPublisher { publisher: Publisher },
}

impl SimilarityMode {
    pub fn cross(x: Publisher, y: Publisher) -> SimilarityMode {
        if x <= y {
            SimilarityMode::CrossPublisher { a: x, b: y }
        } else {
            SimilarityMode::CrossPublisher { a: y, b: x }
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SimilarityMode::CrossPublisher { .. } => "cross_publisher",
            SimilarityMode::WithinPublisher { .. } => "within_publisher",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPoint {
    pub month: String,
    pub stance: StanceLabel,
    pub mode: SimilarityMode,
    pub mean_cosine: f64,
    pub pair_count: u64,
    pub sampled: bool,
}

/// A (month, stance, mode) cell with too few sentences for any pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingPoint {
    pub month: String,
    pub stance: StanceLabel,
    pub mode: SimilarityMode,
    pub sizes: (usize, usize),
}

/// FNV-1a over the parts, separated by a zero byte.
fn stable_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for part in parts {
        for b in part.bytes().chain(std::iter::once(0)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// The vectors of one (publisher, month, stance) cell, sampled down to
/// `cap` with a generator keyed on the cell so that the same cell gets the
/// same sample whichever comparison it takes part in.
fn sample_side<'a>(
    vectors: &[&'a [f64]],
    cap: usize,
    seed: u64,
    publisher: &Publisher,
    month: &str,
    stance: StanceLabel,
) -> (Vec<&'a [f64]>, bool) {
    if vectors.len() <= cap {
        return (vectors.to_vec(), false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, &[publisher.as_str(), month, stance.as_str()]));
    let mut picked = rand::seq::index::sample(&mut rng, vectors.len(), cap).into_vec();
    picked.sort_unstable();
    (picked.into_iter().map(|i| vectors[i]).collect(), true)
}

/// Mean cosine over all pairs (x, y) with x from `left` and y from `right`.
pub fn mean_cross(left: &[&[f64]], right: &[&[f64]]) -> Result<Option<(f64, u64)>, CosineError> {
    if left.is_empty() || right.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for x in left {
        for y in right {
            sum += cosine(x, y)?;
        }
    }
    let n = (left.len() * right.len()) as u64;
    Ok(Some(((sum / n as f64).clamp(-1.0, 1.0), n)))
}

/// Mean cosine over unordered pairs of distinct elements.
pub fn mean_within(set: &[&[f64]]) -> Result<Option<(f64, u64)>, CosineError> {
    if set.len() < 2 {
        return Ok(None);
    }
    let mut sum = 0.0;
    let mut n = 0u64;
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            sum += cosine(set[i], set[j])?;
            n += 1;
        }
    }
    Ok(Some(((sum / n as f64).clamp(-1.0, 1.0), n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityOptions {
    pub seed: u64,
    pub cap: usize,
}

impl Default for SimilarityOptions {
    fn default() -> Self {
        SimilarityOptions {
            seed: 0,
            cap: DEFAULT_SAMPLE_CAP,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySeries {
    pub points: Vec<SimilarityPoint>,
    pub missing: Vec<MissingPoint>,
    /// Observations skipped because no embedding was cached for them.
    pub without_embedding: usize,
}

type Cells<'a> = BTreeMap<(String, StanceLabel), BTreeMap<Publisher, Vec<&'a [f64]>>>;

/// Monthly similarity series by argmax stance: every publisher pair
/// (cross) and every publisher on its own (within). Cells are visited in
/// (month, stance, publisher) order, so output is deterministic.
pub fn similarity_series<'a, F>(
    obs: &[StanceObs],
    embedding: F,
    options: SimilarityOptions,
) -> Result<SimilaritySeries, CosineError>
where
    F: Fn(&str) -> Option<&'a [f64]>,
{
    let mut out = SimilaritySeries::default();
    let mut cells: Cells<'a> = BTreeMap::new();
    let mut publishers = std::collections::BTreeSet::new();
    for o in obs {
        publishers.insert(o.publisher.clone());
        let Some(v) = embedding(&o.sentence_id) else {
            out.without_embedding += 1;
            continue;
        };
        let month = TimeBucket::of(o.date, Granularity::Month).key;
        cells
            .entry((month, o.prediction.label))
            .or_default()
            .entry(o.publisher.clone())
            .or_default()
            .push(v);
    }
    let publishers: Vec<Publisher> = publishers.into_iter().collect();
    let empty: Vec<&[f64]> = Vec::new();
    for ((month, stance), by_pub) in &cells {
        let sides: Vec<(Vec<&[f64]>, bool)> = publishers
            .iter()
            .map(|p| {
                let v = by_pub.get(p).unwrap_or(&empty);
                sample_side(v, options.cap, options.seed, p, month, *stance)
            })
            .collect();
        for i in 0..publishers.len() {
            for j in i + 1..publishers.len() {
                let mode = SimilarityMode::cross(publishers[i].clone(), publishers[j].clone());
                match mean_cross(&sides[i].0, &sides[j].0)? {
                    Some((mean, n)) => out.points.push(SimilarityPoint {
                        month: month.clone(),
                        stance: *stance,
                        mode,
                        mean_cosine: mean,
                        pair_count: n,
                        sampled: sides[i].1 || sides[j].1,
                    }),
                    None => out.missing.push(MissingPoint {
                        month: month.clone(),
                        stance: *stance,
                        mode,
                        sizes: (sides[i].0.len(), sides[j].0.len()),
                    }),
                }
            }
        }
        for (i, p) in publishers.iter().enumerate() {
            let mode = SimilarityMode::WithinPublisher { publisher: p.clone() };
            match mean_within(&sides[i].0)? {
                Some((mean, n)) => out.points.push(SimilarityPoint {
                    month: month.clone(),
                    stance: *stance,
                    mode,
                    mean_cosine: mean,
                    pair_count: n,
                    sampled: sides[i].1,
                }),
                None => out.missing.push(MissingPoint {
                    month: month.clone(),
                    stance: *stance,
                    mode,
                    sizes: (sides[i].0.len(), 0),
                }),
            }
        }
    }
    Ok(out)
}

/// Tidy CSV: month, stance, mode, publisher_a, publisher_b, mean_cosine,
/// pair_count, sampled.
pub fn write_similarity_csv<W: Write>(points: &[SimilarityPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "month",
        "stance",
        "mode",
        "publisher_a",
        "publisher_b",
        "mean_cosine",
        "pair_count",
        "sampled",
    ])?;
    for p in points {
        let (a, b) = match &p.mode {
            SimilarityMode::CrossPublisher { a, b } => (a.as_str(), b.as_str()),
            SimilarityMode::WithinPublisher { publisher } => (publisher.as_str(), ""),
        };
        w.write_record([
            p.month.as_str(),
            p.stance.as_str(),
            p.mode.as_str(),
            a,
            b,
            &p.mean_cosine.to_string(),
            &p.pair_count.to_string(),
            if p.sampled { "true" } else { "false" },
        ])?;
    }
    w.flush()?;
    Ok(())
}
