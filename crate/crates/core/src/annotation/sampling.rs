use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Publisher;
use crate::lexicon::GroupName;

/// A topical sentence eligible for sampling, tagged with its primary
/// keyword group (the first group that hit it).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub sentence_id: String,
    pub publisher: Publisher,
    pub group: GroupName,
    #[serde(default)]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationBatch {
    pub id: String,
    pub sentence_ids: Vec<String>,
    pub annotators: Vec<String>,
    /// Double-annotated for agreement; always has two or more annotators.
    pub overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub batch: AnnotationBatch,
    /// Sentences drawn per (publisher, group) cell.
    pub cells: BTreeMap<(Publisher, GroupName), usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("cell ({publisher}, {group}) needs {needed} sentences but only {available} are eligible")]
    InsufficientCell {
        publisher: Publisher,
        group: GroupName,
        needed: usize,
        available: usize,
    },
    #[error("no eligible sentences to sample from")]
    NoCandidates,
    #[error("assignment needs at least {0} annotators")]
    TooFewAnnotators(usize),
}

/// Largest-remainder apportionment of `total` over `weights`; ties in the
/// remainder go to the earlier entry.
fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut quotas: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Remainders compared exactly as (total * w) mod sum.
    order.sort_by(|&a, &b| ((total * weights[b]) % sum).cmp(&((total * weights[a]) % sum)).then(a.cmp(&b)));
    for &i in order.iter().take(total - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Draws `n` sentences balanced by publisher and keyword prevalence.
///
/// `n` is split into equal publisher halves (largest remainder across
/// publishers); within each publisher the share is proportional to how many
/// eligible sentences each group has there. Flagged sentences are not
/// eligible. Membership is a seeded shuffle, so the same seed gives the
/// same batch and a different seed only changes membership.
pub fn sample_for_annotation(candidates: &[Candidate], n: usize, seed: u64) -> Result<SampleOutcome, SampleError> {
    let mut seen = HashSet::new();
    let mut pools: BTreeMap<Publisher, BTreeMap<GroupName, Vec<&Candidate>>> = BTreeMap::new();
    for c in candidates {
        if c.flagged || !seen.insert(c.sentence_id.as_str()) {
            continue;
        }
        pools
            .entry(c.publisher.clone())
            .or_default()
            .entry(c.group)
            .or_default()
            .push(c);
    }

    let batch_id = format!("sample-{seed}-{n}");
    if n == 0 {
        return Ok(SampleOutcome {
            batch: AnnotationBatch {
                id: batch_id,
                sentence_ids: Vec::new(),
                annotators: Vec::new(),
                overlap: false,
            },
            cells: BTreeMap::new(),
        });
    }
    if pools.is_empty() {
        return Err(SampleError::NoCandidates);
    }

    let halves = apportion(n, &vec![1; pools.len()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells = BTreeMap::new();
    let mut chosen = Vec::with_capacity(n);

    for ((publisher, groups), half) in pools.iter().zip(halves) {
        let names: Vec<GroupName> = groups.keys().copied().collect();
        let weights: Vec<usize> = groups.values().map(Vec::len).collect();
        let quotas = apportion(half, &weights);
        for ((group, available), quota) in names.iter().zip(&weights).zip(&quotas) {
            if quota > available {
                return Err(SampleError::InsufficientCell {
                    publisher: publisher.clone(),
                    group: *group,
                    needed: *quota,
                    available: *available,
                });
            }
        }
        // A publisher too small for its half never reaches here with
        // zero-weight groups, so every unit of `half` is placed above.
        for (group, quota) in names.into_iter().zip(quotas) {
            let mut pool: Vec<&Candidate> = groups[&group].clone();
            pool.sort_by(|a, b| a.sentence_id.cmp(&b.sentence_id));
            pool.shuffle(&mut rng);
            chosen.extend(pool.into_iter().take(quota).map(|c| c.sentence_id.clone()));
            if quota > 0 {
                cells.insert((publisher.clone(), group), quota);
            }
        }
    }
    chosen.shuffle(&mut rng);

    Ok(SampleOutcome {
        batch: AnnotationBatch {
            id: batch_id,
            sentence_ids: chosen,
            annotators: Vec::new(),
            overlap: false,
        },
        cells,
    })
}

/// How primary annotators split the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    /// Contiguous chunks, one per annotator.
    #[default]
    Disjoint,
    /// Round-robin.
    Interleaved,
}

/// A further annotator who re-rates `per_primary` sentences from each
/// primary annotator's share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapPlan {
    pub annotator: String,
    pub per_primary: usize,
}

/// Splits a sampled batch across primary annotators; with an overlap plan,
/// the first `per_primary` sentences of each share move into an overlap
/// batch rated by both that primary annotator and the overlap annotator.
/// Every sentence ends up in exactly one batch.
pub fn plan_assignments(
    sample: &AnnotationBatch,
    primaries: &[String],
    coverage: Coverage,
    overlap: Option<&OverlapPlan>,
) -> Result<Vec<AnnotationBatch>, SampleError> {
    if primaries.is_empty() {
        return Err(SampleError::TooFewAnnotators(1));
    }
    let k = primaries.len();
    let mut shares: Vec<Vec<String>> = vec![Vec::new(); k];
    match coverage {
        Coverage::Disjoint => {
            let sizes = apportion(sample.sentence_ids.len(), &vec![1; k]);
            let mut it = sample.sentence_ids.iter().cloned();
            for (share, size) in shares.iter_mut().zip(sizes) {
                share.extend(it.by_ref().take(size));
            }
        }
        Coverage::Interleaved => {
            for (i, id) in sample.sentence_ids.iter().enumerate() {
                shares[i % k].push(id.clone());
            }
        }
    }

    let mut batches = Vec::new();
    for (annotator, mut share) in primaries.iter().zip(shares) {
        if let Some(plan) = overlap {
            let take = plan.per_primary.min(share.len());
            let overlapped: Vec<String> = share.drain(..take).collect();
            if !overlapped.is_empty() {
                batches.push(AnnotationBatch {
                    id: format!("{}-{annotator}-overlap", sample.id),
                    sentence_ids: overlapped,
                    annotators: vec![annotator.clone(), plan.annotator.clone()],
                    overlap: true,
                });
            }
        }
        batches.push(AnnotationBatch {
            id: format!("{}-{annotator}", sample.id),
            sentence_ids: share,
            annotators: vec![annotator.clone()],
            overlap: false,
        });
    }
    Ok(batches)
}
