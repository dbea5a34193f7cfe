//! Diachronic aggregation: topical-article shares, topical sentence counts
//! and stance-share series per publisher and keyword group, with an
//! optional certainty threshold.

mod bucket;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::classify::Prediction;
use crate::corpus::{Article, Publisher, Segmenter};
use crate::lexicon::{GroupHit, GroupName, Lexicon};

pub use bucket::{Granularity, TimeBucket, UnknownGranularity};

/// Default certainty threshold for the uncertain bucket.
pub const DEFAULT_THRESHOLD: f64 = 0.70;

/// Column names for [`TrendPoint::counts`].
pub const STANCE_COLUMNS: [&str; 4] = ["Against", "Neutral", "Supportive", "Uncertain"];
pub const UNCERTAIN: usize = 3;

pub const CSV_HEADER: [&str; 9] = [
    "bucket",
    "segment",
    "publisher",
    "group",
    "stance",
    "count",
    "total",
    "share",
    "flags",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrendError {
    #[error("threshold {0} outside (1/3, 1]")]
    BadThreshold(f64),
    #[error("sentence {0} has a label-only prediction and cannot be thresholded")]
    DistributionFree(String),
}

/// Inclusive date range. `None` spans the earliest to latest input date.
pub type Span = Option<(NaiveDate, NaiveDate)>;

fn resolve_span(span: Span, dates: impl Iterator<Item = NaiveDate>) -> Option<(NaiveDate, NaiveDate)> {
    span.or_else(|| {
        let mut dates = dates.peekable();
        let first = *dates.peek()?;
        Some(dates.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d))))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleMention {
    pub publisher: Publisher,
    pub date: NaiveDate,
    pub topical: bool,
}

/// Marks each dated article as topical when any body sentence hits the
/// lexicon. Undated articles are skipped.
pub fn article_mentions(articles: &[Article], lexicon: &Lexicon, segmenter: &Segmenter) -> Vec<ArticleMention> {
    articles
        .iter()
        .filter_map(|a| {
            let date = a.date()?;
            let topical = segmenter
                .segment(a)
                .iter()
                .any(|s| !lexicon.match_text(&s.text).is_empty());
            Some(ArticleMention {
                publisher: a.publisher.clone(),
                date,
                topical,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionPoint {
    pub bucket: TimeBucket,
    pub publisher: Publisher,
    pub articles: u64,
    pub topical: u64,
    pub share: f64,
    /// No articles at all in this bucket.
    pub empty: bool,
}

/// Share of articles with at least one topical sentence, per publisher and
/// bucket. Buckets without articles are emitted with `empty` set.
pub fn article_mention_share(mentions: &[ArticleMention], granularity: Granularity, span: Span) -> Vec<MentionPoint> {
    let Some((from, to)) = resolve_span(span, mentions.iter().map(|m| m.date)) else {
        return Vec::new();
    };
    let buckets = TimeBucket::range(from, to, granularity);
    let publishers: BTreeSet<&Publisher> = mentions.iter().map(|m| &m.publisher).collect();
    let mut counts: HashMap<(&Publisher, TimeBucket), (u64, u64)> = HashMap::new();
    for m in mentions.iter().filter(|m| m.date >= from && m.date <= to) {
        let e = counts.entry((&m.publisher, TimeBucket::of(m.date, granularity))).or_default();
        e.0 += 1;
        e.1 += m.topical as u64;
    }
    let mut out = Vec::new();
    for p in publishers {
        for b in &buckets {
            let (articles, topical) = counts.get(&(p, b.clone())).copied().unwrap_or_default();
            out.push(MentionPoint {
                bucket: b.clone(),
                publisher: p.clone(),
                articles,
                topical,
                share: if articles == 0 { 0.0 } else { topical as f64 / articles as f64 },
                empty: articles == 0,
            });
        }
    }
    out
}

/// A topical sentence with its publisher and publication date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatedSentence {
    pub sentence_id: String,
    pub publisher: Publisher,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPoint {
    pub bucket: TimeBucket,
    pub publisher: Publisher,
    pub count: u64,
}

/// Topical sentences per publisher and bucket; empty buckets count 0.
pub fn sentence_counts(sentences: &[DatedSentence], granularity: Granularity, span: Span) -> Vec<CountPoint> {
    let Some((from, to)) = resolve_span(span, sentences.iter().map(|s| s.date)) else {
        return Vec::new();
    };
    let buckets = TimeBucket::range(from, to, granularity);
    let publishers: BTreeSet<&Publisher> = sentences.iter().map(|s| &s.publisher).collect();
    let mut counts: HashMap<(&Publisher, TimeBucket), u64> = HashMap::new();
    for s in sentences.iter().filter(|s| s.date >= from && s.date <= to) {
        *counts.entry((&s.publisher, TimeBucket::of(s.date, granularity))).or_default() += 1;
    }
    let mut out = Vec::new();
    for p in publishers {
        for b in &buckets {
            out.push(CountPoint {
                bucket: b.clone(),
                publisher: p.clone(),
                count: counts.get(&(p, b.clone())).copied().unwrap_or(0),
            });
        }
    }
    out
}

/// Sums count points into a coarser granularity (week → month → year).
pub fn rebin_counts(points: &[CountPoint], to: Granularity) -> Vec<CountPoint> {
    let mut sums: BTreeMap<(Publisher, TimeBucket), u64> = BTreeMap::new();
    for p in points {
        *sums
            .entry((p.publisher.clone(), TimeBucket::of(p.bucket.start, to)))
            .or_default() += p.count;
    }
    sums.into_iter()
        .map(|((publisher, bucket), count)| CountPoint { bucket, publisher, count })
        .collect()
}

/// A prediction joined to its sentence's publisher and date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceObs {
    pub sentence_id: String,
    pub publisher: Publisher,
    pub date: NaiveDate,
    pub prediction: Prediction,
}

/// Joins predictions to dated sentences by id. Returns the joined rows and
/// the number of predictions that had no dated sentence.
pub fn join_predictions(sentences: &[DatedSentence], predictions: &[Prediction]) -> (Vec<StanceObs>, usize) {
    let by_id: HashMap<&str, &DatedSentence> = sentences.iter().map(|s| (s.sentence_id.as_str(), s)).collect();
    let mut unmatched = 0;
    let mut out = Vec::with_capacity(predictions.len());
    for p in predictions {
        match by_id.get(p.sentence_id.as_str()) {
            Some(s) => out.push(StanceObs {
                sentence_id: p.sentence_id.clone(),
                publisher: s.publisher.clone(),
                date: s.date,
                prediction: p.clone(),
            }),
            None => unmatched += 1,
        }
    }
    (out, unmatched)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub bucket: TimeBucket,
    pub publisher: Publisher,
    pub group: Option<GroupName>,
    /// Against, Neutral, Supportive, Uncertain.
    pub counts: [u64; 4],
    pub total: u64,
    pub shares: [f64; 4],
    pub empty: bool,
}

impl TrendPoint {
    fn new(bucket: TimeBucket, publisher: Publisher, group: Option<GroupName>, counts: [u64; 4]) -> TrendPoint {
        let total: u64 = counts.iter().sum();
        TrendPoint {
            bucket,
            publisher,
            group,
            counts,
            total,
            shares: if total == 0 {
                [0.0; 4]
            } else {
                counts.map(|c| c as f64 / total as f64)
            },
            empty: total == 0,
        }
    }
}

fn check_threshold(threshold: Option<f64>) -> Result<(), TrendError> {
    match threshold {
        Some(t) if !(t > 1.0 / 3.0 && t <= 1.0) => Err(TrendError::BadThreshold(t)),
        _ => Ok(()),
    }
}

/// Stance column for one prediction: its label, or Uncertain when a
/// threshold is set and the label's probability is below it.
pub fn stance_column(prediction: &Prediction, threshold: Option<f64>) -> Result<usize, TrendError> {
    let idx = prediction.label.class_index().expect("predictions are never ambiguous");
    match threshold {
        None => Ok(idx),
        Some(_) if !prediction.distribution => Err(TrendError::DistributionFree(prediction.sentence_id.clone())),
        Some(t) if prediction.probs[idx] < t => Ok(UNCERTAIN),
        Some(_) => Ok(idx),
    }
}

type PointKey = (Publisher, Option<GroupName>, TimeBucket);

fn assemble(
    keys: impl Iterator<Item = (Publisher, Option<GroupName>)>,
    buckets: &[TimeBucket],
    counts: &HashMap<PointKey, [u64; 4]>,
) -> Vec<TrendPoint> {
    let mut out = Vec::new();
    for (publisher, group) in keys {
        for b in buckets {
            let c = counts
                .get(&(publisher.clone(), group, b.clone()))
                .copied()
                .unwrap_or_default();
            out.push(TrendPoint::new(b.clone(), publisher.clone(), group, c));
        }
    }
    out
}

/// Stance shares per publisher and bucket. Each sentence counts once.
pub fn stance_shares(
    obs: &[StanceObs],
    granularity: Granularity,
    threshold: Option<f64>,
    span: Span,
) -> Result<Vec<TrendPoint>, TrendError> {
    check_threshold(threshold)?;
    let Some((from, to)) = resolve_span(span, obs.iter().map(|o| o.date)) else {
        return Ok(Vec::new());
    };
    let mut counts: HashMap<PointKey, [u64; 4]> = HashMap::new();
    for o in obs {
        let col = stance_column(&o.prediction, threshold)?;
        if o.date < from || o.date > to {
            continue;
        }
        counts
            .entry((o.publisher.clone(), None, TimeBucket::of(o.date, granularity)))
            .or_default()[col] += 1;
    }
    let publishers: BTreeSet<Publisher> = obs.iter().map(|o| o.publisher.clone()).collect();
    let buckets = TimeBucket::range(from, to, granularity);
    Ok(assemble(publishers.into_iter().map(|p| (p, None)), &buckets, &counts))
}

/// Stance shares per publisher, keyword group and bucket. A sentence with
/// hits in several groups counts once in each of them. Every group of the
/// lexicon appears for every publisher, empty where it had no sentences.
pub fn group_stance_shares(
    obs: &[StanceObs],
    hits: &[GroupHit],
    granularity: Granularity,
    threshold: Option<f64>,
    span: Span,
) -> Result<Vec<TrendPoint>, TrendError> {
    check_threshold(threshold)?;
    let Some((from, to)) = resolve_span(span, obs.iter().map(|o| o.date)) else {
        return Ok(Vec::new());
    };
    let mut groups_of: HashMap<&str, BTreeSet<GroupName>> = HashMap::new();
    for h in hits {
        groups_of.entry(h.sentence_id.as_str()).or_default().insert(h.group);
    }
    let mut counts: HashMap<PointKey, [u64; 4]> = HashMap::new();
    for o in obs {
        let col = stance_column(&o.prediction, threshold)?;
        if o.date < from || o.date > to {
            continue;
        }
        let bucket = TimeBucket::of(o.date, granularity);
        for &g in groups_of.get(o.sentence_id.as_str()).into_iter().flatten() {
            counts
                .entry((o.publisher.clone(), Some(g), bucket.clone()))
                .or_default()[col] += 1;
        }
    }
    let publishers: BTreeSet<Publisher> = obs.iter().map(|o| o.publisher.clone()).collect();
    let buckets = TimeBucket::range(from, to, granularity);
    let keys = publishers
        .into_iter()
        .flat_map(|p| GroupName::ALL.into_iter().map(move |g| (p.clone(), Some(g))));
    Ok(assemble(keys, &buckets, &counts))
}

/// Sums trend points into a coarser granularity and recomputes shares.
pub fn rebin_trends(points: &[TrendPoint], to: Granularity) -> Vec<TrendPoint> {
    let mut sums: BTreeMap<(Publisher, Option<GroupName>, TimeBucket), [u64; 4]> = BTreeMap::new();
    for p in points {
        let e = sums
            .entry((p.publisher.clone(), p.group, TimeBucket::of(p.bucket.start, to)))
            .or_default();
        for (sum, c) in e.iter_mut().zip(p.counts) {
            *sum += c;
        }
    }
    sums.into_iter()
        .map(|((publisher, group, bucket), counts)| TrendPoint::new(bucket, publisher, group, counts))
        .collect()
}

/// Writes rows with [`CSV_HEADER`]; `share` is left blank where it does not apply.
struct TidyWriter<W: Write>(csv::Writer<W>);

impl<W: Write> TidyWriter<W> {
    fn new(out: W) -> csv::Result<Self> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        Ok(TidyWriter(w))
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &mut self,
        bucket: &TimeBucket,
        publisher: &Publisher,
        group: Option<GroupName>,
        stance: &str,
        count: u64,
        total: u64,
        share: Option<f64>,
        empty: bool,
    ) -> csv::Result<()> {
        self.0.write_record([
            bucket.key.as_str(),
            bucket.segment.as_deref().unwrap_or(""),
            publisher.as_str(),
            group.map_or("", GroupName::as_str),
            stance,
            &count.to_string(),
            &total.to_string(),
            &share.map(|s| s.to_string()).unwrap_or_default(),
            if empty { "empty" } else { "" },
        ])
    }

    fn finish(mut self) -> csv::Result<()> {
        self.0.flush()?;
        Ok(())
    }
}

/// Tidy CSV: one row per point and stance column.
pub fn write_trends_csv<W: Write>(points: &[TrendPoint], out: W, with_uncertain: bool) -> csv::Result<()> {
    let mut w = TidyWriter::new(out)?;
    let columns = if with_uncertain { 4 } else { 3 };
    for p in points {
        for (i, stance) in STANCE_COLUMNS.iter().enumerate().take(columns) {
            w.row(&p.bucket, &p.publisher, p.group, stance, p.counts[i], p.total, Some(p.shares[i]), p.empty)?;
        }
    }
    w.finish()
}

pub fn write_counts_csv<W: Write>(points: &[CountPoint], out: W) -> csv::Result<()> {
    let mut w = TidyWriter::new(out)?;
    for p in points {
        w.row(&p.bucket, &p.publisher, None, "all", p.count, p.count, None, p.count == 0)?;
    }
    w.finish()
}

pub fn write_mentions_csv<W: Write>(points: &[MentionPoint], out: W) -> csv::Result<()> {
    let mut w = TidyWriter::new(out)?;
    for p in points {
        w.row(&p.bucket, &p.publisher, None, "topical", p.topical, p.articles, Some(p.share), p.empty)?;
    }
    w.finish()
}
