//! Article ingestion, cleaning, persistence and sentence segmentation.

mod clean;
mod ingest;
mod segment;
mod store;

use std::fmt;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

pub use clean::clean_text;
pub use ingest::{ingest_articles, IngestError, IngestFormat, IngestOptions, IngestReport, Reject, RejectReason};
pub use segment::{
    segment_sentences, sentence_id, Segmenter, Sentence, DEFAULT_ABBREVIATIONS, LIST_SEMICOLONS, LONG_SENTENCE_CHARS,
};
pub use store::{ArticleStore, StoreError};

/// Publisher identifier. The two shipped ids are
/// [`Publisher::MAINSTREAM`] and [`Publisher::RADICAL_RIGHT`]; further ids
/// come from the pipeline's publisher registry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Publisher(String);

impl Publisher {
    pub const MAINSTREAM: &'static str = "mainstream_group";
    pub const RADICAL_RIGHT: &'static str = "radical_right_portal";

    pub fn new(id: impl Into<String>) -> Self {
        Publisher(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Ids usable as file stems: ASCII alphanumerics, `_` and `-`.
    pub fn is_valid_id(id: &str) -> bool {
        !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    }
}

impl fmt::Display for Publisher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub publisher: Publisher,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodical: Option<String>,
    /// Verbatim date-time text as supplied; see [`parse_date`].
    pub published_at: String,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl Article {
    /// Calendar date of publication, timezone ignored.
    pub fn date(&self) -> Option<NaiveDate> {
        parse_date(&self.published_at)
    }
}

/// Parses the calendar date out of an ISO-8601-ish date or date-time.
/// Any timezone offset is ignored: the date is the one written in the text.
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        return Some(d);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.naive_local().date());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(dt.date());
        }
    }
    // "2019-03-03 10:00:00+02:00" and similar: fall back to the date prefix
    // when the remainder looks like a time.
    let (Some(head), Some(tail)) = (text.get(..10), text.get(10..)) else {
        return None;
    };
    let tail = tail.trim_start_matches(['T', ' ']);
    if tail.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        return NaiveDate::parse_from_str(head, "%Y-%m-%d").ok();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_date_forms() {
        let d = NaiveDate::from_ymd_opt(2019, 3, 3).unwrap();
        for s in [
            "2019-03-03",
            "2019-03-03T23:30:00",
            "2019-03-03T23:30:00+02:00",
            "2019-03-03T23:30:00Z",
            "2019-03-03 23:30:00",
            "2019-03-03 23:30:00 +0200",
            "2019-03-03 23:30",
        ] {
            assert_eq!(parse_date(s), Some(d), "{s}");
        }
    }

    #[test]
    fn rejects_non_dates() {
        for s in ["", "03.03.2019", "2019-13-01", "yesterday", "2019-03"] {
            assert_eq!(parse_date(s), None, "{s}");
        }
    }

    #[test]
    fn publisher_ids() {
        assert!(Publisher::is_valid_id(Publisher::MAINSTREAM));
        assert!(!Publisher::is_valid_id("../etc"));
        assert!(!Publisher::is_valid_id(""));
    }
}
