//! Human stance annotation: ratings and their four-class collapse, the
//! append-only annotation log, balanced sampling, assignment planning,
//! agreement statistics and CSV interchange.

mod interchange;
mod kappa;
mod log;
mod sampling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::label::StanceLabel;

pub use interchange::{export_annotations, import_annotations, ImportReport, InterchangeError, RowReject};
pub use kappa::{cohen_kappa, kappa_variant, KappaError, KappaVariant};
pub use log::{resolve_labels, AnnotationLog, LogError, Precedence};
pub use sampling::{
    plan_assignments, sample_for_annotation, AnnotationBatch, Candidate, Coverage, OverlapPlan, SampleError,
    SampleOutcome,
};

/// A rating on the five-point stance scale, or `Ambiguous`.
///
/// 1 is the most against, 5 the most supportive; see [`collapse_rating`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RawRating {
    One,
    Two,
    Three,
    Four,
    Five,
    Ambiguous,
}

impl RawRating {
    pub const ALL: [RawRating; 6] = [
        RawRating::One,
        RawRating::Two,
        RawRating::Three,
        RawRating::Four,
        RawRating::Five,
        RawRating::Ambiguous,
    ];

    pub fn from_number(n: i64) -> Option<RawRating> {
        match n {
            1 => Some(RawRating::One),
            2 => Some(RawRating::Two),
            3 => Some(RawRating::Three),
            4 => Some(RawRating::Four),
            5 => Some(RawRating::Five),
            _ => None,
        }
    }

    pub fn as_number(self) -> Option<u8> {
        match self {
            RawRating::One => Some(1),
            RawRating::Two => Some(2),
            RawRating::Three => Some(3),
            RawRating::Four => Some(4),
            RawRating::Five => Some(5),
            RawRating::Ambiguous => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RawRating::One => "1",
            RawRating::Two => "2",
            RawRating::Three => "3",
            RawRating::Four => "4",
            RawRating::Five => "5",
            RawRating::Ambiguous => "ambiguous",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rating {0:?} (expected 1-5 or ambiguous)")]
pub struct InvalidRating(pub String);

impl FromStr for RawRating {
    type Err = InvalidRating;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Ok(n) = t.parse::<i64>() {
            return RawRating::from_number(n).ok_or_else(|| InvalidRating(s.to_string()));
        }
        match t.to_lowercase().as_str() {
            "a" | "na" | "amb" | "ambiguous" => Ok(RawRating::Ambiguous),
            _ => Err(InvalidRating(s.to_string())),
        }
    }
}

impl TryFrom<String> for RawRating {
    type Error = InvalidRating;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RawRating> for String {
    fn from(r: RawRating) -> String {
        r.as_str().to_string()
    }
}

impl fmt::Display for RawRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 1–2 → Against, 3 → Neutral, 4–5 → Supportive, Ambiguous → Ambiguous.
pub fn collapse_rating(raw: RawRating) -> StanceLabel {
    match raw {
        RawRating::One | RawRating::Two => StanceLabel::Against,
        RawRating::Three => StanceLabel::Neutral,
        RawRating::Four | RawRating::Five => StanceLabel::Supportive,
        RawRating::Ambiguous => StanceLabel::Ambiguous,
    }
}

/// Guideline version stamped on records when none is configured.
pub const DEFAULT_GUIDELINE_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sentence_id: String,
    pub annotator_id: String,
    pub raw: RawRating,
    pub label: StanceLabel,
    /// RFC 3339 timestamp.
    pub created_at: String,
    pub guideline_version: String,
}

impl AnnotationRecord {
    pub fn new(
        sentence_id: impl Into<String>,
        annotator_id: impl Into<String>,
        raw: RawRating,
        created_at: impl Into<String>,
        guideline_version: impl Into<String>,
    ) -> Self {
        AnnotationRecord {
            sentence_id: sentence_id.into(),
            annotator_id: annotator_id.into(),
            raw,
            label: collapse_rating(raw),
            created_at: created_at.into(),
            guideline_version: guideline_version.into(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.label == collapse_rating(self.raw)
    }
}

/// Per-class record counts, Ambiguous included.
pub fn class_counts<'a>(records: impl IntoIterator<Item = &'a AnnotationRecord>) -> [usize; 4] {
    let mut counts = [0; 4];
    for r in records {
        let i = StanceLabel::ALL.iter().position(|l| *l == r.label).unwrap_or(3);
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapse_matches_scale() {
        assert_eq!(collapse_rating(RawRating::One), StanceLabel::Against);
        assert_eq!(collapse_rating(RawRating::Two), StanceLabel::Against);
        assert_eq!(collapse_rating(RawRating::Three), StanceLabel::Neutral);
        assert_eq!(collapse_rating(RawRating::Four), StanceLabel::Supportive);
        assert_eq!(collapse_rating(RawRating::Five), StanceLabel::Supportive);
        assert_eq!(collapse_rating(RawRating::Ambiguous), StanceLabel::Ambiguous);
    }

    #[test]
    fn collapse_is_surjective_and_monotone() {
        let images: std::collections::BTreeSet<_> = RawRating::ALL.iter().map(|r| collapse_rating(*r)).collect();
        assert_eq!(images.len(), 4);
        let numeric: Vec<usize> = RawRating::ALL[..5]
            .iter()
            .map(|r| collapse_rating(*r).class_index().unwrap())
            .collect();
        assert!(numeric.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn parses_ratings() {
        assert_eq!("4".parse::<RawRating>().unwrap(), RawRating::Four);
        assert_eq!("Ambiguous".parse::<RawRating>().unwrap(), RawRating::Ambiguous);
        assert_eq!("NA".parse::<RawRating>().unwrap(), RawRating::Ambiguous);
        assert!("6".parse::<RawRating>().is_err());
        assert!("0".parse::<RawRating>().is_err());
        assert!("x".parse::<RawRating>().is_err());
    }

    #[test]
    fn record_label_is_derived() {
        let r = AnnotationRecord::new("s1", "ann", RawRating::Four, "2023-03-03T10:00:00Z", "v1");
        assert_eq!(r.label, StanceLabel::Supportive);
        assert!(r.is_consistent());
    }

    #[test]
    fn serde_uses_rating_strings() {
        let json = serde_json::to_string(&RawRating::Ambiguous).unwrap();
        assert_eq!(json, "\"ambiguous\"");
        assert_eq!(serde_json::from_str::<RawRating>("\"2\"").unwrap(), RawRating::Two);
        assert!(serde_json::from_str::<RawRating>("\"7\"").is_err());
    }
}
