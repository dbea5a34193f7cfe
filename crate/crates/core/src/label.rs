use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Stance toward the monitored topic.
///
/// `Ambiguous` only ever comes from human annotation; classifiers and
/// evaluation work on the three-class subset in [`StanceLabel::CLASSES`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StanceLabel {
    Against,
    Neutral,
    Supportive,
    Ambiguous,
}

impl StanceLabel {
    /// The three classifiable stances, in the fixed probability order.
    pub const CLASSES: [StanceLabel; 3] = [StanceLabel::Against, StanceLabel::Neutral, StanceLabel::Supportive];

    pub const ALL: [StanceLabel; 4] = [
        StanceLabel::Against,
        StanceLabel::Neutral,
        StanceLabel::Supportive,
        StanceLabel::Ambiguous,
    ];

    /// Position in [`StanceLabel::CLASSES`], `None` for `Ambiguous`.
    pub fn class_index(self) -> Option<usize> {
        match self {
            StanceLabel::Against => Some(0),
            StanceLabel::Neutral => Some(1),
            StanceLabel::Supportive => Some(2),
            StanceLabel::Ambiguous => None,
        }
    }

    pub fn from_class_index(index: usize) -> Option<StanceLabel> {
        Self::CLASSES.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Against => "Against",
            StanceLabel::Neutral => "Neutral",
            StanceLabel::Supportive => "Supportive",
            StanceLabel::Ambiguous => "Ambiguous",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stance label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for StanceLabel {
    type Err = UnknownLabel;

    /// Case-insensitive; accepts `Pro` as an alias for `Supportive`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "against" => Ok(StanceLabel::Against),
            "neutral" => Ok(StanceLabel::Neutral),
            "supportive" | "pro" => Ok(StanceLabel::Supportive),
            "ambiguous" => Ok(StanceLabel::Ambiguous),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_index_round_trips() {
        for (i, label) in StanceLabel::CLASSES.iter().enumerate() {
            assert_eq!(label.class_index(), Some(i));
            assert_eq!(StanceLabel::from_class_index(i), Some(*label));
        }
        assert_eq!(StanceLabel::Ambiguous.class_index(), None);
    }

    #[test]
    fn parses_case_insensitively() {
        assert_eq!("AGAINST".parse::<StanceLabel>().unwrap(), StanceLabel::Against);
        assert_eq!(" pro ".parse::<StanceLabel>().unwrap(), StanceLabel::Supportive);
        assert!("maybe".parse::<StanceLabel>().is_err());
    }
}
