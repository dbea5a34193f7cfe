use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AnnotationRecord;
use crate::label::StanceLabel;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("corrupt annotation log {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("record for {0} carries a label inconsistent with its rating")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Append-only annotation log.
///
/// Every submission is a new line; the live record for a
/// (sentence, annotator) pair is the latest one, earlier ones stay as the
/// audit trail. `submit` returns only after the line is synced to disk.
#[derive(Debug)]
pub struct AnnotationLog {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: Vec<AnnotationRecord>,
    live: BTreeMap<(String, String), usize>,
}

impl AnnotationLog {
    pub fn in_memory() -> Self {
        AnnotationLog {
            path: None,
            file: None,
            entries: Vec::new(),
            live: BTreeMap::new(),
        }
    }

    /// Opens or creates the log at `path`, replaying it. A final line
    /// without a newline is a torn, never-acknowledged write and is cut off;
    /// any other unreadable line makes the log corrupt.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut log = AnnotationLog::in_memory();
        let content = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let complete = content.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        if complete < content.len() {
            let file = OpenOptions::new().write(true).open(&path)?;
            file.set_len(complete as u64)?;
            file.sync_all()?;
        }
        let text = std::str::from_utf8(&content[..complete]).map_err(|e| LogError::Corrupt {
            path: path.clone(),
            line: 0,
            reason: e.to_string(),
        })?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: AnnotationRecord = serde_json::from_str(line).map_err(|e| LogError::Corrupt {
                path: path.clone(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            if !record.is_consistent() {
                return Err(LogError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    reason: "label does not match rating".into(),
                });
            }
            log.push(record);
        }
        log.file = Some(OpenOptions::new().create(true).append(true).open(&path)?);
        log.path = Some(path);
        Ok(log)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn push(&mut self, record: AnnotationRecord) {
        let key = (record.sentence_id.clone(), record.annotator_id.clone());
        self.live.insert(key, self.entries.len());
        self.entries.push(record);
    }

    /// Durably appends a record; it supersedes any earlier record of the
    /// same annotator for the same sentence.
    pub fn submit(&mut self, record: AnnotationRecord) -> Result<(), LogError> {
        if !record.is_consistent() {
            return Err(LogError::Inconsistent(record.sentence_id));
        }
        if let Some(file) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&record).map_err(io::Error::other)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        self.push(record);
        Ok(())
    }

    /// Live records ordered by (sentence id, annotator id).
    pub fn live_records(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.live.values().map(|&i| &self.entries[i])
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn live(&self, sentence_id: &str, annotator_id: &str) -> Option<&AnnotationRecord> {
        self.live
            .get(&(sentence_id.to_string(), annotator_id.to_string()))
            .map(|&i| &self.entries[i])
    }

    /// Every submission for the pair, oldest first.
    pub fn history(&self, sentence_id: &str, annotator_id: &str) -> Vec<&AnnotationRecord> {
        self.entries
            .iter()
            .filter(|r| r.sentence_id == sentence_id && r.annotator_id == annotator_id)
            .collect()
    }

    pub fn all_entries(&self) -> &[AnnotationRecord] {
        &self.entries
    }

    /// Rating pairs for sentences that both annotators have a live record for,
    /// ordered by sentence id.
    pub fn overlap_pairs(&self, a: &str, b: &str) -> Vec<(super::RawRating, super::RawRating)> {
        let mut by_sentence: BTreeMap<&str, (Option<super::RawRating>, Option<super::RawRating>)> = BTreeMap::new();
        for r in self.live_records() {
            if r.annotator_id == a {
                by_sentence.entry(&r.sentence_id).or_default().0 = Some(r.raw);
            } else if r.annotator_id == b {
                by_sentence.entry(&r.sentence_id).or_default().1 = Some(r.raw);
            }
        }
        by_sentence
            .into_values()
            .filter_map(|(x, y)| Some((x?, y?)))
            .collect()
    }
}

/// How to turn several annotators' live records into one gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precedence {
    /// Take the first annotator in this list who rated the sentence; for
    /// sentences none of them rated, the earliest submission wins.
    Ordered(Vec<String>),
    /// Majority of collapsed labels; ties resolve to Ambiguous.
    MajorityWithThird,
}

/// One gold label per annotated sentence.
pub fn resolve_labels<'a>(
    records: impl IntoIterator<Item = &'a AnnotationRecord>,
    precedence: &Precedence,
) -> BTreeMap<String, StanceLabel> {
    let mut grouped: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(&r.sentence_id).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|(id, recs)| {
            let label = match precedence {
                Precedence::Ordered(order) => order
                    .iter()
                    .find_map(|who| recs.iter().find(|r| &r.annotator_id == who))
                    .or_else(|| recs.iter().min_by(|x, y| x.created_at.cmp(&y.created_at)))
                    .map(|r| r.label)
                    .unwrap_or(StanceLabel::Ambiguous),
                Precedence::MajorityWithThird => {
                    let mut counts: HashMap<StanceLabel, usize> = HashMap::new();
                    for r in &recs {
                        *counts.entry(r.label).or_default() += 1;
                    }
                    let best = counts.values().copied().max().unwrap_or(0);
                    let winners: Vec<_> = counts.iter().filter(|(_, &c)| c == best).collect();
                    if winners.len() == 1 {
                        *winners[0].0
                    } else {
                        StanceLabel::Ambiguous
                    }
                }
            };
            (id.to_string(), label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::RawRating;
    use super::*;

    fn rec(sentence: &str, annotator: &str, raw: RawRating, at: &str) -> AnnotationRecord {
        AnnotationRecord::new(sentence, annotator, raw, at, "v1")
    }

    #[test]
    fn later_submission_supersedes_with_history() {
        let mut log = AnnotationLog::in_memory();
        log.submit(rec("s1", "j", RawRating::Two, "t1")).unwrap();
        log.submit(rec("s1", "j", RawRating::Four, "t2")).unwrap();
        log.submit(rec("s1", "n", RawRating::Three, "t3")).unwrap();
        assert_eq!(log.live_count(), 2);
        assert_eq!(log.live("s1", "j").unwrap().label, StanceLabel::Supportive);
        assert_eq!(log.history("s1", "j").len(), 2);
    }

    #[test]
    fn inconsistent_record_is_refused() {
        let mut log = AnnotationLog::in_memory();
        let mut r = rec("s1", "j", RawRating::Two, "t1");
        r.label = StanceLabel::Supportive;
        assert!(matches!(log.submit(r), Err(LogError::Inconsistent(_))));
    }

    #[test]
    fn reopen_replays_and_truncates_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let mut log = AnnotationLog::open(&path).unwrap();
            log.submit(rec("s1", "j", RawRating::One, "t1")).unwrap();
            log.submit(rec("s2", "j", RawRating::Five, "t2")).unwrap();
        }
        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(br#"{"sentence_id":"s3","annot"#);
        fs::write(&path, &bytes).unwrap();

        let mut log = AnnotationLog::open(&path).unwrap();
        assert_eq!(log.live_count(), 2);
        log.submit(rec("s3", "j", RawRating::Three, "t3")).unwrap();
        drop(log);
        assert_eq!(AnnotationLog::open(&path).unwrap().live_count(), 3);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        fs::write(&path, "not json\n").unwrap();
        assert!(matches!(AnnotationLog::open(&path), Err(LogError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn overlap_pairs_join_on_sentence() {
        let mut log = AnnotationLog::in_memory();
        log.submit(rec("s1", "j", RawRating::One, "t")).unwrap();
        log.submit(rec("s1", "m", RawRating::Two, "t")).unwrap();
        log.submit(rec("s2", "j", RawRating::Five, "t")).unwrap();
        log.submit(rec("s3", "m", RawRating::Five, "t")).unwrap();
        assert_eq!(log.overlap_pairs("j", "m"), vec![(RawRating::One, RawRating::Two)]);
    }

    #[test]
    fn precedence_rules() {
        let records = vec![
            rec("s1", "j", RawRating::One, "t2"),
            rec("s1", "n", RawRating::Three, "t1"),
            rec("s2", "n", RawRating::Five, "t1"),
            rec("s3", "j", RawRating::One, "t1"),
            rec("s3", "n", RawRating::Two, "t1"),
            rec("s3", "m", RawRating::Four, "t1"),
        ];
        let ordered = resolve_labels(&records, &Precedence::Ordered(vec!["j".into()]));
        assert_eq!(ordered["s1"], StanceLabel::Against);
        assert_eq!(ordered["s2"], StanceLabel::Supportive);

        let majority = resolve_labels(&records, &Precedence::MajorityWithThird);
        assert_eq!(majority["s1"], StanceLabel::Ambiguous);
        assert_eq!(majority["s3"], StanceLabel::Against);
    }
}
