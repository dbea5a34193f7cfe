use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{collapse_rating, AnnotationLog, AnnotationRecord, LogError, RawRating};
use crate::label::StanceLabel;

const HEADER: [&str; 6] = [
    "sentence_id",
    "annotator_id",
    "raw_rating",
    "label",
    "created_at",
    "guideline_version",
];

#[derive(Debug, thiserror::Error)]
pub enum InterchangeError {
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowReject {
    /// 1-based data row, header excluded.
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub imported: usize,
    pub rejects: Vec<RowReject>,
}

/// Writes the live records as CSV, ordered by (sentence, annotator).
pub fn export_annotations<W: Write>(log: &AnnotationLog, out: W) -> Result<usize, InterchangeError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    let mut n = 0;
    for r in log.live_records() {
        w.write_record([
            r.sentence_id.as_str(),
            r.annotator_id.as_str(),
            r.raw.as_str(),
            r.label.as_str(),
            r.created_at.as_str(),
            r.guideline_version.as_str(),
        ])?;
        n += 1;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(n)
}

/// Appends CSV rows to the log. Invalid rows are reported and skipped; a
/// `label` column, when present and non-empty, must agree with the rating.
pub fn import_annotations<R: Read>(
    input: R,
    log: &mut AnnotationLog,
    default_guideline: &str,
) -> Result<ImportReport, InterchangeError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h.trim() == name);
    let sid = col("sentence_id").ok_or(InterchangeError::MissingColumn("sentence_id"))?;
    let aid = col("annotator_id").ok_or(InterchangeError::MissingColumn("annotator_id"))?;
    let raw = col("raw_rating").ok_or(InterchangeError::MissingColumn("raw_rating"))?;
    let label = col("label");
    let created = col("created_at");
    let guideline = col("guideline_version");

    let mut report = ImportReport::default();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.rejects.push(RowReject {
                    row: row_no,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let field = |idx: Option<usize>| idx.and_then(|i| row.get(i)).map(str::trim).unwrap_or("");
        let sentence_id = field(Some(sid));
        let annotator_id = field(Some(aid));
        if sentence_id.is_empty() || annotator_id.is_empty() {
            report.rejects.push(RowReject {
                row: row_no,
                reason: "empty sentence_id or annotator_id".into(),
            });
            continue;
        }
        let rating: RawRating = match field(Some(raw)).parse() {
            Ok(r) => r,
            Err(e) => {
                report.rejects.push(RowReject {
                    row: row_no,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let stated = field(label);
        if !stated.is_empty() {
            match stated.parse::<StanceLabel>() {
                Ok(l) if l == collapse_rating(rating) => {}
                _ => {
                    report.rejects.push(RowReject {
                        row: row_no,
                        reason: format!("label {stated:?} does not match rating {rating}"),
                    });
                    continue;
                }
            }
        }
        let g = field(guideline);
        let record = AnnotationRecord::new(
            sentence_id,
            annotator_id,
            rating,
            field(created),
            if g.is_empty() { default_guideline } else { g },
        );
        log.submit(record)?;
        report.imported += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut log = AnnotationLog::in_memory();
        log.submit(AnnotationRecord::new("a:0", "j", RawRating::Two, "2023-01-01T00:00:00Z", "v1"))
            .unwrap();
        log.submit(AnnotationRecord::new("a:1", "j", RawRating::Ambiguous, "2023-01-01T00:00:01Z", "v1"))
            .unwrap();
        log.submit(AnnotationRecord::new("a,\"q\"", "n", RawRating::Five, "2023-01-01T00:00:02Z", "v2"))
            .unwrap();
        let mut buf = Vec::new();
        assert_eq!(export_annotations(&log, &mut buf).unwrap(), 3);

        let mut back = AnnotationLog::in_memory();
        let report = import_annotations(buf.as_slice(), &mut back, "v1").unwrap();
        assert_eq!(report.imported, 3);
        assert!(report.rejects.is_empty());
        let a: Vec<_> = log.live_records().cloned().collect();
        let b: Vec<_> = back.live_records().cloned().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_rows_are_rejected_individually() {
        let csv = "sentence_id,annotator_id,raw_rating,label\n\
                   s1,j,6,\n\
                   s2,j,4,supportive\n\
                   s3,j,4,against\n\
                   ,j,1,\n\
                   s5,j,a,\n";
        let mut log = AnnotationLog::in_memory();
        let report = import_annotations(csv.as_bytes(), &mut log, "v1").unwrap();
        assert_eq!(report.imported, 2);
        let rows: Vec<usize> = report.rejects.iter().map(|r| r.row).collect();
        assert_eq!(rows, vec![1, 3, 4]);
        assert_eq!(log.live("s5", "j").unwrap().label, StanceLabel::Ambiguous);
    }

    #[test]
    fn missing_column_is_fatal() {
        let mut log = AnnotationLog::in_memory();
        let err = import_annotations("sentence_id,raw_rating\n".as_bytes(), &mut log, "v1").unwrap_err();
        assert!(matches!(err, InterchangeError::MissingColumn("annotator_id")));
    }
}
