use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{clean_text, parse_date, Article, ArticleStore, Publisher, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestFormat {
    Csv,
    Jsonl,
}

impl FromStr for IngestFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(IngestFormat::Csv),
            "jsonl" | "ndjson" => Ok(IngestFormat::Jsonl),
            other => Err(format!("unknown ingest format {other:?} (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Accepted values of the optional `language` field. Rows without the
    /// field are accepted.
    pub languages: Vec<String>,
    /// Inclusive calendar-date window.
    pub window: Option<(NaiveDate, NaiveDate)>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            languages: vec!["et".to_string()],
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    BadDate,
    OutsideWindow,
    EmptyBody,
    DuplicateId,
    Language(String),
    PublisherMismatch(String),
    Malformed(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::BadDate => f.write_str("bad date"),
            RejectReason::OutsideWindow => f.write_str("date outside corpus window"),
            RejectReason::EmptyBody => f.write_str("empty body"),
            RejectReason::DuplicateId => f.write_str("duplicate id"),
            RejectReason::Language(l) => write!(f, "language {l:?} not accepted"),
            RejectReason::PublisherMismatch(p) => write!(f, "row publisher {p:?} does not match ingest publisher"),
            RejectReason::Malformed(m) => write!(f, "malformed row: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub id: Option<String>,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("input is not valid UTF-8 (at byte {0})")]
    NotUtf8(usize),
    #[error("CSV header lacks required column {0:?}")]
    MissingColumn(&'static str),
    #[error("unreadable CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Default, Deserialize)]
struct RawRow {
    id: Option<String>,
    date: Option<String>,
    publisher: Option<String>,
    periodical: Option<String>,
    title: Option<String>,
    body: Option<String>,
    language: Option<String>,
}

const REQUIRED: [&str; 4] = ["id", "date", "title", "body"];

/// Validates rows and inserts the good ones into `store`, then flushes.
///
/// Only an undecodable stream or an unusable CSV header is fatal; every
/// per-row problem lands in the report.
pub fn ingest_articles(
    mut source: impl Read,
    format: IngestFormat,
    publisher: &Publisher,
    store: &mut ArticleStore,
    options: &IngestOptions,
) -> Result<IngestReport, IngestError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| IngestError::NotUtf8(e.valid_up_to()))?;

    let rows = match format {
        IngestFormat::Csv => parse_csv(text)?,
        IngestFormat::Jsonl => parse_jsonl(text),
    };

    let mut report = IngestReport::default();
    for (row_no, row) in rows.into_iter().enumerate() {
        let row_no = row_no + 1;
        let row = match row {
            Ok(row) => row,
            Err(msg) => {
                report.rejects.push(Reject {
                    row: row_no,
                    id: None,
                    reason: RejectReason::Malformed(msg),
                });
                continue;
            }
        };
        let id = row.id.clone().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        match validate(row, publisher, options) {
            Ok(article) => match store.insert(article) {
                Ok(()) => report.accepted += 1,
                Err(StoreError::DuplicateId(_)) => report.rejects.push(Reject {
                    row: row_no,
                    id,
                    reason: RejectReason::DuplicateId,
                }),
                Err(e) => return Err(e.into()),
            },
            Err(reason) => report.rejects.push(Reject { row: row_no, id, reason }),
        }
    }
    store.flush()?;
    Ok(report)
}

fn validate(row: RawRow, publisher: &Publisher, options: &IngestOptions) -> Result<Article, RejectReason> {
    let id = row
        .id
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| RejectReason::Malformed("missing id".into()))?;
    if let Some(p) = row.publisher.as_deref().map(str::trim).filter(|p| !p.is_empty()) {
        if p != publisher.as_str() {
            return Err(RejectReason::PublisherMismatch(p.to_string()));
        }
    }
    let language = row.language.map(|l| l.trim().to_string()).filter(|l| !l.is_empty());
    if let Some(lang) = &language {
        if !options.languages.iter().any(|l| l.eq_ignore_ascii_case(lang)) {
            return Err(RejectReason::Language(lang.clone()));
        }
    }
    let published_at = row.date.map(|d| d.trim().to_string()).unwrap_or_default();
    let date = parse_date(&published_at).ok_or(RejectReason::BadDate)?;
    if let Some((start, end)) = options.window {
        if date < start || date > end {
            return Err(RejectReason::OutsideWindow);
        }
    }
    let body = clean_text(row.body.as_deref().unwrap_or_default());
    if body.is_empty() {
        return Err(RejectReason::EmptyBody);
    }
    Ok(Article {
        id,
        publisher: publisher.clone(),
        periodical: row.periodical.map(|p| clean_text(&p)).filter(|p| !p.is_empty()),
        published_at,
        title: clean_text(row.title.as_deref().unwrap_or_default()),
        body,
        language,
    })
}

fn parse_csv(text: &str) -> Result<Vec<Result<RawRow, String>>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    for name in REQUIRED {
        if column(name).is_none() {
            return Err(IngestError::MissingColumn(name));
        }
    }
    let cols = [
        column("id"),
        column("date"),
        column("publisher"),
        column("periodical"),
        column("title"),
        column("body"),
        column("language"),
    ];
    let mut rows = Vec::new();
    for record in reader.records() {
        let row = match record {
            Ok(record) => {
                let get = |i: Option<usize>| i.and_then(|i| record.get(i)).map(str::to_string);
                if record.len() != headers.len() {
                    Err(format!("expected {} fields, found {}", headers.len(), record.len()))
                } else {
                    Ok(RawRow {
                        id: get(cols[0]),
                        date: get(cols[1]),
                        publisher: get(cols[2]),
                        periodical: get(cols[3]),
                        title: get(cols[4]),
                        body: get(cols[5]),
                        language: get(cols[6]),
                    })
                }
            }
            Err(e) => Err(e.to_string()),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn parse_jsonl(text: &str) -> Vec<Result<RawRow, String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            let obj = value.as_object().ok_or("row is not a JSON object")?;
            for name in REQUIRED {
                if !obj.contains_key(name) {
                    return Err(format!("missing field {name:?}"));
                }
            }
            let field = |name: &str| -> Result<Option<String>, String> {
                match obj.get(name) {
                    None | Some(serde_json::Value::Null) => Ok(None),
                    Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                    Some(serde_json::Value::Number(n)) => Ok(Some(n.to_string())),
                    Some(_) => Err(format!("field {name:?} must be a string")),
                }
            };
            Ok(RawRow {
                id: field("id")?,
                date: field("date")?,
                publisher: field("publisher")?,
                periodical: field("periodical")?,
                title: field("title")?,
                body: field("body")?,
                language: field("language")?,
            })
        })
        .collect()
}
