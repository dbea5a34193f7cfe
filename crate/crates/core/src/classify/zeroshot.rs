use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BatchReport, Classifier, ClassifyOutcome, Failure, Prediction, TextItem, TransportError};
use crate::label::StanceLabel;
use crate::retry::Backoff;

pub const ZEROSHOT_BACKEND: &str = "zeroshot";

pub const DEFAULT_INSTRUCTION: &str = "Stance detection. Tag the following numbered sentences as being either \"supportive\", \"against\" or \"neutral\" towards the topic of immigration. \"Supportive\" means: \"supports immigration, friendly to foreigners, wants to help refugees and asylum seekers\". \"Against\" means: \"against immigration, dislikes foreigners, dislikes refugees and asylum seekers, dislikes people who help immigrants\". \"Neutral\" means: \"neutral stance, neutral facts about immigration, neutral reporting about foreigners, refugees, asylum seekers\". Don't explain, output only sentence number and stance tag.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction: String,
    pub batch_size: usize,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            batch_size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("empty batch")]
    Empty,
    #[error("batch of {0} exceeds the template's batch size {1}")]
    Oversized(usize, usize),
    #[error("instruction must define supportive, against and neutral")]
    MissingDefinition,
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.batch_size == 0 {
            return Err(PromptError::ZeroBatchSize);
        }
        let lower = self.instruction.to_lowercase();
        if ["supportive", "against", "neutral"].iter().any(|l| !lower.contains(l)) {
            return Err(PromptError::MissingDefinition);
        }
        Ok(())
    }
}

/// Instruction, a blank line, then the sentences numbered from 1.
pub fn build_prompt<S: AsRef<str>>(template: &PromptTemplate, batch: &[S]) -> Result<String, PromptError> {
    template.validate()?;
    if batch.is_empty() {
        return Err(PromptError::Empty);
    }
    if batch.len() > template.batch_size {
        return Err(PromptError::Oversized(batch.len(), template.batch_size));
    }
    let mut out = template.instruction.clone();
    out.push_str("\n\n");
    let lines: Vec<String> = batch
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref().replace(['\n', '\r'], " ")))
        .collect();
    out.push_str(&lines.join("\n"));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("tags outside the label set on lines: {0:?}")]
    InvalidTag(Vec<String>),
    #[error("found {found} numbered tags, expected {expected}")]
    CountMismatch { found: usize, expected: usize },
}

fn parse_tag(tag: &str) -> Option<StanceLabel> {
    let t = tag
        .trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '*' || c == '.' || c.is_whitespace())
        .to_lowercase();
    match t.as_str() {
        "against" => Some(StanceLabel::Against),
        "neutral" => Some(StanceLabel::Neutral),
        "supportive" => Some(StanceLabel::Supportive),
        _ => None,
    }
}

/// Reads "N. tag" lines. Lines without a leading number are ignored.
/// Succeeds only when every tag is one of the three labels and the numbers
/// are exactly 1..=expected, each once.
pub fn parse_llm_response(text: &str, expected: usize) -> Result<Vec<StanceLabel>, ParseError> {
    let mut pairs = Vec::new();
    let mut invalid = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        let digits = trimmed.len() - trimmed.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            continue;
        }
        let Ok(n) = trimmed[..digits].parse::<usize>() else {
            invalid.push(line.to_string());
            continue;
        };
        let rest = trimmed[digits..].trim_start_matches(['.', ')', ':', '-']);
        match parse_tag(rest) {
            Some(label) => pairs.push((n, label)),
            None => invalid.push(line.to_string()),
        }
    }
    if !invalid.is_empty() {
        return Err(ParseError::InvalidTag(invalid));
    }
    let mut labels = vec![None; expected];
    for &(n, label) in &pairs {
        match labels.get_mut(n.wrapping_sub(1)) {
            Some(slot @ None) => *slot = Some(label),
            _ => {
                return Err(ParseError::CountMismatch {
                    found: pairs.len(),
                    expected,
                })
            }
        }
    }
    labels
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or(ParseError::CountMismatch {
            found: pairs.len(),
            expected,
        })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

/// Chat-completion boundary; returns the assistant's reply text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// One line of the zero-shot audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp: String,
    pub batch: usize,
    pub attempt: u32,
    pub transport_attempts: u32,
    pub prompt: String,
    pub response: Option<String>,
    pub outcome: String,
}

/// Zero-shot classification through an instructable chat model: batches of
/// `template.batch_size`, re-requested on unparsable answers up to
/// `retry_limit` attempts per batch.
pub struct ZeroShotClient<T> {
    pub transport: T,
    pub template: PromptTemplate,
    pub model: String,
    pub temperature: f64,
    pub retry_limit: u32,
    pub backoff: Backoff,
    pub concurrency: usize,
    audit: Option<Mutex<Box<dyn Write + Send>>>,
}

impl<T: ChatTransport> ZeroShotClient<T> {
    pub fn new(transport: T, model: impl Into<String>) -> Self {
        ZeroShotClient {
            transport,
            template: PromptTemplate::default(),
            model: model.into(),
            temperature: 0.0,
            retry_limit: 5,
            backoff: Backoff::default(),
            concurrency: 1,
            audit: None,
        }
    }

    /// Sends every request/response pair to `sink` as JSON lines.
    pub fn with_audit(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.audit = Some(Mutex::new(sink));
        self
    }

    fn audit(&self, entry: AuditEntry) {
        if let Some(sink) = &self.audit {
            let mut sink = sink.lock().unwrap_or_else(|e| e.into_inner());
            if let Ok(mut line) = serde_json::to_vec(&entry) {
                line.push(b'\n');
                // Audit is best-effort; classification results are unaffected.
                let _ = sink.write_all(&line).and_then(|_| sink.flush());
            }
        }
    }

    fn run_batch(&self, index: usize, batch: &[TextItem]) -> BatchResult {
        let texts: Vec<&str> = batch.iter().map(|it| it.text.as_str()).collect();
        let fail = |attempts: u32, reason: String| {
            let failures = batch
                .iter()
                .map(|it| Failure {
                    sentence_id: it.id.clone(),
                    batch: index,
                    attempts,
                    reason: reason.clone(),
                })
                .collect();
            (
                Vec::new(),
                failures,
                BatchReport {
                    batch: index,
                    size: batch.len(),
                    attempts,
                    ok: false,
                },
            )
        };
        let prompt = match build_prompt(&self.template, &texts) {
            Ok(p) => p,
            Err(e) => return fail(0, e.to_string()),
        };
        let request = ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.clone(),
            }],
            temperature: self.temperature,
        };
        let limit = self.retry_limit.max(1);
        let mut last_error = String::new();
        for attempt in 1..=limit {
            let (reply, transport_attempts) = match self.backoff.run(|_| self.transport.complete(&request)) {
                Ok(ok) => ok,
                Err((err, n)) => {
                    self.audit(AuditEntry {
                        timestamp: now(),
                        batch: index,
                        attempt,
                        transport_attempts: n,
                        prompt: prompt.clone(),
                        response: None,
                        outcome: err.to_string(),
                    });
                    return fail(attempt, err.to_string());
                }
            };
            let parsed = parse_llm_response(&reply, batch.len());
            self.audit(AuditEntry {
                timestamp: now(),
                batch: index,
                attempt,
                transport_attempts,
                prompt: prompt.clone(),
                response: Some(reply),
                outcome: match &parsed {
                    Ok(_) => "ok".into(),
                    Err(e) => e.to_string(),
                },
            });
            match parsed {
                Ok(labels) => {
                    let predictions = batch
                        .iter()
                        .zip(labels)
                        .map(|(it, label)| {
                            Prediction::one_hot(&it.id, label, ZEROSHOT_BACKEND, &self.model)
                                .expect("parsed labels are classes")
                        })
                        .collect();
                    return (
                        predictions,
                        Vec::new(),
                        BatchReport {
                            batch: index,
                            size: batch.len(),
                            attempts: attempt,
                            ok: true,
                        },
                    );
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        fail(limit, format!("retry limit reached: {last_error}"))
    }
}

type BatchResult = (Vec<Prediction>, Vec<Failure>, BatchReport);

fn now() -> String {
    chrono::DateTime::<chrono::Utc>::from(std::time::SystemTime::now()).to_rfc3339()
}

impl<T: ChatTransport> Classifier for ZeroShotClient<T> {
    fn backend(&self) -> &str {
        ZEROSHOT_BACKEND
    }

    /// Batches keep input order. With `concurrency` above 1, batches are
    /// spread over that many threads; results are still merged in order.
    fn classify(&self, items: &[TextItem]) -> ClassifyOutcome {
        let size = self.template.batch_size.max(1);
        let batches: Vec<&[TextItem]> = items.chunks(size).collect();
        let workers = self.concurrency.clamp(1, batches.len().max(1));
        let mut results: Vec<Option<BatchResult>> = vec![None; batches.len()];
        if workers == 1 {
            for (i, b) in batches.iter().enumerate() {
                results[i] = Some(self.run_batch(i, b));
            }
        } else {
            let next = std::sync::atomic::AtomicUsize::new(0);
            let slots = Mutex::new(&mut results);
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                        if i >= batches.len() {
                            break;
                        }
                        let r = self.run_batch(i, batches[i]);
                        slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
                    });
                }
            });
        }
        let mut out = ClassifyOutcome::default();
        for (predictions, failures, report) in results.into_iter().flatten() {
            out.predictions.extend(predictions);
            out.failures.extend(failures);
            out.batches.push(report);
        }
        out
    }
}

/// Chat-completions endpoint over HTTP (`{base_url}/chat/completions`).
#[cfg(feature = "http")]
pub struct HttpChat {
    pub base_url: String,
    pub token: Option<String>,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpChat {
    pub fn new(base_url: impl Into<String>, token: Option<String>, timeout: std::time::Duration) -> Self {
        HttpChat {
            base_url: base_url.into(),
            token,
            agent: super::remote::agent(timeout),
        }
    }
}

#[cfg(feature = "http")]
impl ChatTransport for HttpChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        #[derive(Deserialize)]
        struct Reply {
            choices: Vec<Choice>,
        }
        #[derive(Deserialize)]
        struct Choice {
            message: ChatMessage,
        }
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let reply: Reply = super::remote::post_json(&self.agent, &url, self.token.as_deref(), request)?;
        reply
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportError::Decode("no choices in reply".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use StanceLabel::*;

    #[test]
    fn default_template_defines_all_labels() {
        assert!(PromptTemplate::default().validate().is_ok());
        assert_eq!(PromptTemplate::default().batch_size, 10);
    }

    #[test]
    fn prompt_numbering() {
        let t = PromptTemplate::default();
        let one = build_prompt(&t, &["Unfortunately, by now the violence has seeped."]).unwrap();
        assert!(one.starts_with("Stance detection. Tag the following numbered sentences as being either"));
        assert!(one.ends_with("\n1. Unfortunately, by now the violence has seeped."));
        let ten: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let p = build_prompt(&t, &ten).unwrap();
        for i in 1..=10 {
            assert!(p.contains(&format!("\n{i}. s{}", i - 1)));
        }
        let eleven: Vec<String> = (0..11).map(|i| format!("s{i}")).collect();
        assert_eq!(build_prompt(&t, &eleven), Err(PromptError::Oversized(11, 10)));
        assert_eq!(build_prompt::<&str>(&t, &[]), Err(PromptError::Empty));
    }

    #[test]
    fn parses_valid_responses() {
        assert_eq!(parse_llm_response("1. Against\n2. Neutral", 2).unwrap(), vec![Against, Neutral]);
        assert_eq!(
            parse_llm_response("Here you go:\n 2)  SUPPORTIVE \n1: \"against\"\n", 2).unwrap(),
            vec![Against, Supportive]
        );
    }

    #[test]
    fn rejects_invalid_tags_and_counts() {
        assert!(matches!(parse_llm_response("1. Maybe\n2. Against", 2), Err(ParseError::InvalidTag(l)) if l == vec!["1. Maybe"]));
        assert_eq!(
            parse_llm_response("1. Against", 2),
            Err(ParseError::CountMismatch { found: 1, expected: 2 })
        );
        assert!(parse_llm_response("1. Against\n1. Neutral", 2).is_err());
        assert!(parse_llm_response("1. Against\n3. Neutral", 2).is_err());
        assert!(parse_llm_response("1. Pro", 1).is_err());
        assert!(parse_llm_response("0. Against", 1).is_err());
    }

    /// Answers with a scripted list of replies, then repeats the last one.
    struct Scripted {
        replies: Vec<Option<String>>,
        calls: AtomicU32,
    }

    impl ChatTransport for Scripted {
        fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
            let i = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
            let n = request.messages[0].content.lines().filter(|l| l.starts_with(char::is_numeric)).count();
            match &self.replies[i.min(self.replies.len() - 1)] {
                Some(r) if r == "VALID" => Ok((1..=n).map(|k| format!("{k}. Neutral")).collect::<Vec<_>>().join("\n")),
                Some(r) => Ok(r.clone()),
                None => Err(TransportError::Unavailable("down".into())),
            }
        }
    }

    fn client(replies: &[Option<&str>]) -> ZeroShotClient<Scripted> {
        let mut c = ZeroShotClient::new(
            Scripted {
                replies: replies.iter().map(|r| r.map(String::from)).collect(),
                calls: AtomicU32::new(0),
            },
            "chat-model",
        );
        c.backoff = Backoff::immediate(2);
        c
    }

    fn items(n: usize) -> Vec<TextItem> {
        (0..n).map(|i| TextItem::new(format!("s{i}"), format!("lause {i}"))).collect()
    }

    #[test]
    fn chunks_into_tens() {
        let out = client(&[Some("VALID")]).classify(&items(25));
        let sizes: Vec<usize> = out.batches.iter().map(|b| b.size).collect();
        assert_eq!(sizes, vec![10, 10, 5]);
        assert_eq!(out.predictions.len(), 25);
        assert!(out.predictions.iter().all(|p| !p.distribution && p.probs == [0.0, 1.0, 0.0]));
    }

    #[test]
    fn invalid_then_valid_takes_two_attempts() {
        let buf = std::sync::Arc::new(Mutex::new(Vec::new()));
        struct Shared(std::sync::Arc<Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(b);
                Ok(b.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let c = client(&[Some("1. Maybe"), Some("VALID")]).with_audit(Box::new(Shared(buf.clone())));
        let out = c.classify(&items(3));
        assert_eq!(out.batches[0].attempts, 2);
        assert!(out.batches[0].ok);
        let log = String::from_utf8(buf.lock().unwrap().clone()).unwrap();
        let entries: Vec<AuditEntry> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[1].attempt, 2);
        assert_eq!(entries[1].outcome, "ok");
    }

    #[test]
    fn always_invalid_fails_after_limit() {
        let c = client(&[Some("1. Maybe")]);
        let out = c.classify(&items(12));
        assert_eq!(c.transport.calls.load(Ordering::SeqCst), 10);
        assert!(out.predictions.is_empty());
        assert_eq!(out.failures.len(), 12);
        assert!(out.failures.iter().all(|f| f.attempts == 5));
    }

    #[test]
    fn transport_outage_is_recorded() {
        let out = client(&[None]).classify(&items(4));
        assert_eq!(out.failures.len(), 4);
        assert!(out.failures[0].reason.contains("unreachable"));
    }

    #[test]
    fn concurrent_batches_keep_order_and_completeness() {
        let mut c = client(&[Some("VALID")]);
        c.concurrency = 4;
        let input = items(47);
        let out = c.classify(&input);
        let ids: Vec<&str> = out.predictions.iter().map(|p| p.sentence_id.as_str()).collect();
        let want: Vec<&str> = input.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, want);
        assert_eq!(out.predictions.len() + out.failures.len(), 47);
    }
}
