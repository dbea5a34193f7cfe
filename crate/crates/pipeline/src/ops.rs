//! One function per pipeline step. The CLI and the service's job runner
//! both call these; each returns what it read and wrote so the caller can
//! record a manifest.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use stance_core::annotation::{
    export_annotations, import_annotations, plan_assignments, resolve_labels, sample_for_annotation, AnnotationBatch,
    AnnotationLog, Candidate, InterchangeError, LogError, RawRating, SampleError,
};
use stance_core::classify::{
    emit_training_config, read_predictions, write_predictions, Classifier, HttpChat, HttpInference, NbModel,
    Prediction, RemoteClient, TextItem, ZeroShotClient,
};
use stance_core::corpus::{ingest_articles, ArticleStore, IngestError, IngestFormat, IngestOptions, Publisher, Segmenter, StoreError};
use stance_core::eval::{
    compare_predictions, confusion, cross_validate, export_misclassified, metrics, write_misclassified, EvalError,
    GoldSentence, LabeledText, DEFAULT_MISCLASSIFIED_PAIRS,
};
use stance_core::lexicon::{GroupHit, GroupName, Lexicon};
use stance_core::retry::Backoff;
use stance_core::similarity::{
    fetch_embeddings, similarity_series, write_similarity_csv, EmbeddingCache, EmbeddingTransport, FetchError,
    SimilarityOptions,
};
use stance_core::trends::{
    article_mention_share, article_mentions, group_stance_shares, join_predictions, sentence_counts, stance_shares,
    write_counts_csv, write_mentions_csv, write_trends_csv, DatedSentence, Granularity, TrendError, TrendPoint,
};
use stance_core::StanceLabel;

use crate::config::{secret, PipelineConfig};
use crate::error::{PipelineError, Result};
use crate::layout::Layout;
use crate::manifest::{self, RunManifest, RunOutput};

/// Validated configuration plus everything derived from it.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub config: PipelineConfig,
    pub layout: Layout,
    pub config_hash: String,
    pub lexicon: Lexicon,
}

impl Workspace {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let lexicon = config.lexicon()?;
        fs::create_dir_all(&config.data_dir)
            .map_err(|e| PipelineError::validation(format!("data directory {}: {e}", config.data_dir.display())))?;
        Ok(Workspace {
            layout: Layout::new(config.data_dir.clone()),
            config_hash: config.hash(),
            config,
            lexicon,
        })
    }

    pub fn open_store(&self) -> Result<ArticleStore> {
        ArticleStore::open(self.layout.articles()).map_err(store_error)
    }

    pub fn open_log(&self) -> Result<AnnotationLog> {
        AnnotationLog::open(self.layout.annotation_log()).map_err(log_error)
    }

    /// Runs `op` and writes its manifest.
    pub fn record<F>(&self, command: &str, params: serde_json::Value, op: F) -> Result<(RunManifest, PathBuf)>
    where
        F: FnOnce() -> Result<RunOutput>,
    {
        manifest::record(&self.layout, command, &self.config_hash, self.config.seed, params, op)
    }
}

fn store_error(e: StoreError) -> PipelineError {
    match e {
        StoreError::DuplicateId(_) | StoreError::InvalidPublisher(_) => PipelineError::validation(e.to_string()),
        StoreError::Corrupt { .. } => PipelineError::internal(format!("corrupt store: {e}")),
        StoreError::Io(_) => PipelineError::internal(e.to_string()),
    }
}

fn log_error(e: LogError) -> PipelineError {
    match e {
        LogError::Inconsistent(_) => PipelineError::validation(e.to_string()),
        LogError::Corrupt { .. } => PipelineError::internal(format!("corrupt store: {e}")),
        LogError::Io(_) => PipelineError::internal(e.to_string()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    stance_core::fsutil::write_atomic(path, bytes).map_err(|e| PipelineError::internal(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    write_file(path, &buf)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, missing_hint: &str) -> Result<Vec<T>> {
    let file = File::open(path)
        .map_err(|_| PipelineError::validation(format!("{} not found; {missing_hint}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            PipelineError::internal(format!("{} line {}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestParams {
    pub publisher: String,
    pub format: IngestFormat,
    #[serde(default)]
    pub window: Option<(NaiveDate, NaiveDate)>,
}

pub fn ingest(
    ws: &Workspace,
    store: &mut ArticleStore,
    source: impl Read,
    source_path: Option<&Path>,
    params: &IngestParams,
) -> Result<RunOutput> {
    if !Publisher::is_valid_id(&params.publisher) {
        return Err(PipelineError::validation(format!("invalid publisher id {:?}", params.publisher)));
    }
    if !ws.config.publishers.is_empty() && !ws.config.publishers.contains(&params.publisher) {
        return Err(PipelineError::validation(format!("publisher {:?} is not in the registry", params.publisher))
            .with_details(json!({ "registry": ws.config.publishers })));
    }
    let publisher = Publisher::new(&params.publisher);
    let options = IngestOptions {
        languages: ws.config.languages.clone(),
        window: params.window,
    };
    let report = ingest_articles(source, params.format, &publisher, store, &options).map_err(|e| match e {
        IngestError::NotUtf8(_) | IngestError::MissingColumn(_) | IngestError::Csv(_) => {
            PipelineError::validation(e.to_string())
        }
        IngestError::Io(_) => PipelineError::internal(e.to_string()),
        IngestError::Store(s) => store_error(s),
    })?;
    Ok(RunOutput {
        inputs: source_path.map(Path::to_path_buf).into_iter().collect(),
        outputs: vec![store.data_path(&publisher), store.index_path(&publisher)],
        summary: serde_json::to_value(&report)?,
    })
}

// --------------------------------------------------------------- extract

/// A topical sentence with its article's publisher and date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedSentence {
    pub id: String,
    pub article_id: String,
    pub index: usize,
    pub publisher: Publisher,
    pub date: NaiveDate,
    pub text: String,
    pub span: (usize, usize),
    #[serde(default)]
    pub flagged: bool,
}

pub fn extract(ws: &Workspace, store: &ArticleStore) -> Result<RunOutput> {
    let segmenter = Segmenter::default();
    let mut sentences = Vec::new();
    let mut hits = Vec::new();
    let mut scanned = 0usize;
    let mut undated = 0usize;
    for article in store.articles() {
        let Some(date) = article.date() else {
            undated += 1;
            continue;
        };
        for s in segmenter.segment(article) {
            scanned += 1;
            let h = ws.lexicon.match_sentence(&s);
            if h.is_empty() {
                continue;
            }
            sentences.push(ExtractedSentence {
                id: s.id(),
                article_id: s.article_id.clone(),
                index: s.index,
                publisher: article.publisher.clone(),
                date,
                text: s.text,
                span: s.span,
                flagged: s.flagged,
            });
            hits.extend(h);
        }
    }
    write_jsonl(&ws.layout.sentences(), &sentences)?;
    write_jsonl(&ws.layout.hits(), &hits)?;
    let mut per_group: BTreeMap<&str, usize> = BTreeMap::new();
    for h in &hits {
        *per_group.entry(h.group.as_str()).or_default() += 1;
    }
    Ok(RunOutput {
        inputs: store.publishers().flat_map(|p| [store.data_path(p), store.index_path(p)]).collect(),
        outputs: vec![ws.layout.sentences(), ws.layout.hits()],
        summary: json!({
            "articles": store.len(),
            "undated": undated,
            "scanned": scanned,
            "topical": sentences.len(),
            "hits_per_group": per_group,
        }),
    })
}

pub fn read_sentences(ws: &Workspace) -> Result<Vec<ExtractedSentence>> {
    read_jsonl(&ws.layout.sentences(), "run extract first")
}

pub fn read_hits(ws: &Workspace) -> Result<Vec<GroupHit>> {
    read_jsonl(&ws.layout.hits(), "run extract first")
}

// ---------------------------------------------------------------- sample

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub publisher: Publisher,
    pub group: GroupName,
    pub count: usize,
}

/// Contents of `annotation/batches.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub seed: u64,
    pub n: usize,
    pub cells: Vec<CellCount>,
    pub batches: Vec<AnnotationBatch>,
}

pub fn sample(ws: &Workspace, n: usize, seed: u64) -> Result<RunOutput> {
    let sentences = read_sentences(ws)?;
    let hits = read_hits(ws)?;
    let mut first_group: HashMap<&str, GroupName> = HashMap::new();
    for h in &hits {
        first_group.entry(h.sentence_id.as_str()).or_insert(h.group);
    }
    let candidates: Vec<Candidate> = sentences
        .iter()
        .filter_map(|s| {
            Some(Candidate {
                sentence_id: s.id.clone(),
                publisher: s.publisher.clone(),
                group: *first_group.get(s.id.as_str())?,
                flagged: s.flagged,
            })
        })
        .collect();
    let sample_err = |e: SampleError| PipelineError::validation(e.to_string());
    let outcome = sample_for_annotation(&candidates, n, seed).map_err(sample_err)?;
    let ann = &ws.config.annotation;
    let batches = plan_assignments(&outcome.batch, &ann.primaries, ann.coverage, ann.overlap_plan().as_ref())
        .map_err(sample_err)?;
    let plan = SamplePlan {
        seed,
        n,
        cells: outcome
            .cells
            .iter()
            .map(|((publisher, group), &count)| CellCount {
                publisher: publisher.clone(),
                group: *group,
                count,
            })
            .collect(),
        batches,
    };
    write_file(&ws.layout.batches(), &serde_json::to_vec_pretty(&plan)?)?;
    Ok(RunOutput {
        inputs: vec![ws.layout.sentences(), ws.layout.hits()],
        outputs: vec![ws.layout.batches()],
        summary: json!({ "sampled": outcome.batch.sentence_ids.len(), "batches": plan.batches.len() }),
    })
}

pub fn read_plan(ws: &Workspace) -> Result<SamplePlan> {
    let path = ws.layout.batches();
    let bytes = fs::read(&path)
        .map_err(|_| PipelineError::validation(format!("{} not found; run sample first", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::internal(format!("{}: {e}", path.display())))
}

// ------------------------------------------------------------ annotation

pub fn annotate_export(log: &AnnotationLog, out: &Path) -> Result<RunOutput> {
    let mut buf = Vec::new();
    let n = export_annotations(log, &mut buf).map_err(interchange_error)?;
    write_file(out, &buf)?;
    Ok(RunOutput {
        inputs: log.path().map(Path::to_path_buf).into_iter().collect(),
        outputs: vec![out.to_path_buf()],
        summary: json!({ "records": n }),
    })
}

pub fn annotate_import(ws: &Workspace, log: &mut AnnotationLog, input: &Path) -> Result<RunOutput> {
    let file = File::open(input).map_err(|e| PipelineError::validation(format!("{}: {e}", input.display())))?;
    let report = import_annotations(file, log, &ws.config.guideline_version).map_err(interchange_error)?;
    Ok(RunOutput {
        inputs: vec![input.to_path_buf()],
        outputs: log.path().map(Path::to_path_buf).into_iter().collect(),
        summary: serde_json::to_value(&report)?,
    })
}

fn interchange_error(e: InterchangeError) -> PipelineError {
    match e {
        InterchangeError::Log(l) => log_error(l),
        other => PipelineError::validation(other.to_string()),
    }
}

// ---------------------------------------------------------------- labels

/// Where gold labels come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// The annotation log, resolved by the configured precedence and joined
    /// to extracted sentence text.
    Annotations,
    /// A CSV with `text` (or `sentence`) and `label` (or `stance`) columns
    /// and an optional `id`. Labels are class names or 1-5 ratings.
    Csv(PathBuf),
}

fn parse_label(raw: &str) -> Option<StanceLabel> {
    StanceLabel::from_str(raw)
        .ok()
        .or_else(|| RawRating::from_str(raw).ok().map(stance_core::annotation::collapse_rating))
}

pub fn load_labeled_csv(path: &Path) -> Result<Vec<LabeledText>> {
    let file = File::open(path).map_err(|e| PipelineError::validation(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
    };
    let text_col = col(&["text", "sentence"])
        .ok_or_else(|| PipelineError::validation(format!("{}: no text column", path.display())))?;
    let label_col = col(&["label", "stance"])
        .ok_or_else(|| PipelineError::validation(format!("{}: no label column", path.display())))?;
    let id_col = col(&["id", "sentence_id"]);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(label_col).unwrap_or("");
        let label = parse_label(raw)
            .ok_or_else(|| PipelineError::validation(format!("{} row {}: unknown label {raw:?}", path.display(), i + 1)))?;
        let id = id_col
            .and_then(|c| rec.get(c))
            .filter(|s| !s.is_empty())
            .map_or_else(|| format!("row{}", i + 1), str::to_string);
        out.push(LabeledText::new(id, rec.get(text_col).unwrap_or(""), label));
    }
    Ok(out)
}

/// Labeled sentences from `source`, Ambiguous included.
pub fn load_labels(ws: &Workspace, source: &LabelSource) -> Result<(Vec<LabeledText>, Vec<PathBuf>)> {
    match source {
        LabelSource::Csv(path) => Ok((load_labeled_csv(path)?, vec![path.clone()])),
        LabelSource::Annotations => {
            let log = ws.open_log()?;
            let labels = resolve_labels(log.live_records(), &ws.config.annotation.precedence());
            let text: HashMap<String, String> = read_sentences(ws)?.into_iter().map(|s| (s.id, s.text)).collect();
            let records = labels
                .into_iter()
                .filter_map(|(id, label)| {
                    let t = text.get(&id)?.clone();
                    Some(LabeledText::new(id, t, label))
                })
                .collect();
            Ok((records, vec![ws.layout.annotation_log(), ws.layout.sentences()]))
        }
    }
}

fn three_class(records: Vec<LabeledText>) -> Vec<LabeledText> {
    records.into_iter().filter(|r| r.label.class_index().is_some()).collect()
}

// ------------------------------------------------------------- train / nb

pub fn train_nb(ws: &Workspace, source: &LabelSource) -> Result<RunOutput> {
    let (records, inputs) = load_labels(ws, source)?;
    let model = NbModel::train(records.iter().map(|r| (r.text.as_str(), r.label)), ws.config.nb.alpha)
        .map_err(|e| PipelineError::validation(e.to_string()))?;
    write_file(&ws.layout.nb_model(), &serde_json::to_vec(&model)?)?;
    Ok(RunOutput {
        inputs,
        outputs: vec![ws.layout.nb_model()],
        summary: json!({
            "model_version": model.model_version(),
            "vocabulary": model.vocabulary.len(),
            "class_docs": model.class_docs,
        }),
    })
}

pub fn load_nb(ws: &Workspace) -> Result<NbModel> {
    let path = ws.layout.nb_model();
    let bytes = fs::read(&path)
        .map_err(|_| PipelineError::validation(format!("{} not found; run train-nb first", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::internal(format!("{}: {e}", path.display())))
}

// -------------------------------------------------------------- classify

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Nb,
    Remote,
    Zeroshot,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Nb => "nb",
            Backend::Remote => "remote",
            Backend::Zeroshot => "zeroshot",
        }
    }
}

impl FromStr for Backend {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nb" | "naive_bayes" => Ok(Backend::Nb),
            "remote" => Ok(Backend::Remote),
            "zeroshot" | "zero-shot" => Ok(Backend::Zeroshot),
            other => Err(PipelineError::validation(format!("unknown backend {other:?}"))),
        }
    }
}

type DynClassifier = Box<dyn Classifier + Send + Sync>;

pub fn build_classifier(ws: &Workspace, backend: Backend) -> Result<DynClassifier> {
    let missing = |section: &str| PipelineError::validation(format!("config has no [{section}] section"));
    match backend {
        Backend::Nb => Ok(Box::new(load_nb(ws)?)),
        Backend::Remote => {
            let c = ws.config.remote.as_ref().ok_or_else(|| missing("remote"))?;
            let transport =
                HttpInference::new(&c.url, secret(c.token_env.as_ref()), Duration::from_secs(c.timeout_secs));
            let mut client = RemoteClient::new(transport, &c.model);
            client.max_batch = c.max_batch.max(1);
            Ok(Box::new(client))
        }
        Backend::Zeroshot => {
            let c = ws.config.zeroshot.as_ref().ok_or_else(|| missing("zeroshot"))?;
            let transport =
                HttpChat::new(&c.base_url, secret(c.token_env.as_ref()), Duration::from_secs(c.timeout_secs));
            let mut client = ZeroShotClient::new(transport, &c.model);
            client.template.batch_size = c.batch_size;
            client.retry_limit = c.retry_limit;
            client.concurrency = c.concurrency;
            client.temperature = c.temperature;
            let audit = ws.layout.audit();
            fs::create_dir_all(audit.parent().expect("audit path has a parent"))?;
            let sink = OpenOptions::new().create(true).append(true).open(&audit)?;
            Ok(Box::new(client.with_audit(Box::new(sink))))
        }
    }
}

/// Reads `id,text` rows.
pub fn load_items_csv(path: &Path) -> Result<Vec<TextItem>> {
    let file = File::open(path).map_err(|e| PipelineError::validation(format!("{}: {e}", path.display())))?;
    #[derive(Deserialize)]
    struct Row {
        id: String,
        text: String,
    }
    csv::Reader::from_reader(file)
        .deserialize::<Row>()
        .map(|r| r.map(|r| TextItem::new(r.id, r.text)).map_err(PipelineError::from))
        .collect()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClassifyParams {
    /// `id,text` CSV; the extracted sentences when unset.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub fn classify(ws: &Workspace, backend: Backend, classifier: &dyn Classifier, params: &ClassifyParams) -> Result<RunOutput> {
    let (items, inputs) = match &params.input {
        Some(p) => (load_items_csv(p)?, vec![p.clone()]),
        None => (
            read_sentences(ws)?.into_iter().map(|s| TextItem::new(s.id, s.text)).collect(),
            vec![ws.layout.sentences()],
        ),
    };
    let outcome = classifier.classify(&items);
    if outcome.predictions.is_empty() && !outcome.failures.is_empty() {
        return Err(PipelineError::backend(format!(
            "{} backend classified none of {} sentences",
            backend.as_str(),
            items.len()
        ))
        .with_details(json!({ "first_failure": outcome.failures[0].reason })));
    }
    let out = params.output.clone().unwrap_or_else(|| ws.layout.predictions(backend.as_str()));
    let failures_path = out.with_extension("failures.jsonl");
    write_file(&out, &csv_bytes(|b| write_predictions(&outcome.predictions, b).map_err(csv_error))?)?;
    write_jsonl(&failures_path, &outcome.failures)?;
    let mut per_label = [0usize; 3];
    for p in &outcome.predictions {
        if let Some(i) = p.label.class_index() {
            per_label[i] += 1;
        }
    }
    Ok(RunOutput {
        inputs,
        outputs: vec![out, failures_path],
        summary: json!({
            "inputs": items.len(),
            "predictions": outcome.predictions.len(),
            "failures": outcome.failures.len(),
            "batches": outcome.batches.len(),
            "per_label": { "Against": per_label[0], "Neutral": per_label[1], "Supportive": per_label[2] },
        }),
    })
}

fn csv_error(e: stance_core::classify::PredictionCsvError) -> csv::Error {
    match e {
        stance_core::classify::PredictionCsvError::Csv(c) => c,
        other => csv::Error::from(std::io::Error::other(other.to_string())),
    }
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = File::open(path)
        .map_err(|_| PipelineError::validation(format!("{} not found; run classify first", path.display())))?;
    read_predictions(file).map_err(|e| PipelineError::validation(format!("{}: {e}", path.display())))
}

// ------------------------------------------------------------------ eval

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalParams {
    pub k: usize,
    pub labels: LabelSource,
}

fn eval_error(e: EvalError) -> PipelineError {
    match e {
        EvalError::Backend { .. } => PipelineError::backend(e.to_string()),
        EvalError::Metrics { .. } => PipelineError::internal(e.to_string()),
        other => PipelineError::validation(other.to_string()),
    }
}

/// Cross-validates NB, or scores an external backend once on the whole
/// labeled set (it cannot be retrained per fold).
pub fn evaluate(ws: &Workspace, backend: Backend, external: Option<&dyn Classifier>, params: &EvalParams) -> Result<RunOutput> {
    let (records, inputs) = load_labels(ws, &params.labels)?;
    let records = three_class(records);
    let dir = ws.layout.reports();
    let name = backend.as_str();
    let json_path = dir.join(format!("eval-{name}.json"));
    let csv_path = dir.join(format!("eval-{name}.csv"));
    let confusion_path = dir.join(format!("confusion-{name}.csv"));
    let (report_json, mean, pooled) = match (backend, external) {
        (Backend::Nb, _) => {
            let alpha = ws.config.nb.alpha;
            let cv = cross_validate(&records, params.k, ws.config.seed, |train: &[LabeledText]| {
                NbModel::train(train.iter().map(|r| (r.text.as_str(), r.label)), alpha)
            })
            .map_err(eval_error)?;
            (serde_json::to_value(&cv)?, cv.mean.clone(), cv.pooled)
        }
        (_, Some(classifier)) => {
            let items: Vec<TextItem> = records.iter().map(|r| TextItem::new(&r.id, &r.text)).collect();
            let outcome = classifier.classify(&items);
            let gold: HashMap<&str, StanceLabel> = records.iter().map(|r| (r.id.as_str(), r.label)).collect();
            let (truth, pred): (Vec<_>, Vec<_>) =
                outcome.predictions.iter().map(|p| (gold[p.sentence_id.as_str()], p.label)).unzip();
            let matrix = confusion(&truth, &pred).map_err(|e| PipelineError::backend(e.to_string()))?;
            let mut report = metrics(&matrix).map_err(|e| PipelineError::internal(e.to_string()))?;
            report.backend = classifier.backend().to_string();
            report.unclassified = outcome.failures.len();
            (serde_json::to_value(&report)?, report, matrix)
        }
        (_, None) => return Err(PipelineError::internal("external backend not constructed")),
    };
    write_file(&json_path, &serde_json::to_vec_pretty(&report_json)?)?;
    write_file(&csv_path, &csv_bytes(|b| mean.write_csv(b))?)?;
    write_file(&confusion_path, &csv_bytes(|b| pooled.write_csv(b))?)?;
    Ok(RunOutput {
        inputs,
        outputs: vec![json_path, csv_path, confusion_path],
        summary: json!({
            "records": records.len(),
            "macro_f1": mean.macro_f1(),
            "per_class_f1": mean.per_class.map(|c| c.f1),
            "accuracy": mean.accuracy,
        }),
    })
}

// --------------------------------------------------------------- compare

pub fn compare(ws: &Workspace, a: &Path, b: &Path, gold: Option<&LabelSource>) -> Result<RunOutput> {
    let pa = load_predictions(a)?;
    let pb = load_predictions(b)?;
    let cmp = compare_predictions(&pa, &pb).map_err(|e| PipelineError::validation(e.to_string()))?;
    let dir = ws.layout.reports();
    let json_path = dir.join("compare.json");
    write_file(&json_path, &serde_json::to_vec_pretty(&cmp)?)?;
    let mut inputs = vec![a.to_path_buf(), b.to_path_buf()];
    let mut outputs = vec![json_path];
    let mut misclassified = None;
    if let Some(source) = gold {
        let (records, gold_inputs) = load_labels(ws, source)?;
        inputs.extend(gold_inputs);
        let gold: Vec<GoldSentence> = records
            .into_iter()
            .map(|r| GoldSentence {
                id: r.id,
                text: r.text,
                label: r.label,
            })
            .collect();
        let rows = export_misclassified(&gold, &pa, &DEFAULT_MISCLASSIFIED_PAIRS);
        let path = dir.join("misclassified.csv");
        write_file(&path, &csv_bytes(|buf| write_misclassified(&rows, buf))?)?;
        outputs.push(path);
        misclassified = Some(rows.len());
    }
    Ok(RunOutput {
        inputs,
        outputs,
        summary: json!({ "n": cmp.n, "kappa": cmp.kappa, "agreement": cmp.agreement, "misclassified": misclassified }),
    })
}

// ---------------------------------------------------------------- trends

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrendParams {
    /// Prediction CSV; `predictions/nb.csv` when unset.
    #[serde(default)]
    pub predictions: Option<PathBuf>,
    /// Overrides the configured threshold for the thresholded series.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Also write one file per figure under `plot/`.
    #[serde(default)]
    pub plot_data: bool,
}

fn trend_error(e: TrendError) -> PipelineError {
    PipelineError::validation(e.to_string())
}

fn of_publisher(points: &[TrendPoint], p: Option<&Publisher>, groups: Option<&[GroupName]>) -> Vec<TrendPoint> {
    points
        .iter()
        .filter(|t| p.is_some_and(|p| &t.publisher == p))
        .filter(|t| groups.is_none_or(|g| t.group.is_some_and(|x| g.contains(&x))))
        .cloned()
        .collect()
}

pub fn trends(ws: &Workspace, store: &ArticleStore, params: &TrendParams) -> Result<RunOutput> {
    let threshold = params.threshold.unwrap_or(ws.config.threshold);
    let pred_path = params.predictions.clone().unwrap_or_else(|| ws.layout.predictions("nb"));
    let sentences = read_sentences(ws)?;
    let hits = read_hits(ws)?;
    let predictions = load_predictions(&pred_path)?;
    let articles: Vec<_> = store.articles().cloned().collect();

    let span = articles
        .iter()
        .filter_map(|a| a.date())
        .fold(None, |acc: Option<(NaiveDate, NaiveDate)>, d| {
            Some(acc.map_or((d, d), |(lo, hi)| (lo.min(d), hi.max(d))))
        });
    let dated: Vec<DatedSentence> = sentences
        .iter()
        .map(|s| DatedSentence {
            sentence_id: s.id.clone(),
            publisher: s.publisher.clone(),
            date: s.date,
        })
        .collect();
    let (obs, unmatched) = join_predictions(&dated, &predictions);
    let mentions = article_mentions(&articles, &ws.lexicon, &Segmenter::default());

    let counts_month = sentence_counts(&dated, Granularity::Month, span);
    let counts_week = sentence_counts(&dated, Granularity::Week, span);
    let mention_month = article_mention_share(&mentions, Granularity::Month, span);
    let stance_month = stance_shares(&obs, Granularity::Month, None, span).map_err(trend_error)?;
    let groups_year = group_stance_shares(&obs, &hits, Granularity::Year, None, span).map_err(trend_error)?;
    let all_distributions = obs.iter().all(|o| o.prediction.distribution);
    let thresholded = if all_distributions || params.threshold.is_some() {
        Some(stance_shares(&obs, Granularity::Month, Some(threshold), span).map_err(trend_error)?)
    } else {
        None
    };

    let mut outputs = Vec::new();
    let mut emit = |path: PathBuf, bytes: Vec<u8>| -> Result<()> {
        write_file(&path, &bytes)?;
        outputs.push(path);
        Ok(())
    };
    let l = &ws.layout;
    emit(l.series("fig1"), csv_bytes(|b| write_counts_csv(&counts_month, b))?)?;
    emit(l.series("fig3"), csv_bytes(|b| write_mentions_csv(&mention_month, b))?)?;
    emit(l.series("stance"), csv_bytes(|b| write_trends_csv(&stance_month, b, false))?)?;
    emit(l.series("groups"), csv_bytes(|b| write_trends_csv(&groups_year, b, false))?)?;
    if let Some(t) = &thresholded {
        emit(l.series("stance_threshold"), csv_bytes(|b| write_trends_csv(t, b, true))?)?;
    }

    if params.plot_data {
        let registry = ws.config.publisher_registry();
        let first = registry.first();
        let second = registry.get(1);
        let (g1, g2) = GroupName::ALL.split_at(GroupName::ALL.len() / 2);
        emit(l.plot("fig1"), csv_bytes(|b| write_counts_csv(&counts_month, b))?)?;
        emit(l.plot("fig3"), csv_bytes(|b| write_mentions_csv(&mention_month, b))?)?;
        emit(l.plot("s4"), csv_bytes(|b| write_counts_csv(&counts_week, b))?)?;
        for (name, p) in [("fig4", first), ("fig5", second)] {
            let pts = of_publisher(&stance_month, p, None);
            emit(l.plot(name), csv_bytes(|b| write_trends_csv(&pts, b, false))?)?;
        }
        for (name, p, g) in [("s6", first, g1), ("s7", first, g2), ("s8", second, g1), ("s9", second, g2)] {
            let pts = of_publisher(&groups_year, p, Some(g));
            emit(l.plot(name), csv_bytes(|b| write_trends_csv(&pts, b, false))?)?;
        }
        for (name, p) in [("s10", first), ("s11", second)] {
            let pts = thresholded.as_deref().map(|t| of_publisher(t, p, None)).unwrap_or_default();
            emit(l.plot(name), csv_bytes(|b| write_trends_csv(&pts, b, true))?)?;
        }
    }

    let mut inputs = vec![l.sentences(), l.hits(), pred_path];
    inputs.extend(store.publishers().map(|p| store.data_path(p)));
    Ok(RunOutput {
        inputs,
        outputs,
        summary: json!({
            "observations": obs.len(),
            "unmatched_predictions": unmatched,
            "threshold": thresholded.as_ref().map(|_| threshold),
            "span": span.map(|(a, b)| [a.to_string(), b.to_string()]),
        }),
    })
}

// ------------------------------------------------------------ similarity

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimilarityParams {
    #[serde(default)]
    pub predictions: Option<PathBuf>,
}

pub fn similarity<T: EmbeddingTransport>(
    ws: &Workspace,
    transport: &T,
    provider: &str,
    batch_limit: usize,
    backoff: &Backoff,
    params: &SimilarityParams,
) -> Result<RunOutput> {
    let pred_path = params.predictions.clone().unwrap_or_else(|| ws.layout.predictions("nb"));
    let sentences = read_sentences(ws)?;
    let predictions = load_predictions(&pred_path)?;
    let dated: Vec<DatedSentence> = sentences
        .iter()
        .map(|s| DatedSentence {
            sentence_id: s.id.clone(),
            publisher: s.publisher.clone(),
            date: s.date,
        })
        .collect();
    let (obs, _) = join_predictions(&dated, &predictions);
    let text: HashMap<&str, &str> = sentences.iter().map(|s| (s.id.as_str(), s.text.as_str())).collect();
    let items: Vec<TextItem> = obs
        .iter()
        .filter_map(|o| Some(TextItem::new(&o.sentence_id, *text.get(o.sentence_id.as_str())?)))
        .collect();
    let mut cache = EmbeddingCache::open(ws.layout.embeddings(), provider)
        .map_err(|e| PipelineError::internal(format!("embedding cache: {e}")))?;
    let fetched = fetch_embeddings(transport, &mut cache, &items, batch_limit.max(1), backoff).map_err(|e| match e {
        FetchError::Transport { .. } | FetchError::CountMismatch { .. } => PipelineError::backend(e.to_string()),
        FetchError::Cache(_) => PipelineError::internal(e.to_string()),
    })?;
    let options = SimilarityOptions {
        seed: ws.config.seed,
        cap: ws.config.similarity.sample_cap,
    };
    let series = similarity_series(&obs, |id| cache.get(id), options)
        .map_err(|e| PipelineError::internal(format!("similarity: {e}")))?;
    let out = ws.layout.series("similarity");
    write_file(&out, &csv_bytes(|b| write_similarity_csv(&series.points, b))?)?;
    Ok(RunOutput {
        inputs: vec![ws.layout.sentences(), pred_path],
        outputs: vec![out],
        summary: json!({
            "points": series.points.len(),
            "missing": series.missing.len(),
            "without_embedding": series.without_embedding,
            "fetch": fetched,
        }),
    })
}

// ----------------------------------------------------- emit-train-config

pub fn emit_train_config(ws: &Workspace, model: &str, out: Option<&Path>) -> Result<RunOutput> {
    let text = emit_training_config(model).map_err(|e| PipelineError::validation(e.to_string()))?;
    let path = out.map_or_else(|| ws.layout.root().join(format!("models/train-config-{model}.json")), Path::to_path_buf);
    let mut bytes = text.into_bytes();
    if !bytes.ends_with(b"\n") {
        bytes.push(b'\n');
    }
    write_file(&path, &bytes)?;
    Ok(RunOutput {
        inputs: Vec::new(),
        outputs: vec![path],
        summary: json!({ "model": model }),
    })
}

/// Helper for callers that stream a manifest summary to stdout.
pub fn print_summary(manifest: &RunManifest, manifest_path: &Path, mut out: impl Write) -> std::io::Result<()> {
    let body = json!({ "command": manifest.command, "summary": manifest.summary, "manifest": manifest_path });
    writeln!(out, "{}", serde_json::to_string_pretty(&body).unwrap_or_default())
}
