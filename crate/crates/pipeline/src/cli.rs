use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use stance_core::corpus::IngestFormat;
use stance_core::retry::Backoff;
use stance_core::similarity::HttpEmbedding;

use crate::config::{secret, PipelineConfig};
use crate::error::{PipelineError, Result};
use crate::manifest;
use crate::ops::{self, Backend, ClassifyParams, EvalParams, IngestParams, LabelSource, SimilarityParams, TrendParams, Workspace};

#[derive(Debug, Parser)]
#[command(name = "stance", version, about = "Stance detection and media-monitoring pipeline")]
pub struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir` from the configuration.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendArg {
    Nb,
    Remote,
    Zeroshot,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Nb => Backend::Nb,
            BackendArg::Remote => Backend::Remote,
            BackendArg::Zeroshot => Backend::Zeroshot,
        }
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Validate and store articles from a CSV or JSONL file.
    Ingest {
        #[arg(long)]
        publisher: String,
        #[arg(long)]
        input: PathBuf,
        /// Inferred from the file extension when omitted.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long, requires = "to")]
        from: Option<NaiveDate>,
        #[arg(long, requires = "from")]
        to: Option<NaiveDate>,
    },
    /// Segment stored articles and keep sentences the lexicon matches.
    Extract,
    /// Draw a balanced annotation sample and assign it to annotators.
    Sample {
        #[arg(long)]
        n: usize,
    },
    /// Write live annotations as interchange CSV.
    AnnotateExport {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Append annotations from an interchange CSV.
    AnnotateImport {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the Naive Bayes model.
    TrainNb {
        /// Labeled CSV (text, label); the annotation log when omitted.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Classify extracted sentences (or an id,text CSV).
    Classify {
        #[arg(long, value_enum)]
        backend: BackendArg,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cross-validate NB, or score another backend on labeled data.
    Eval {
        #[arg(long, value_enum)]
        backend: BackendArg,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Agreement between two prediction files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Labeled CSV used to export misclassified sentences of `a`.
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Time series of counts and stance shares.
    Trends {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write one CSV per figure under plot/.
        #[arg(long)]
        plot_data: bool,
    },
    /// Monthly embedding cosine-similarity series.
    Similarity {
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Write fine-tuning hyperparameters for an external trainer.
    EmitTrainConfig {
        #[arg(long, default_value = "default")]
        model: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// List artifact files that no run manifest accounts for.
    Lint,
}

fn infer_format(path: &Path) -> Result<IngestFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => ext.parse().map_err(PipelineError::validation),
        None => Err(PipelineError::validation("cannot infer format; pass --format")),
    }
}

fn workspace(cli: &Cli) -> Result<Workspace> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &cli.data_dir {
        config.data_dir = d.clone();
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    Workspace::new(config)
}

fn labels(path: &Option<PathBuf>) -> LabelSource {
    path.clone().map_or(LabelSource::Annotations, LabelSource::Csv)
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let mut ws = workspace(&cli)?;
    let params = serde_json::to_value(&cli.command)?;
    let (m, path) = match &cli.command {
        Command::Ingest {
            publisher,
            input,
            format,
            from,
            to,
        } => {
            let format = match format {
                Some(FormatArg::Csv) => IngestFormat::Csv,
                Some(FormatArg::Jsonl) => IngestFormat::Jsonl,
                None => infer_format(input)?,
            };
            let p = IngestParams {
                publisher: publisher.clone(),
                format,
                window: from.zip(*to),
            };
            let file = File::open(input).map_err(|e| PipelineError::validation(format!("{}: {e}", input.display())))?;
            let mut store = ws.open_store()?;
            ws.record("ingest", params, || ops::ingest(&ws, &mut store, file, Some(input), &p))?
        }
        Command::Extract => {
            let store = ws.open_store()?;
            ws.record("extract", params, || ops::extract(&ws, &store))?
        }
        Command::Sample { n } => ws.record("sample", params, || ops::sample(&ws, *n, ws.config.seed))?,
        Command::AnnotateExport { output } => {
            let log = ws.open_log()?;
            let out = output.clone().unwrap_or_else(|| ws.layout.root().join("annotation/export.csv"));
            ws.record("annotate-export", params, || ops::annotate_export(&log, &out))?
        }
        Command::AnnotateImport { input } => {
            let mut log = ws.open_log()?;
            ws.record("annotate-import", params, || ops::annotate_import(&ws, &mut log, input))?
        }
        Command::TrainNb { labels: l } => ws.record("train-nb", params, || ops::train_nb(&ws, &labels(l)))?,
        Command::Classify { backend, input, output } => {
            let backend = Backend::from(*backend);
            let classifier = ops::build_classifier(&ws, backend)?;
            let p = ClassifyParams {
                input: input.clone(),
                output: output.clone(),
            };
            ws.record("classify", params, || ops::classify(&ws, backend, classifier.as_ref(), &p))?
        }
        Command::Eval { backend, k, labels: l } => {
            let backend = Backend::from(*backend);
            let external = match backend {
                Backend::Nb => None,
                other => Some(ops::build_classifier(&ws, other)?),
            };
            let p = EvalParams { k: *k, labels: labels(l) };
            ws.record("eval", params, || ops::evaluate(&ws, backend, external.as_deref().map(|c| c as _), &p))?
        }
        Command::Compare { a, b, gold } => {
            let g = gold.clone().map(LabelSource::Csv);
            ws.record("compare", params, || ops::compare(&ws, a, b, g.as_ref()))?
        }
        Command::Trends {
            predictions,
            threshold,
            plot_data,
        } => {
            let store = ws.open_store()?;
            let p = TrendParams {
                predictions: predictions.clone(),
                threshold: *threshold,
                plot_data: *plot_data,
            };
            ws.record("trends", params, || ops::trends(&ws, &store, &p))?
        }
        Command::Similarity { predictions } => {
            let c = ws
                .config
                .embedding
                .clone()
                .ok_or_else(|| PipelineError::validation("config has no [embedding] section"))?;
            let transport = HttpEmbedding::new(
                &c.url,
                secret(c.token_env.as_ref()),
                std::time::Duration::from_secs(c.timeout_secs),
            );
            let p = SimilarityParams {
                predictions: predictions.clone(),
            };
            ws.record("similarity", params, || {
                ops::similarity(&ws, &transport, &c.provider, c.batch_limit, &Backoff::default(), &p)
            })?
        }
        Command::EmitTrainConfig { model, output } => {
            ws.record("emit-train-config", params, || ops::emit_train_config(&ws, model, output.as_deref()))?
        }
        Command::Serve { bind } => {
            if let Some(b) = bind {
                ws.config.service.bind = b.clone();
            }
            let runtime = tokio::runtime::Runtime::new()?;
            return runtime.block_on(crate::service::serve(ws));
        }
        Command::Lint => {
            let orphans = manifest::orphan_outputs(&ws.layout)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&json!({ "orphans": orphans }))?)?;
            if orphans.is_empty() {
                return Ok(());
            }
            return Err(PipelineError::validation(format!("{} artifact(s) without a manifest", orphans.len())));
        }
    };
    ops::print_summary(&m, &path, stdout)?;
    Ok(())
}

/// Runs the CLI and returns the process exit code: 0 ok, 2 validation,
/// 3 backend or network, 4 internal.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    2
                }
            };
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.kind.exit_code()
        }
    }
}
