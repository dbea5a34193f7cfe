use std::collections::HashMap;
use std::fmt::Display;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{metrics, Averages, ClassMetrics, ConfusionError, ConfusionMatrix, EvalReport};
use crate::classify::{Classifier, TextItem};
use crate::label::StanceLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub id: String,
    pub text: String,
    pub label: StanceLabel,
}

impl LabeledText {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: StanceLabel) -> Self {
        LabeledText {
            id: id.into(),
            text: text.into(),
            label,
        }
    }
}

/// Record indices for one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("class {class} has {count} records, fewer than k={k}")]
    SmallClass { class: StanceLabel, count: usize, k: usize },
    #[error("ambiguous record at position {0}; exclude ambiguous records before splitting")]
    Ambiguous(usize),
    #[error("fold {fold}: {message}")]
    Backend { fold: usize, message: String },
    #[error("fold {fold}: {source}")]
    Metrics { fold: usize, source: ConfusionError },
    #[error("no fold reports to average")]
    NoFolds,
}

/// Stratified k-fold split. Each class is shuffled with the seed and dealt
/// round-robin over the folds, continuing the deal across classes so fold
/// sizes differ by at most one. Eval slices are disjoint and cover every
/// record; each fold trains on the rest.
pub fn kfold_split(labels: &[StanceLabel], k: usize, seed: u64) -> Result<Vec<Fold>, EvalError> {
    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        by_class[l.class_index().ok_or(EvalError::Ambiguous(i))?].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(EvalError::SmallClass {
                class: StanceLabel::CLASSES[c],
                count: members.len(),
                k,
            });
        }
    }
    if labels.len() < k {
        return Err(EvalError::SmallClass {
            class: StanceLabel::Against,
            count: labels.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut dealt = 0usize;
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            eval_sets[dealt % k].push(i);
            dealt += 1;
        }
    }
    let mut assignment = vec![0usize; labels.len()];
    for (f, set) in eval_sets.iter_mut().enumerate() {
        set.sort_unstable();
        for &i in set.iter() {
            assignment[i] = f;
        }
    }
    Ok(eval_sets
        .into_iter()
        .enumerate()
        .map(|(f, eval)| Fold {
            train: (0..labels.len()).filter(|&i| assignment[i] != f).collect(),
            eval,
        })
        .collect())
}

/// Sample standard deviations across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvStd {
    pub per_class_f1: [f64; 3],
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    pub mean: EvalReport,
    pub std: CvStd,
    pub pooled: ConfusionMatrix,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Arithmetic mean of every metric over the fold reports. Supports are
/// summed; an undefined flag is set if it was set in any fold.
pub fn mean_report(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoFolds)?;
    let avg = |f: &dyn Fn(&EvalReport) -> Averages| Averages {
        precision: mean(reports.iter().map(|r| f(r).precision)),
        recall: mean(reports.iter().map(|r| f(r).recall)),
        f1: mean(reports.iter().map(|r| f(r).f1)),
    };
    let mut per_class = [ClassMetrics::default(); 3];
    for (c, m) in per_class.iter_mut().enumerate() {
        *m = ClassMetrics {
            precision: mean(reports.iter().map(|r| r.per_class[c].precision)),
            recall: mean(reports.iter().map(|r| r.per_class[c].recall)),
            f1: mean(reports.iter().map(|r| r.per_class[c].f1)),
            support: reports.iter().map(|r| r.per_class[c].support).sum(),
            precision_undefined: reports.iter().any(|r| r.per_class[c].precision_undefined),
            recall_undefined: reports.iter().any(|r| r.per_class[c].recall_undefined),
            f1_undefined: reports.iter().any(|r| r.per_class[c].f1_undefined),
        };
    }
    Ok(EvalReport {
        backend: first.backend.clone(),
        fold: None,
        per_class,
        accuracy: mean(reports.iter().map(|r| r.accuracy)),
        micro: avg(&|r| r.micro),
        macro_avg: avg(&|r| r.macro_avg),
        weighted: avg(&|r| r.weighted),
        support: reports.iter().map(|r| r.support).sum(),
        unclassified: reports.iter().map(|r| r.unclassified).sum(),
    })
}

/// k-fold cross-validation. `fit` builds a classifier from a fold's
/// training records; folds run on separate threads and are reduced in fold
/// order. Inputs the classifier fails on are counted as `unclassified`.
pub fn cross_validate<C, E, F>(
    records: &[LabeledText],
    k: usize,
    seed: u64,
    fit: F,
) -> Result<CvReport, EvalError>
where
    C: Classifier,
    E: Display,
    F: Fn(&[LabeledText]) -> Result<C, E> + Sync,
{
    let labels: Vec<StanceLabel> = records.iter().map(|r| r.label).collect();
    let folds = kfold_split(&labels, k, seed)?;
    let run_fold = |f: usize, fold: &Fold| -> Result<(EvalReport, ConfusionMatrix), EvalError> {
        let train: Vec<LabeledText> = fold.train.iter().map(|&i| records[i].clone()).collect();
        let classifier = fit(&train).map_err(|e| EvalError::Backend {
            fold: f,
            message: e.to_string(),
        })?;
        let items: Vec<TextItem> = fold
            .eval
            .iter()
            .map(|&i| TextItem::new(&records[i].id, &records[i].text))
            .collect();
        let outcome = classifier.classify(&items);
        let gold: HashMap<&str, StanceLabel> = fold
            .eval
            .iter()
            .map(|&i| (records[i].id.as_str(), records[i].label))
            .collect();
        let mut truth = Vec::new();
        let mut predicted = Vec::new();
        for p in &outcome.predictions {
            if let Some(&t) = gold.get(p.sentence_id.as_str()) {
                truth.push(t);
                predicted.push(p.label);
            }
        }
        let matrix = super::confusion(&truth, &predicted).map_err(|source| EvalError::Metrics { fold: f, source })?;
        let mut report = metrics(&matrix).map_err(|source| EvalError::Metrics { fold: f, source })?;
        report.backend = classifier.backend().to_string();
        report.fold = Some(f);
        report.unclassified = fold.eval.len() - truth.len();
        Ok((report, matrix))
    };

    let results: Vec<Result<(EvalReport, ConfusionMatrix), EvalError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = folds
            .iter()
            .enumerate()
            .map(|(f, fold)| scope.spawn(move || run_fold(f, fold)))
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(f, h)| {
                h.join().unwrap_or_else(|_| {
                    Err(EvalError::Backend {
                        fold: f,
                        message: "fold panicked".into(),
                    })
                })
            })
            .collect()
    });

    let mut reports = Vec::with_capacity(k);
    let mut pooled = ConfusionMatrix::default();
    for r in results {
        let (report, matrix) = r?;
        pooled.add(&matrix);
        reports.push(report);
    }
    let collect = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).collect::<Vec<f64>>();
    let std = CvStd {
        per_class_f1: [0, 1, 2].map(|c| sample_std(&collect(&|r| r.per_class[c].f1))),
        macro_f1: sample_std(&collect(&|r| r.macro_avg.f1)),
        weighted_f1: sample_std(&collect(&|r| r.weighted.f1)),
        accuracy: sample_std(&collect(&|r| r.accuracy)),
    };
    Ok(CvReport {
        mean: mean_report(&reports)?,
        folds: reports,
        std,
        pooled,
    })
}
