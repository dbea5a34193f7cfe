use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::annotation::{cohen_kappa, KappaError};
use crate::classify::Prediction;
use crate::label::StanceLabel;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("prediction sets differ: {} ids only in the first, {} only in the second", only_a.len(), only_b.len())]
    IdMismatch { only_a: Vec<String>, only_b: Vec<String> },
    #[error("duplicate sentence id {0}")]
    Duplicate(String),
    #[error(transparent)]
    Kappa(#[from] KappaError),
}

/// Agreement between two prediction sets over the same sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: usize,
    pub kappa: f64,
    pub agreement: f64,
    /// Rows are the first set's labels, columns the second's.
    pub table: [[u64; 3]; 3],
}

fn by_id(preds: &[Prediction]) -> Result<BTreeMap<&str, StanceLabel>, CompareError> {
    let mut out = BTreeMap::new();
    for p in preds {
        if out.insert(p.sentence_id.as_str(), p.label).is_some() {
            return Err(CompareError::Duplicate(p.sentence_id.clone()));
        }
    }
    Ok(out)
}

/// Joins on sentence id and reports Cohen's kappa plus the 3×3 cross table.
pub fn compare_predictions(a: &[Prediction], b: &[Prediction]) -> Result<Comparison, CompareError> {
    let ma = by_id(a)?;
    let mb = by_id(b)?;
    let ka: BTreeSet<&str> = ma.keys().copied().collect();
    let kb: BTreeSet<&str> = mb.keys().copied().collect();
    if ka != kb {
        return Err(CompareError::IdMismatch {
            only_a: ka.difference(&kb).map(|s| s.to_string()).collect(),
            only_b: kb.difference(&ka).map(|s| s.to_string()).collect(),
        });
    }
    let mut la = Vec::with_capacity(ma.len());
    let mut lb = Vec::with_capacity(ma.len());
    let mut table = [[0u64; 3]; 3];
    for (id, &x) in &ma {
        let y = mb[id];
        la.push(x);
        lb.push(y);
        if let (Some(i), Some(j)) = (x.class_index(), y.class_index()) {
            table[i][j] += 1;
        }
    }
    let kappa = cohen_kappa(&la, &lb)?;
    let agree = la.iter().zip(&lb).filter(|(x, y)| x == y).count();
    Ok(Comparison {
        n: la.len(),
        kappa,
        agreement: agree as f64 / la.len() as f64,
        table,
    })
}

/// Annotated sentence joined against predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSentence {
    pub id: String,
    pub text: String,
    pub label: StanceLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassifiedRow {
    pub sentence_id: String,
    pub text: String,
    pub true_label: StanceLabel,
    pub predicted: StanceLabel,
    pub p_against: f64,
    pub p_neutral: f64,
    pub p_supportive: f64,
}

/// Confusions between the two extremes, in both directions.
pub const DEFAULT_MISCLASSIFIED_PAIRS: [(StanceLabel, StanceLabel); 2] = [
    (StanceLabel::Against, StanceLabel::Supportive),
    (StanceLabel::Supportive, StanceLabel::Against),
];

/// Mistakes whose (true, predicted) pair is in `pairs`, most confident
/// first; ties keep sentence id order. Predictions without a gold sentence
/// are ignored.
pub fn export_misclassified(
    gold: &[GoldSentence],
    predictions: &[Prediction],
    pairs: &[(StanceLabel, StanceLabel)],
) -> Vec<MisclassifiedRow> {
    let gold: BTreeMap<&str, &GoldSentence> = gold.iter().map(|g| (g.id.as_str(), g)).collect();
    let mut rows: Vec<(f64, MisclassifiedRow)> = predictions
        .iter()
        .filter_map(|p| {
            let g = gold.get(p.sentence_id.as_str())?;
            if g.label == p.label || !pairs.contains(&(g.label, p.label)) {
                return None;
            }
            Some((
                p.confidence(),
                MisclassifiedRow {
                    sentence_id: p.sentence_id.clone(),
                    text: g.text.clone(),
                    true_label: g.label,
                    predicted: p.label,
                    p_against: p.probs[0],
                    p_neutral: p.probs[1],
                    p_supportive: p.probs[2],
                },
            ))
        })
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.sentence_id.cmp(&b.1.sentence_id)));
    rows.into_iter().map(|(_, r)| r).collect()
}

pub fn write_misclassified<W: Write>(rows: &[MisclassifiedRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sentence_id", "text", "true", "predicted", "p_against", "p_neutral", "p_supportive"])?;
    for r in rows {
        w.write_record([
            r.sentence_id.clone(),
            r.text.clone(),
            r.true_label.as_str().to_string(),
            r.predicted.as_str().to_string(),
            r.p_against.to_string(),
            r.p_neutral.to_string(),
            r.p_supportive.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use StanceLabel::*;

    fn pred(id: &str, probs: [f64; 3]) -> Prediction {
        Prediction::from_probs(id, probs, "t", "1").unwrap()
    }

    fn labelled(labels: &[StanceLabel]) -> Vec<Prediction> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Prediction::one_hot(format!("s{i}"), l, "t", "1").unwrap())
            .collect()
    }

    #[test]
    fn identical_sets_agree_fully() {
        let a = labelled(&[Against, Neutral, Supportive, Neutral]);
        let c = compare_predictions(&a, &a).unwrap();
        assert_eq!(c.kappa, 1.0);
        assert_eq!(c.table[1][1], 2);
    }

    #[test]
    fn permuted_copy_has_nonpositive_kappa() {
        let base: Vec<StanceLabel> = (0..30).map(|i| StanceLabel::CLASSES[i % 3]).collect();
        let rotated: Vec<StanceLabel> = base
            .iter()
            .map(|l| StanceLabel::CLASSES[(l.class_index().unwrap() + 1) % 3])
            .collect();
        let c = compare_predictions(&labelled(&base), &labelled(&rotated)).unwrap();
        // p_o = 0 and p_e = 1/3 on balanced marginals: κ = -1/2.
        assert!((c.kappa + 0.5).abs() < 1e-12);
        assert!(c.kappa <= 0.0);
    }

    #[test]
    fn id_mismatch_is_reported() {
        let a = labelled(&[Against, Neutral]);
        let b = labelled(&[Against]);
        assert_eq!(
            compare_predictions(&a, &b),
            Err(CompareError::IdMismatch {
                only_a: vec!["s1".into()],
                only_b: vec![]
            })
        );
    }

    #[test]
    fn misclassified_export_filters_and_sorts() {
        let gold = vec![
            GoldSentence { id: "a".into(), text: "one".into(), label: Supportive },
            GoldSentence { id: "b".into(), text: "two".into(), label: Supportive },
            GoldSentence { id: "c".into(), text: "three".into(), label: Neutral },
            GoldSentence { id: "d".into(), text: "four".into(), label: Against },
        ];
        let preds = vec![
            pred("a", [0.58, 0.34, 0.08]),
            pred("b", [0.87, 0.1, 0.03]),
            pred("c", [0.9, 0.05, 0.05]),
            pred("d", [0.9, 0.05, 0.05]),
        ];
        let rows = export_misclassified(&gold, &preds, &DEFAULT_MISCLASSIFIED_PAIRS);
        let ids: Vec<&str> = rows.iter().map(|r| r.sentence_id.as_str()).collect();
        assert_eq!(ids, vec!["b", "a"]);

        let perfect = vec![pred("d", [0.9, 0.05, 0.05])];
        assert!(export_misclassified(&gold, &perfect, &DEFAULT_MISCLASSIFIED_PAIRS).is_empty());

        let mut buf = Vec::new();
        write_misclassified(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
