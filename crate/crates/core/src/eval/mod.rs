//! Evaluation: stratified folds, cross-validation, confusion matrices,
//! per-class and averaged metrics, prediction-set comparison and
//! misclassification export.

mod compare;
mod folds;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::label::StanceLabel;

pub use compare::{
    compare_predictions, export_misclassified, write_misclassified, CompareError, Comparison, GoldSentence,
    MisclassifiedRow, DEFAULT_MISCLASSIFIED_PAIRS,
};
pub use folds::{cross_validate, kfold_split, mean_report, CvReport, CvStd, EvalError, Fold, LabeledText};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfusionError {
    #[error("label lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("ambiguous label at position {0}")]
    Ambiguous(usize),
    #[error("confusion matrix is empty")]
    Empty,
}

/// Rows are true classes, columns predicted, both in the order
/// Against, Neutral, Supportive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

pub fn confusion(truth: &[StanceLabel], predicted: &[StanceLabel]) -> Result<ConfusionMatrix, ConfusionError> {
    if truth.len() != predicted.len() {
        return Err(ConfusionError::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut m = ConfusionMatrix::default();
    for (i, (t, p)) in truth.iter().zip(predicted).enumerate() {
        let (Some(ti), Some(pi)) = (t.class_index(), p.class_index()) else {
            return Err(ConfusionError::Ambiguous(i));
        };
        m.counts[ti][pi] += 1;
    }
    Ok(m)
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for i in 0..3 {
            for j in 0..3 {
                self.counts[i][j] += other.counts[i][j];
            }
        }
    }

    /// Row percentages rounded to two decimals. Rounding residue goes to the
    /// cells with the largest remainders so each non-empty row sums to
    /// exactly 100; empty rows are all zero.
    pub fn row_percentages(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in self.counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total == 0 {
                continue;
            }
            // Work in hundredths of a percent.
            let scaled: Vec<u128> = row.iter().map(|&c| c as u128 * 10_000).collect();
            let mut units: Vec<u128> = scaled.iter().map(|s| s / total as u128).collect();
            let rem: Vec<u128> = scaled.iter().map(|s| s % total as u128).collect();
            let missing = 10_000 - units.iter().sum::<u128>();
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| rem[b].cmp(&rem[a]).then(a.cmp(&b)));
            for &j in order.iter().take(missing as usize) {
                units[j] += 1;
            }
            for j in 0..3 {
                out[i][j] = units[j] as f64 / 100.0;
            }
        }
        out
    }

    /// CSV with class names as header row and first column.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["true\\predicted", "Against", "Neutral", "Supportive"])?;
        for (i, row) in self.counts.iter().enumerate() {
            let mut rec = vec![StanceLabel::CLASSES[i].as_str().to_string()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the metric had a zero denominator and was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backend: String,
    pub fold: Option<usize>,
    pub per_class: [ClassMetrics; 3],
    pub accuracy: f64,
    pub micro: Averages,
    pub macro_avg: Averages,
    pub weighted: Averages,
    pub support: u64,
    /// Inputs the backend failed to classify; not counted in the matrix.
    pub unclassified: usize,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Precision, recall and F1 per class, plus micro, macro and
/// support-weighted averages. Zero denominators give 0 and set the
/// matching `*_undefined` flag.
pub fn metrics(matrix: &ConfusionMatrix) -> Result<EvalReport, ConfusionError> {
    let total = matrix.total();
    if total == 0 {
        return Err(ConfusionError::Empty);
    }
    let mut per_class = [ClassMetrics::default(); 3];
    for (c, m) in per_class.iter_mut().enumerate() {
        let tp = matrix.counts[c][c];
        let (precision, p_undef) = ratio(tp, matrix.predicted(c));
        let (recall, r_undef) = ratio(tp, matrix.support(c));
        let (f1, f_undef) = if precision + recall == 0.0 {
            (0.0, true)
        } else {
            (2.0 * precision * recall / (precision + recall), false)
        };
        *m = ClassMetrics {
            precision,
            recall,
            f1,
            support: matrix.support(c),
            precision_undefined: p_undef,
            recall_undefined: r_undef,
            f1_undefined: f_undef,
        };
    }
    let accuracy = matrix.trace() as f64 / total as f64;
    let macro_avg = Averages {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / 3.0,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / 3.0,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / 3.0,
    };
    let weigh = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
    };
    let weighted = Averages {
        precision: weigh(|m| m.precision),
        recall: weigh(|m| m.recall),
        f1: weigh(|m| m.f1),
    };
    Ok(EvalReport {
        backend: String::new(),
        fold: None,
        per_class,
        accuracy,
        micro: Averages {
            precision: accuracy,
            recall: accuracy,
            f1: accuracy,
        },
        macro_avg,
        weighted,
        support: total,
        unclassified: 0,
    })
}

impl EvalReport {
    pub fn macro_f1(&self) -> f64 {
        self.macro_avg.f1
    }

    /// Per-class rows then micro, macro and weighted averages.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "precision", "recall", "f1", "support"])?;
        for (c, m) in self.per_class.iter().enumerate() {
            w.write_record([
                StanceLabel::CLASSES[c].as_str().to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                m.support.to_string(),
            ])?;
        }
        for (name, avg) in [("micro avg", &self.micro), ("macro avg", &self.macro_avg), ("weighted avg", &self.weighted)] {
            w.write_record([
                name.to_string(),
                avg.precision.to_string(),
                avg.recall.to_string(),
                avg.f1.to_string(),
                self.support.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use StanceLabel::*;

    #[test]
    fn hand_counted_matrix() {
        let m = confusion(&[Against, Against, Neutral], &[Against, Neutral, Neutral]).unwrap();
        assert_eq!(m.counts[0], [1, 1, 0]);
        assert_eq!(m.counts[1], [0, 1, 0]);
        assert_eq!(m.total(), 3);
        assert!(confusion(&[Against], &[Ambiguous]).is_err());
        assert!(confusion(&[Against], &[]).is_err());
    }

    #[test]
    fn hand_metrics() {
        let m = ConfusionMatrix {
            counts: [[8, 2, 0], [1, 7, 2], [0, 3, 7]],
        };
        let r = metrics(&m).unwrap();
        assert!((r.per_class[0].precision - 8.0 / 9.0).abs() < 1e-15);
        assert!((r.per_class[0].recall - 0.8).abs() < 1e-15);
        assert!((r.per_class[0].f1 - 16.0 / 19.0).abs() < 1e-15);
        assert!((r.accuracy - 22.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_is_perfect() {
        let r = metrics(&ConfusionMatrix {
            counts: [[3, 0, 0], [0, 4, 0], [0, 0, 5]],
        })
        .unwrap();
        assert_eq!(r.macro_avg.f1, 1.0);
        assert_eq!(r.weighted.f1, 1.0);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn never_predicted_class_is_flagged() {
        let r = metrics(&ConfusionMatrix {
            counts: [[3, 1, 0], [0, 4, 0], [2, 0, 0]],
        })
        .unwrap();
        assert_eq!(r.per_class[2].precision, 0.0);
        assert!(r.per_class[2].precision_undefined);
        assert!(!r.per_class[0].precision_undefined);
        assert_eq!(metrics(&ConfusionMatrix::default()), Err(ConfusionError::Empty));
    }

    #[test]
    fn row_percentages_reproduce_constructed_ratios() {
        // Counts built from 69.92 / 22.88 / 7.20 percent of a 10000 support.
        let m = ConfusionMatrix {
            counts: [[6992, 2288, 720], [1, 1, 1], [0, 0, 0]],
        };
        let p = m.row_percentages();
        assert_eq!(p[0], [69.92, 22.88, 7.20]);
        assert_eq!(p[1], [33.34, 33.33, 33.33]);
        assert_eq!(p[2], [0.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_layouts() {
        let m = ConfusionMatrix {
            counts: [[1, 2, 3], [4, 5, 6], [7, 8, 9]],
        };
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "true\\predicted,Against,Neutral,Supportive");
        assert_eq!(text.lines().nth(2).unwrap(), "Neutral,4,5,6");

        let mut buf = Vec::new();
        metrics(&m).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(5).unwrap().starts_with("macro avg,"));
    }

    fn matrix() -> impl Strategy<Value = ConfusionMatrix> {
        prop::array::uniform3(prop::array::uniform3(0u64..50))
            .prop_filter("non-empty", |c| c.iter().flatten().sum::<u64>() > 0)
            .prop_map(|counts| ConfusionMatrix { counts })
    }

    proptest! {
        #[test]
        fn micro_equals_accuracy(m in matrix()) {
            let r = metrics(&m).unwrap();
            let acc = m.trace() as f64 / m.total() as f64;
            prop_assert!((r.micro.precision - acc).abs() < 1e-12);
            prop_assert!((r.micro.recall - acc).abs() < 1e-12);
            for c in &r.per_class {
                for v in [c.precision, c.recall, c.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn macro_f1_is_permutation_invariant(m in matrix(), perm in Just([0usize, 1, 2]).prop_shuffle()) {
            let mut p = ConfusionMatrix::default();
            for i in 0..3 {
                for j in 0..3 {
                    p.counts[perm[i]][perm[j]] = m.counts[i][j];
                }
            }
            let a = metrics(&m).unwrap().macro_avg.f1;
            let b = metrics(&p).unwrap().macro_avg.f1;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn row_percentages_sum_to_hundred(m in matrix()) {
            for (i, row) in m.row_percentages().iter().enumerate() {
                let s: f64 = row.iter().sum();
                if m.support(i) > 0 {
                    prop_assert!((s - 100.0).abs() < 0.01 + 1e-9);
                    for (j, &p) in row.iter().enumerate() {
                        let exact = 100.0 * m.counts[i][j] as f64 / m.support(i) as f64;
                        prop_assert!((p - exact).abs() <= 0.01 + 1e-9);
                    }
                }
            }
        }
    }
}
