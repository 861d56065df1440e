use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::AgreementTable;
use crate::dataset::EmotionLabel;
use crate::{Error, Result, NUM_CLASSES};

pub type ConfusionMatrix = [[usize; NUM_CLASSES]; NUM_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy, per-class and macro metrics and the confusion matrix (rows are
/// true classes, columns predictions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ReportJson", try_from = "ReportJson")]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub macro_avg: MacroMetrics,
    pub confusion: ConfusionMatrix,
    /// Attached when the report is part of a two-model comparison.
    pub agreement: Option<AgreementTable>,
}

#[derive(Serialize, Deserialize)]
struct ReportJson {
    accuracy: f64,
    per_class: IndexMap<String, ClassMetrics>,
    #[serde(rename = "macro")]
    macro_avg: MacroMetrics,
    confusion: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    agreement: Option<AgreementTable>,
}

impl From<EvalReport> for ReportJson {
    fn from(r: EvalReport) -> Self {
        ReportJson {
            accuracy: r.accuracy,
            per_class: EmotionLabel::ALL
                .iter()
                .zip(r.per_class)
                .map(|(l, m)| (l.as_str().to_string(), m))
                .collect(),
            macro_avg: r.macro_avg,
            confusion: r.confusion.iter().map(|row| row.to_vec()).collect(),
            agreement: r.agreement,
        }
    }
}

impl TryFrom<ReportJson> for EvalReport {
    type Error = String;

    fn try_from(j: ReportJson) -> std::result::Result<Self, Self::Error> {
        let mut per_class = [ClassMetrics {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            support: 0,
        }; NUM_CLASSES];
        if j.per_class.len() != NUM_CLASSES {
            return Err(format!("per_class has {} entries", j.per_class.len()));
        }
        for (name, m) in j.per_class {
            let label: EmotionLabel = name.parse()?;
            per_class[label.index()] = m;
        }
        if j.confusion.len() != NUM_CLASSES || j.confusion.iter().any(|r| r.len() != NUM_CLASSES) {
            return Err("confusion matrix must be 7x7".into());
        }
        let mut confusion = [[0; NUM_CLASSES]; NUM_CLASSES];
        for (dst, src) in confusion.iter_mut().zip(&j.confusion) {
            dst.copy_from_slice(src);
        }
        Ok(EvalReport {
            accuracy: j.accuracy,
            per_class,
            macro_avg: j.macro_avg,
            confusion,
            agreement: j.agreement,
        })
    }
}

/// Harmonic mean of precision and recall, 0 when both vanish.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn check_lengths(predictions: &[usize], labels: &[usize]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if let Some(&bad) = predictions.iter().chain(labels).find(|&&c| c >= NUM_CLASSES) {
        return Err(Error::Label(bad));
    }
    Ok(())
}

pub fn confusion_matrix(predictions: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    check_lengths(predictions, labels)?;
    let mut m = [[0; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &y) in predictions.iter().zip(labels) {
        m[y][p] += 1;
    }
    Ok(m)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(predictions: &[usize], labels: &[usize]) -> Result<EvalReport> {
    check_lengths(predictions, labels)?;
    if labels.is_empty() {
        return Err(Error::Empty);
    }
    let confusion = confusion_matrix(predictions, labels)?;
    let total = labels.len();
    let correct: usize = (0..NUM_CLASSES).map(|c| confusion[c][c]).sum();
    let mut per_class = [ClassMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        support: 0,
    }; NUM_CLASSES];
    for (c, m) in per_class.iter_mut().enumerate() {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        *m = ClassMetrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
            support,
        };
    }
    let k = NUM_CLASSES as f64;
    let macro_avg = MacroMetrics {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    Ok(EvalReport {
        accuracy: ratio(correct, total),
        per_class,
        macro_avg,
        confusion,
        agreement: None,
    })
}
