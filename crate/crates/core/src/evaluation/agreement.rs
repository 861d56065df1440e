use serde::{Deserialize, Serialize};

use crate::{Error, Result, NUM_CLASSES};

/// How two classifiers' correctness overlaps on the same samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgreementTable {
    pub both_correct: usize,
    pub only_a_correct: usize,
    pub only_b_correct: usize,
    pub both_wrong: usize,
    pub total: usize,
}

impl AgreementTable {
    pub fn from_counts(both_correct: usize, only_a_correct: usize, only_b_correct: usize, both_wrong: usize) -> Self {
        Self {
            both_correct,
            only_a_correct,
            only_b_correct,
            both_wrong,
            total: both_correct + only_a_correct + only_b_correct + both_wrong,
        }
    }

    fn record(&mut self, a_ok: bool, b_ok: bool) {
        match (a_ok, b_ok) {
            (true, true) => self.both_correct += 1,
            (true, false) => self.only_a_correct += 1,
            (false, true) => self.only_b_correct += 1,
            (false, false) => self.both_wrong += 1,
        }
        self.total += 1;
    }

    /// Accuracy of a selector that always picks whichever model is right.
    pub fn oracle_accuracy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        (self.both_correct + self.only_a_correct + self.only_b_correct) as f64 / self.total as f64
    }

    pub fn accuracy_a(&self) -> f64 {
        (self.both_correct + self.only_a_correct) as f64 / self.total as f64
    }

    pub fn accuracy_b(&self) -> f64 {
        (self.both_correct + self.only_b_correct) as f64 / self.total as f64
    }
}

fn check(preds_a: &[usize], preds_b: &[usize], labels: &[usize]) -> Result<()> {
    for other in [preds_a.len(), preds_b.len()] {
        if other != labels.len() {
            return Err(Error::LengthMismatch {
                left: other,
                right: labels.len(),
            });
        }
    }
    Ok(())
}

pub fn agreement_analysis(preds_a: &[usize], preds_b: &[usize], labels: &[usize]) -> Result<AgreementTable> {
    check(preds_a, preds_b, labels)?;
    let mut table = AgreementTable::default();
    for ((&a, &b), &y) in preds_a.iter().zip(preds_b).zip(labels) {
        table.record(a == y, b == y);
    }
    Ok(table)
}

/// Agreement restricted to each true class.
pub fn agreement_by_class(
    preds_a: &[usize],
    preds_b: &[usize],
    labels: &[usize],
) -> Result<[AgreementTable; NUM_CLASSES]> {
    check(preds_a, preds_b, labels)?;
    let mut tables = [AgreementTable::default(); NUM_CLASSES];
    for ((&a, &b), &y) in preds_a.iter().zip(preds_b).zip(labels) {
        if y >= NUM_CLASSES {
            return Err(Error::Label(y));
        }
        tables[y].record(a == y, b == y);
    }
    Ok(tables)
}

pub fn oracle_fusion_accuracy(preds_a: &[usize], preds_b: &[usize], labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty);
    }
    Ok(agreement_analysis(preds_a, preds_b, labels)?.oracle_accuracy())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn identical_correct_predictions() {
        let y = [0, 1, 2, 3, 4, 5, 6];
        let t = agreement_analysis(&y, &y, &y).unwrap();
        assert_eq!(t, AgreementTable::from_counts(7, 0, 0, 0));
        let never = [1, 2, 3, 4, 5, 6, 0];
        assert_eq!(agreement_analysis(&y, &never, &y).unwrap(), AgreementTable::from_counts(0, 7, 0, 0));
        assert_eq!(oracle_fusion_accuracy(&y, &never, &y).unwrap(), 1.0);
        assert_eq!(oracle_fusion_accuracy(&never, &never, &y).unwrap(), 0.0);
    }

    #[test]
    fn reported_counts_give_reported_oracle() {
        let t = AgreementTable::from_counts(414, 128, 114, 100);
        assert_eq!(t.total, 756);
        assert_eq!(t.both_correct + t.only_a_correct + t.only_b_correct, 656);
        assert!((100.0 * t.oracle_accuracy() - 86.77).abs() <= 0.01);
    }

    #[test]
    fn length_mismatch() {
        assert!(agreement_analysis(&[0, 1], &[0], &[0, 1]).is_err());
        assert!(matches!(oracle_fusion_accuracy(&[], &[], &[]), Err(Error::Empty)));
    }

    proptest! {
        #[test]
        fn partition_and_oracle_bound(rows in prop::collection::vec((0usize..7, 0usize..7, 0usize..7), 1..80)) {
            let a: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let b: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let y: Vec<usize> = rows.iter().map(|r| r.2).collect();
            let t = agreement_analysis(&a, &b, &y).unwrap();
            prop_assert_eq!(t.both_correct + t.only_a_correct + t.only_b_correct + t.both_wrong, t.total);
            prop_assert_eq!(t.total, rows.len());
            let oracle = t.oracle_accuracy();
            prop_assert!(oracle >= t.accuracy_a() && oracle >= t.accuracy_b());
            let by_class = agreement_by_class(&a, &b, &y).unwrap();
            prop_assert_eq!(by_class.iter().map(|c| c.total).sum::<usize>(), t.total);
        }
    }
}
