use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::Serialize;

use super::{DatasetBundle, EmotionLabel, Split};
use crate::NUM_CLASSES;

/// Per-split, per-class sample counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSummary {
    pub counts: [[usize; NUM_CLASSES]; 3],
}

#[derive(Serialize)]
struct SplitCounts {
    #[serde(flatten)]
    classes: IndexMap<&'static str, usize>,
    total: usize,
}

pub fn split_summary(bundle: &DatasetBundle) -> SplitSummary {
    SplitSummary {
        counts: Split::ALL.map(|s| bundle.class_counts(s)),
    }
}

impl SplitSummary {
    pub fn split_total(&self, split: Split) -> usize {
        self.counts[split.index()].iter().sum()
    }

    pub fn count(&self, split: Split, label: EmotionLabel) -> usize {
        self.counts[split.index()][label.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut splits: IndexMap<&'static str, SplitCounts> = IndexMap::new();
        for split in Split::ALL {
            let classes = EmotionLabel::ALL
                .iter()
                .map(|l| (l.as_str(), self.count(split, *l)))
                .collect();
            splits.insert(
                split.as_str(),
                SplitCounts {
                    classes,
                    total: self.split_total(split),
                },
            );
        }
        let mut v = serde_json::to_value(splits).expect("plain counts serialize");
        v["total"] = self.total().into();
        v
    }

    /// Aligned text table, one row per class plus a total row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>7} {:>7} {:>7} {:>7}", "class", "train", "val", "test", "total");
        for label in EmotionLabel::ALL {
            let row: Vec<usize> = Split::ALL.iter().map(|s| self.count(*s, label)).collect();
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>7} {:>7} {:>7}",
                label.as_str(),
                row[0],
                row[1],
                row[2],
                row.iter().sum::<usize>()
            );
        }
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7} {:>7}",
            "total",
            self.split_total(Split::Train),
            self.split_total(Split::Val),
            self.split_total(Split::Test),
            self.total()
        );
        out
    }
}
