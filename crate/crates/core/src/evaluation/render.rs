use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{AgreementTable, EvalReport};
use crate::dataset::EmotionLabel;
use crate::{Error, Result, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

/// Percentage with two decimals, rounding halves up.
pub fn percent(fraction: f64) -> String {
    let hundredths = (fraction * 10_000.0 + 0.5 + 1e-9).floor();
    format!("{:.2}", hundredths / 100.0)
}

/// Two models evaluated on the same samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub a: EvalReport,
    pub b: EvalReport,
    pub agreement: AgreementTable,
    pub agreement_by_class: IndexMap<String, AgreementTable>,
    pub oracle_accuracy: f64,
}

impl ComparisonReport {
    pub fn new(
        preds_a: &[usize],
        preds_b: &[usize],
        labels: &[usize],
    ) -> Result<Self> {
        let mut a = super::evaluate(preds_a, labels)?;
        let mut b = super::evaluate(preds_b, labels)?;
        let agreement = super::agreement_analysis(preds_a, preds_b, labels)?;
        a.agreement = Some(agreement);
        b.agreement = Some(agreement);
        let by_class = super::agreement_by_class(preds_a, preds_b, labels)?;
        Ok(Self {
            a,
            b,
            agreement,
            agreement_by_class: EmotionLabel::ALL
                .iter()
                .zip(by_class)
                .map(|(l, t)| (l.as_str().to_string(), t))
                .collect(),
            oracle_accuracy: agreement.oracle_accuracy(),
        })
    }
}

fn metrics_table(out: &mut String, report: &EvalReport) {
    let _ = writeln!(out, "| Emotion | Precision | Recall | F1 | Support |");
    let _ = writeln!(out, "|---|---:|---:|---:|---:|");
    for (label, m) in EmotionLabel::ALL.iter().zip(&report.per_class) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            label.title(),
            percent(m.precision),
            percent(m.recall),
            percent(m.f1),
            m.support
        );
    }
    let support: usize = report.per_class.iter().map(|m| m.support).sum();
    let _ = writeln!(
        out,
        "| **Average** | {} | {} | {} | {} |",
        percent(report.macro_avg.precision),
        percent(report.macro_avg.recall),
        percent(report.macro_avg.f1),
        support
    );
}

fn confusion_table(out: &mut String, report: &EvalReport) {
    let _ = write!(out, "| true \\ predicted |");
    for l in EmotionLabel::ALL {
        let _ = write!(out, " {} |", l.title());
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "|---|{}", "---:|".repeat(NUM_CLASSES));
    for (l, row) in EmotionLabel::ALL.iter().zip(&report.confusion) {
        let _ = write!(out, "| {} |", l.title());
        for v in row {
            let _ = write!(out, " {v} |");
        }
        let _ = writeln!(out);
    }
}

fn agreement_table(out: &mut String, total: &AgreementTable, by_class: &IndexMap<String, AgreementTable>) {
    let _ = writeln!(out, "| Class | Both correct | Only A correct | Only B correct | Both wrong | Total |");
    let _ = writeln!(out, "|---|---:|---:|---:|---:|---:|");
    let mut row = |name: &str, t: &AgreementTable| {
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} | {} | {} |",
            t.both_correct, t.only_a_correct, t.only_b_correct, t.both_wrong, t.total
        );
    };
    for (name, t) in by_class {
        let title = name.parse::<EmotionLabel>().map(|l| l.title()).unwrap_or(name);
        row(title, t);
    }
    row("**Total**", total);
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => crate::io::to_json_pretty(report),
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "Accuracy: {}%\n", percent(report.accuracy));
            metrics_table(&mut out, report);
            let _ = writeln!(out);
            confusion_table(&mut out, report);
            if let Some(t) = &report.agreement {
                let _ = writeln!(out);
                let _ = writeln!(
                    out,
                    "Agreement: both correct {}, only A {}, only B {}, both wrong {} (total {})",
                    t.both_correct, t.only_a_correct, t.only_b_correct, t.both_wrong, t.total
                );
            }
            Ok(out)
        }
    }
}

pub fn render_comparison(report: &ComparisonReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => crate::io::to_json_pretty(report),
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "Accuracy A: {}%  Accuracy B: {}%  Oracle: {}%\n",
                percent(report.a.accuracy),
                percent(report.b.accuracy),
                percent(report.oracle_accuracy)
            );
            agreement_table(&mut out, &report.agreement, &report.agreement_by_class);
            let _ = writeln!(out, "\n## Model A\n");
            metrics_table(&mut out, &report.a);
            let _ = writeln!(out, "\n## Model B\n");
            metrics_table(&mut out, &report.b);
            Ok(out)
        }
    }
}

/// Parses a report written by [`render_report`] in JSON format.
pub fn parse_report(json: &str) -> Result<EvalReport> {
    serde_json::from_str(json).map_err(Error::from)
}
