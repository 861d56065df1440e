//! Classification metrics, confusion matrices, two-model agreement, the
//! oracle-selector bound and report rendering.

mod agreement;
mod metrics;
mod render;

pub use agreement::{agreement_analysis, agreement_by_class, oracle_fusion_accuracy, AgreementTable};
pub use metrics::{confusion_matrix, evaluate, f1_score, ClassMetrics, ConfusionMatrix, EvalReport, MacroMetrics};
pub use render::{parse_report, percent, render_comparison, render_report, ComparisonReport, ReportFormat};
