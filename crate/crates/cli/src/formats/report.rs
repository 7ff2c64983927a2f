//! Evaluation reports as a single JSON document: the evaluation mode, one
//! entry per class keyed by class name, and the aggregate over all classes.
//! Each entry carries the raw tally and the derived scores; scores that are
//! undefined (no ground truth, box mode) serialize as `null` / are omitted.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trackmine_core::{ClassScores, MetricsReport};

use super::{read_text, write_atomic, FormatError};

/// Tally and derived scores for one class (or the aggregate).
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct ClassReport {
    /// Matched ground-truth objects.
    pub tp: u64,
    /// Predictions matching nothing.
    pub fp: u64,
    /// Identity switches.
    pub ids: u64,
    /// Ground-truth objects.
    pub gt: u64,
    /// Summed overlap of matched pairs.
    pub iou_sum: f64,
    /// MOTSA / MOTA; `null` without ground truth.
    pub accuracy: Option<f64>,
    /// sMOTSA; omitted in box mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_accuracy: Option<f64>,
    /// MOTSP / MOTP.
    pub precision: f64,
}

impl ClassReport {
    fn from_scores(scores: &ClassScores) -> Self {
        ClassReport {
            tp: scores.totals.tp,
            fp: scores.totals.fp,
            ids: scores.totals.ids,
            gt: scores.totals.gt,
            iou_sum: scores.totals.iou_sum,
            accuracy: scores.accuracy,
            soft_accuracy: scores.soft_accuracy,
            precision: scores.precision,
        }
    }
}

/// A full report document.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct ReportDoc {
    /// Evaluation mode: `"mots"` or `"mot"`.
    pub mode: String,
    /// Per-class entries keyed by class name.
    pub classes: BTreeMap<String, ClassReport>,
    /// Scores over all classes combined.
    pub aggregate: ClassReport,
}

impl ReportDoc {
    /// Renders a computed report with class ids resolved to names.
    pub fn new(mode: &str, report: &MetricsReport, class_names: &[String]) -> Self {
        let classes = report
            .classes
            .iter()
            .map(|(id, scores)| {
                let name = class_names
                    .get(id.0 as usize)
                    .cloned()
                    .unwrap_or_else(|| id.0.to_string());
                (name, ClassReport::from_scores(scores))
            })
            .collect();
        ReportDoc {
            mode: mode.to_owned(),
            classes,
            aggregate: ClassReport::from_scores(&report.aggregate),
        }
    }

    /// Serializes the document as pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

/// Writes a report document.
pub fn write_report(doc: &ReportDoc, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, doc.to_json().as_bytes())
}

/// Loads a report document.
pub fn load_report(path: &Path) -> Result<ReportDoc, FormatError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| FormatError::invalid(path, e.to_string()))
}
