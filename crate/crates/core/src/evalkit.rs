//! Confusion matrices, per-label metrics, per-developer reports and their
//! cross-developer aggregation.
//!
//! Undefined precision or recall (zero denominator) is 0, and macro values
//! are the unweighted mean over the three labels whatever their support.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReadabilityLabel;
use crate::generalist::{Method, PredictionRun};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("truth has {truth} labels but predictions has {predictions}")]
    LengthMismatch { truth: usize, predictions: usize },
    #[error("no reports to aggregate")]
    Empty,
    #[error("reports come from different run configurations ({0} and {1})")]
    MixedConfigurations(String, String),
    #[error("developer {0} appears more than once")]
    DuplicateDeveloper(String),
}

/// Rows are truth labels, columns predicted labels, both in label order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, label: ReadabilityLabel) -> u64 {
        self.counts[label.index()].iter().sum()
    }

    pub fn column_total(&self, label: ReadabilityLabel) -> u64 {
        self.counts.iter().map(|r| r[label.index()]).sum()
    }
}

pub fn confusion(truth: &[ReadabilityLabel], predictions: &[ReadabilityLabel]) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predictions.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            predictions: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(predictions) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn label_metrics(cm: &ConfusionMatrix, label: ReadabilityLabel) -> LabelMetrics {
    let tp = cm.counts[label.index()][label.index()];
    let precision = ratio(tp, cm.column_total(label));
    let recall = ratio(tp, cm.row_total(label));
    LabelMetrics {
        precision,
        recall,
        f1: harmonic(precision, recall),
        support: cm.row_total(label),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerLabel {
    #[serde(rename = "Unreadable")]
    pub unreadable: LabelMetrics,
    #[serde(rename = "Neutral")]
    pub neutral: LabelMetrics,
    #[serde(rename = "Readable")]
    pub readable: LabelMetrics,
}

impl PerLabel {
    pub fn get(&self, label: ReadabilityLabel) -> &LabelMetrics {
        match label {
            ReadabilityLabel::Unreadable => &self.unreadable,
            ReadabilityLabel::Neutral => &self.neutral,
            ReadabilityLabel::Readable => &self.readable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeveloperReport {
    pub developer_id: String,
    pub dataset_id: String,
    pub method: Method,
    pub config_digest: String,
    pub confusion: ConfusionMatrix,
    pub per_label: PerLabel,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub abstention_count: usize,
}

impl DeveloperReport {
    pub fn from_confusion(
        developer_id: &str,
        dataset_id: &str,
        method: Method,
        config_digest: &str,
        cm: ConfusionMatrix,
        abstention_count: usize,
    ) -> Self {
        let m = |l| label_metrics(&cm, l);
        let per_label = PerLabel {
            unreadable: m(ReadabilityLabel::Unreadable),
            neutral: m(ReadabilityLabel::Neutral),
            readable: m(ReadabilityLabel::Readable),
        };
        let mean =
            |f: fn(&LabelMetrics) -> f64| ReadabilityLabel::ALL.iter().map(|l| f(per_label.get(*l))).sum::<f64>() / 3.0;
        DeveloperReport {
            developer_id: developer_id.to_string(),
            dataset_id: dataset_id.to_string(),
            method,
            config_digest: config_digest.to_string(),
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            accuracy: ratio(cm.trace(), cm.total()),
            confusion: cm,
            per_label,
            abstention_count,
        }
    }

    /// Scores the run's non-abstained predictions.
    pub fn from_run(run: &PredictionRun) -> Self {
        let (truth, pred) = run.scored_pairs();
        let cm = confusion(&truth, &pred).expect("scored pairs are aligned");
        Self::from_confusion(
            &run.developer_id,
            &run.dataset_id,
            run.method,
            &run.config_digest,
            cm,
            run.abstentions.len(),
        )
    }

    /// The metric cells only, for comparing reports across methods.
    pub fn cells(&self) -> Vec<f64> {
        let mut v: Vec<f64> = ReadabilityLabel::ALL
            .iter()
            .flat_map(|l| {
                let m = self.per_label.get(*l);
                [m.precision, m.recall, m.f1]
            })
            .collect();
        v.extend([self.macro_precision, self.macro_recall, self.macro_f1, self.accuracy]);
        v
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Mean over developers of each metric cell, laid out as rows Unreadable,
/// Neutral, Readable, Average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub config_digest: String,
    pub developers: usize,
    pub rows: Vec<AggregateRow>,
}

impl AggregateTable {
    pub fn row(&self, label: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,precision,recall,f1\n");
        for r in &self.rows {
            writeln!(out, "{},{:.6},{:.6},{:.6}", r.label, r.precision, r.recall, r.f1).expect("string write");
        }
        out
    }
}

/// Sum in a fixed order so the result does not depend on input order.
fn ordered_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn aggregate_developers(reports: &[DeveloperReport]) -> Result<AggregateTable, EvalError> {
    let first = reports.first().ok_or(EvalError::Empty)?;
    let mut seen = BTreeSet::new();
    for r in reports {
        if r.config_digest != first.config_digest {
            return Err(EvalError::MixedConfigurations(
                first.config_digest.clone(),
                r.config_digest.clone(),
            ));
        }
        if !seen.insert(r.developer_id.as_str()) {
            return Err(EvalError::DuplicateDeveloper(r.developer_id.clone()));
        }
    }
    let mean_of = |f: &dyn Fn(&DeveloperReport) -> f64| ordered_mean(reports.iter().map(f).collect());
    let mut rows: Vec<AggregateRow> = ReadabilityLabel::ALL
        .iter()
        .map(|&l| AggregateRow {
            label: l.word().to_string(),
            precision: mean_of(&|r| r.per_label.get(l).precision),
            recall: mean_of(&|r| r.per_label.get(l).recall),
            f1: mean_of(&|r| r.per_label.get(l).f1),
        })
        .collect();
    rows.push(AggregateRow {
        label: "Average".to_string(),
        precision: mean_of(&|r| r.macro_precision),
        recall: mean_of(&|r| r.macro_recall),
        f1: mean_of(&|r| r.macro_f1),
    });
    Ok(AggregateTable {
        config_digest: first.config_digest.clone(),
        developers: reports.len(),
        rows,
    })
}

/// `(developer_id, f1)` for `label`, in input order.
pub fn export_f1_distribution(
    reports: &[DeveloperReport],
    label: ReadabilityLabel,
) -> Result<Vec<(String, f64)>, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(reports
        .iter()
        .map(|r| (r.developer_id.clone(), r.per_label.get(label).f1))
        .collect())
}

pub fn f1_distribution_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("developer_id,f1\n");
    for (d, f1) in rows {
        writeln!(out, "{d},{f1:.6}").expect("string write");
    }
    out
}
