//! Top-k accuracy, confusion matrices and report formatting.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tree::TreeModel;

/// Per-frame node rankings (best first) against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub id: String,
    pub rankings: Vec<Vec<usize>>,
    pub truth: Vec<usize>,
}

impl SequenceResult {
    pub fn new(id: impl Into<String>, rankings: Vec<Vec<usize>>, truth: Vec<usize>) -> Result<Self> {
        if rankings.len() != truth.len() {
            return Err(Error::Dimension {
                expected: truth.len(),
                actual: rankings.len(),
            });
        }
        Ok(Self {
            id: id.into(),
            rankings,
            truth,
        })
    }

    /// Builds rankings from per-frame distributions.
    pub fn from_distributions(id: impl Into<String>, distributions: &[Vec<f64>], truth: Vec<usize>) -> Result<Self> {
        let rankings = distributions.iter().map(|d| crate::filter::ranking(d)).collect();
        Self::new(id, rankings, truth)
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

/// Fraction of frames whose true node is among the first `k` ranked.
pub fn topk_accuracy(result: &SequenceResult, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be at least 1".into()));
    }
    if result.is_empty() {
        return Err(Error::EmptySequence);
    }
    let hits = result
        .rankings
        .iter()
        .zip(&result.truth)
        .filter(|(ranking, truth)| ranking.iter().take(k).any(|r| r == *truth))
        .count();
    Ok(hits as f64 / result.len() as f64)
}

/// `matrix[truth][predicted]` counts using each frame's top-ranked node.
pub fn confusion_matrix(result: &SequenceResult, n: usize) -> Result<Vec<Vec<u64>>> {
    if result.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut matrix = vec![vec![0u64; n]; n];
    for (ranking, &truth) in result.rankings.iter().zip(&result.truth) {
        let predicted = *ranking.first().ok_or(Error::EmptySequence)?;
        for index in [truth, predicted] {
            if index >= n {
                return Err(Error::NodeIndex { index, n });
            }
        }
        matrix[truth][predicted] += 1;
    }
    Ok(matrix)
}

/// Unweighted mean across sequences.
pub fn mean_over_sequences(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Ground truth: one node label per line, in frame order.
pub fn parse_truth(text: &str, tree: &TreeModel) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let label = l.trim();
            tree.index_of(label)
                .ok_or_else(|| Error::parse(i + 1, format!("unknown node label {label}")))
        })
        .collect()
}

pub fn format_truth(truth: &[usize], tree: &TreeModel) -> String {
    let mut out = String::new();
    for &t in truth {
        out.push_str(tree.label(t));
        out.push('\n');
    }
    out
}

pub fn load_truth(path: impl AsRef<Path>, tree: &TreeModel) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_truth(&text, tree)
}

/// One row of an ablation-style report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub sequence: String,
    pub classifier: String,
    pub bayesian: bool,
    pub branch_detector: bool,
    /// `(k, accuracy)` pairs.
    pub accuracies: Vec<(usize, f64)>,
}

impl ReportRow {
    pub fn evaluate(
        result: &SequenceResult,
        classifier: impl Into<String>,
        bayesian: bool,
        branch_detector: bool,
        ks: &[usize],
    ) -> Result<Self> {
        let accuracies = ks
            .iter()
            .map(|&k| Ok((k, topk_accuracy(result, k)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sequence: result.id.clone(),
            classifier: classifier.into(),
            bayesian,
            branch_detector,
            accuracies,
        })
    }
}

pub fn write_report_csv<W: Write>(writer: W, rows: &[ReportRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let ks: Vec<usize> = rows.first().map(|r| r.accuracies.iter().map(|a| a.0).collect()).unwrap_or_default();
    let mut header = vec![
        "sequence".to_owned(),
        "classifier".to_owned(),
        "bayesian".to_owned(),
        "branch_detector".to_owned(),
    ];
    header.extend(ks.iter().map(|k| format!("top{k}")));
    csv.write_record(&header)?;
    for row in rows {
        let mut record = vec![
            row.sequence.clone(),
            row.classifier.clone(),
            row.bayesian.to_string(),
            row.branch_detector.to_string(),
        ];
        record.extend(row.accuracies.iter().map(|(_, a)| format!("{a:.4}")));
        csv.write_record(&record)?;
    }
    csv.flush().map_err(|e| Error::io("<report writer>", e))?;
    Ok(())
}

/// Fixed-width table for terminals.
pub fn format_report_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let ks: Vec<usize> = rows.first().map(|r| r.accuracies.iter().map(|a| a.0).collect()).unwrap_or_default();
    let _ = write!(out, "{:<12} {:<14} {:<9} {:<9}", "Seq.", "Classifier", "Bayesian", "Branch");
    for k in &ks {
        let _ = write!(out, " {:>7}", format!("Top-{k}"));
    }
    out.push('\n');
    let mark = |b: bool| if b { "yes" } else { "-" };
    for row in rows {
        let _ = write!(
            out,
            "{:<12} {:<14} {:<9} {:<9}",
            row.sequence,
            row.classifier,
            mark(row.bayesian),
            mark(row.branch_detector)
        );
        for (_, a) in &row.accuracies {
            let _ = write!(out, " {a:>7.3}");
        }
        out.push('\n');
    }
    out
}

pub fn format_confusion(matrix: &[Vec<u64>], tree: &TreeModel) -> String {
    let width = tree.labels().iter().map(String::len).max().unwrap_or(3).max(5);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "truth\\pred");
    for label in tree.labels() {
        let _ = write!(out, " {label:>width$}");
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        let _ = write!(out, "{:<width$}", tree.label(i));
        for c in row {
            let _ = write!(out, " {c:>width$}");
        }
        out.push('\n');
    }
    out
}
