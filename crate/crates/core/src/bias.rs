//! Per-group confusion matrices, misclassification tables and accuracy gaps.
//!
//! Percentages are kept in two forms: the exact `count * 100 / row_total`
//! and a two-decimal rendering rounded half-up, stored internally as an
//! integer number of hundredths so that differences of rendered values are
//! exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{EmotionLabel, GroupSelector};

const K: usize = EmotionLabel::COUNT;

/// Off-diagonal cell gaps at or above this many percentage points are
/// flagged.
pub const DEFAULT_FLAG_THRESHOLD: f64 = 25.0;

#[derive(Debug, Error)]
pub enum BiasError {
    #[error("cannot build a confusion matrix from zero predictions")]
    EmptyInput,
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed summary: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BiasError + '_ {
    move |source| BiasError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub experiment_id: String,
    pub group_scope: GroupSelector,
    /// `counts[true][predicted]`.
    pub counts: [[u64; K]; K],
}

/// Tallies `(true, predicted)` pairs.
pub fn confusion(pairs: &[(EmotionLabel, EmotionLabel)]) -> Result<ConfusionMatrix, BiasError> {
    if pairs.is_empty() {
        return Err(BiasError::EmptyInput);
    }
    let mut counts = [[0u64; K]; K];
    for &(t, p) in pairs {
        counts[t.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix::from_counts("", GroupSelector::Both, counts))
}

impl ConfusionMatrix {
    pub fn from_counts(experiment_id: &str, group_scope: GroupSelector, counts: [[u64; K]; K]) -> Self {
        Self { experiment_id: experiment_id.to_string(), group_scope, counts }
    }

    pub fn labeled(mut self, experiment_id: &str, group_scope: GroupSelector) -> Self {
        self.experiment_id = experiment_id.to_string();
        self.group_scope = group_scope;
        self
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, t: EmotionLabel) -> u64 {
        self.counts[t.index()].iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    /// Fraction of correct predictions; `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| self.correct() as f64 / n as f64)
    }

    pub fn row_normalize(&self) -> NormalizedMatrix {
        row_normalize(self)
    }
}

/// Row-percentage view of a [`ConfusionMatrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedMatrix {
    hundredths: [[i64; K]; K],
    counts: [[u64; K]; K],
    pub empty_rows: Vec<EmotionLabel>,
}

/// `100 * num / den` in hundredths of a percent, rounded half-up.
fn percent_hundredths(num: u64, den: u64) -> i64 {
    let num = num as u128 * 10_000;
    let den = den as u128;
    ((2 * num + den) / (2 * den)) as i64
}

pub fn row_normalize(cm: &ConfusionMatrix) -> NormalizedMatrix {
    let mut hundredths = [[0i64; K]; K];
    let mut empty_rows = Vec::new();
    for (r, row) in cm.counts.iter().enumerate() {
        let n: u64 = row.iter().sum();
        if n == 0 {
            empty_rows.push(EmotionLabel::ALL[r]);
            continue;
        }
        for c in 0..K {
            hundredths[r][c] = percent_hundredths(row[c], n);
        }
    }
    NormalizedMatrix { hundredths, counts: cm.counts, empty_rows }
}

impl NormalizedMatrix {
    /// Two-decimal percentage as rendered in reports.
    pub fn percent(&self, t: EmotionLabel, p: EmotionLabel) -> f64 {
        self.hundredths[t.index()][p.index()] as f64 / 100.0
    }

    pub fn hundredths(&self, t: EmotionLabel, p: EmotionLabel) -> i64 {
        self.hundredths[t.index()][p.index()]
    }

    /// Unrounded percentage; zero for empty rows.
    pub fn raw(&self, t: EmotionLabel, p: EmotionLabel) -> f64 {
        let n: u64 = self.counts[t.index()].iter().sum();
        if n == 0 {
            0.0
        } else {
            self.counts[t.index()][p.index()] as f64 * 100.0 / n as f64
        }
    }

    pub fn is_empty_row(&self, t: EmotionLabel) -> bool {
        self.empty_rows.contains(&t)
    }

    pub fn rounded_rows(&self) -> [[f64; K]; K] {
        let mut out = [[0.0; K]; K];
        for t in EmotionLabel::ALL {
            for p in EmotionLabel::ALL {
                out[t.index()][p.index()] = self.percent(t, p);
            }
        }
        out
    }

    pub fn raw_rows(&self) -> [[f64; K]; K] {
        let mut out = [[0.0; K]; K];
        for t in EmotionLabel::ALL {
            for p in EmotionLabel::ALL {
                out[t.index()][p.index()] = self.raw(t, p);
            }
        }
        out
    }
}

/// Formats hundredths as a fixed two-decimal string ("80.95", "-17.27").
pub fn format_hundredths(h: i64) -> String {
    let sign = if h < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", h.abs() / 100, h.abs() % 100)
}

/// For each true class, the predicted classes it was confused with, in
/// canonical order. Every class is present as a key.
pub fn misclassification_table(cm: &ConfusionMatrix) -> BTreeMap<EmotionLabel, Vec<EmotionLabel>> {
    EmotionLabel::ALL
        .into_iter()
        .map(|t| {
            let confused = EmotionLabel::ALL
                .into_iter()
                .filter(|&p| p != t && cm.counts[t.index()][p.index()] > 0)
                .collect();
            (t, confused)
        })
        .collect()
}

/// Difference between two matrices in one confusion cell, `a - b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGap {
    pub true_label: EmotionLabel,
    pub predicted: EmotionLabel,
    pub a_percent: f64,
    pub b_percent: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub a_id: String,
    pub b_id: String,
    /// Diagonal gap from unrounded percentages; `None` when either row is empty.
    pub per_class: Vec<Option<f64>>,
    /// Diagonal gap of the two-decimal renderings.
    pub per_class_rounded: Vec<Option<f64>>,
    /// Overall accuracy difference in percentage points.
    pub overall: Option<f64>,
    pub undefined_classes: Vec<EmotionLabel>,
    pub flag_threshold: f64,
    /// Off-diagonal cells whose rendered gap is at least the threshold in
    /// absolute value, in row-major order.
    pub flagged_cells: Vec<CellGap>,
}

impl GapReport {
    pub fn class_gap(&self, c: EmotionLabel) -> Option<f64> {
        self.per_class_rounded[c.index()]
    }

    pub fn is_flagged(&self, t: EmotionLabel, p: EmotionLabel) -> bool {
        self.flagged_cells.iter().any(|g| g.true_label == t && g.predicted == p)
    }
}

pub fn group_gap(a: &ConfusionMatrix, b: &ConfusionMatrix) -> GapReport {
    group_gap_with_threshold(a, b, DEFAULT_FLAG_THRESHOLD)
}

pub fn group_gap_with_threshold(a: &ConfusionMatrix, b: &ConfusionMatrix, threshold: f64) -> GapReport {
    let na = row_normalize(a);
    let nb = row_normalize(b);
    let mut per_class = Vec::with_capacity(K);
    let mut per_class_rounded = Vec::with_capacity(K);
    let mut undefined_classes = Vec::new();
    for c in EmotionLabel::ALL {
        if na.is_empty_row(c) || nb.is_empty_row(c) {
            undefined_classes.push(c);
            per_class.push(None);
            per_class_rounded.push(None);
        } else {
            per_class.push(Some(na.raw(c, c) - nb.raw(c, c)));
            per_class_rounded.push(Some((na.hundredths(c, c) - nb.hundredths(c, c)) as f64 / 100.0));
        }
    }
    let overall = match (a.accuracy(), b.accuracy()) {
        (Some(x), Some(y)) => Some(x * 100.0 - y * 100.0),
        _ => None,
    };
    let threshold_h = (threshold * 100.0).round() as i64;
    let mut flagged_cells = Vec::new();
    for t in EmotionLabel::ALL {
        if na.is_empty_row(t) || nb.is_empty_row(t) {
            continue;
        }
        for p in EmotionLabel::ALL {
            if p == t {
                continue;
            }
            let gap = na.hundredths(t, p) - nb.hundredths(t, p);
            if gap.abs() >= threshold_h {
                flagged_cells.push(CellGap {
                    true_label: t,
                    predicted: p,
                    a_percent: na.percent(t, p),
                    b_percent: nb.percent(t, p),
                    gap: gap as f64 / 100.0,
                });
            }
        }
    }
    GapReport {
        a_id: a.experiment_id.clone(),
        b_id: b.experiment_id.clone(),
        per_class,
        per_class_rounded,
        overall,
        undefined_classes,
        flag_threshold: threshold,
        flagged_cells,
    }
}

/// CSV rendering: a `count` block followed by a `percent` block, each with
/// canonical label order on both axes.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let norm = row_normalize(cm);
    let mut s = String::from("block,true");
    for l in EmotionLabel::ALL {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    for t in EmotionLabel::ALL {
        let _ = write!(s, "count,{t}");
        for p in EmotionLabel::ALL {
            let _ = write!(s, ",{}", cm.counts[t.index()][p.index()]);
        }
        s.push('\n');
    }
    for t in EmotionLabel::ALL {
        let _ = write!(s, "percent,{t}");
        for p in EmotionLabel::ALL {
            let _ = write!(s, ",{}", format_hundredths(norm.hundredths(t, p)));
        }
        s.push('\n');
    }
    s
}

pub fn write_confusion_csv(cm: &ConfusionMatrix, dir: &Path) -> Result<PathBuf, BiasError> {
    let path = dir.join(format!("{}_confusion.csv", cm.experiment_id));
    std::fs::write(&path, confusion_csv(cm)).map_err(io_err(&path))?;
    Ok(path)
}

/// One evaluated experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub id: String,
    pub training: GroupSelector,
    pub testing: GroupSelector,
    pub counts: [[u64; K]; K],
    pub total: u64,
    pub percentages: [[f64; K]; K],
    pub raw_percentages: [[f64; K]; K],
    pub accuracy: Option<f64>,
    pub empty_rows: Vec<EmotionLabel>,
    pub misclassified: BTreeMap<EmotionLabel, Vec<EmotionLabel>>,
}

impl MatrixReport {
    pub fn new(cm: &ConfusionMatrix, training: GroupSelector) -> Self {
        let norm = row_normalize(cm);
        Self {
            id: cm.experiment_id.clone(),
            training,
            testing: cm.group_scope,
            counts: cm.counts,
            total: cm.total(),
            percentages: norm.rounded_rows(),
            raw_percentages: norm.raw_rows(),
            accuracy: cm.accuracy(),
            empty_rows: norm.empty_rows.clone(),
            misclassified: misclassification_table(cm),
        }
    }

    pub fn matrix(&self) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(&self.id, self.testing, self.counts)
    }
}

/// A LIME overlay written for a misclassified test image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub cell: String,
    pub image: String,
    pub true_label: EmotionLabel,
    pub predicted: EmotionLabel,
    pub explained: EmotionLabel,
    pub fidelity: Option<f64>,
    pub top_superpixels: Vec<usize>,
    pub file_stem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seeds: BTreeMap<String, u64>,
    pub dataset_fingerprint: String,
    /// The fully resolved configuration in its text form.
    pub config: String,
    pub train_images: BTreeMap<String, usize>,
    pub test_subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub metadata: RunMetadata,
    pub matrices: Vec<MatrixReport>,
    pub gaps: Vec<GapReport>,
    pub explanations: Vec<ExplanationRecord>,
}

impl AuditSummary {
    pub fn to_json(&self) -> Result<String, BiasError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, BiasError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn matrix(&self, id: &str) -> Option<&MatrixReport> {
        self.matrices.iter().find(|m| m.id == id)
    }
}

/// Writes `matrices/<id>_confusion.csv` for every matrix and
/// `audit_summary.json` under `out_dir`.
pub fn emit_report(summary: &AuditSummary, out_dir: &Path) -> Result<(), BiasError> {
    let mdir = out_dir.join("matrices");
    std::fs::create_dir_all(&mdir).map_err(io_err(&mdir))?;
    for m in &summary.matrices {
        write_confusion_csv(&m.matrix(), &mdir)?;
    }
    let path = out_dir.join("audit_summary.json");
    std::fs::write(&path, summary.to_json()?).map_err(io_err(&path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use EmotionLabel::*;

    fn label() -> impl Strategy<Value = EmotionLabel> {
        (0..K).prop_map(|i| EmotionLabel::ALL[i])
    }

    #[test]
    fn tally_example() {
        let cm = confusion(&[(Angry, Angry), (Angry, Sad), (Sad, Sad)]).unwrap();
        assert_eq!(cm.counts[0][0], 1);
        assert_eq!(cm.counts[0][4], 1);
        assert_eq!(cm.counts[4][4], 1);
        assert_eq!(cm.total(), 3);
        assert!(matches!(confusion(&[]), Err(BiasError::EmptyInput)));
    }

    #[test]
    fn normalization_examples() {
        let mut counts = [[0u64; K]; K];
        counts[0] = [2, 1, 0, 0, 0, 0];
        counts[5] = [0, 0, 0, 0, 0, 21];
        let n = row_normalize(&ConfusionMatrix::from_counts("x", GroupSelector::Both, counts));
        assert_eq!(n.percent(Angry, Angry), 66.67);
        assert_eq!(n.percent(Angry, Disgust), 33.33);
        assert_eq!(n.percent(Surprise, Surprise), 100.0);
        assert_eq!(n.empty_rows, vec![Disgust, Fear, Happy, Sad]);
        assert_eq!(n.percent(Fear, Fear), 0.0);
    }

    #[test]
    fn half_up_on_exact_ties() {
        // 1/8 = 12.5%, 1/16 = 6.25%, 1/32 = 3.125% -> 3.13
        assert_eq!(percent_hundredths(1, 32), 313);
        assert_eq!(percent_hundredths(1, 16), 625);
        // 1/3 and 2/3
        assert_eq!(percent_hundredths(1, 3), 3333);
        assert_eq!(percent_hundredths(2, 3), 6667);
        assert_eq!(format_hundredths(8095), "80.95");
        assert_eq!(format_hundredths(-1727), "-17.27");
        assert_eq!(format_hundredths(5), "0.05");
    }

    #[test]
    fn csv_layout() {
        let cm = confusion(&[(Angry, Angry), (Angry, Sad), (Sad, Sad)]).unwrap().labeled("F-M", GroupSelector::MaleOnly);
        let csv = confusion_csv(&cm);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "block,true,Angry,Disgust,Fear,Happy,Sad,Surprise");
        assert_eq!(lines[1], "count,Angry,1,0,0,0,1,0");
        assert_eq!(lines[7], "percent,Angry,50.00,0.00,0.00,0.00,50.00,0.00");
        assert_eq!(lines[11], "percent,Sad,0.00,0.00,0.00,0.00,100.00,0.00");
    }

    #[test]
    fn gaps_undefined_for_empty_rows() {
        let a = confusion(&[(Angry, Angry), (Sad, Sad)]).unwrap();
        let b = confusion(&[(Angry, Sad)]).unwrap();
        let g = group_gap(&a, &b);
        assert_eq!(g.class_gap(Angry), Some(100.0));
        assert_eq!(g.class_gap(Sad), None);
        assert!(g.undefined_classes.contains(&Sad));
        assert_eq!(g.overall, Some(100.0));
    }

    proptest! {
        #[test]
        fn tally_properties(pairs in prop::collection::vec((label(), label()), 1..200), seed in any::<u64>()) {
            let cm = confusion(&pairs).unwrap();
            prop_assert_eq!(cm.total() as usize, pairs.len());
            let mut shuffled = pairs.clone();
            let n = shuffled.len();
            for i in 0..n {
                let j = (seed.wrapping_mul(i as u64 + 1) % n as u64) as usize;
                shuffled.swap(i, j);
            }
            prop_assert_eq!(confusion(&shuffled).unwrap(), cm.clone());

            let norm = row_normalize(&cm);
            for t in EmotionLabel::ALL {
                if norm.is_empty_row(t) { continue; }
                let raw: f64 = EmotionLabel::ALL.iter().map(|&p| norm.raw(t, p)).sum();
                prop_assert!((raw - 100.0).abs() < 1e-9);
                let rounded: i64 = EmotionLabel::ALL.iter().map(|&p| norm.hundredths(t, p)).sum();
                prop_assert!((rounded - 10_000).abs() <= 3);
            }

            let table = misclassification_table(&cm);
            for t in EmotionLabel::ALL {
                let brute: Vec<EmotionLabel> = EmotionLabel::ALL.into_iter()
                    .filter(|&p| p != t && pairs.iter().any(|&(a, b)| a == t && b == p))
                    .collect();
                prop_assert_eq!(&table[&t], &brute);
            }
        }

        #[test]
        fn gap_antisymmetry(a in prop::collection::vec((label(), label()), 1..80),
                            b in prop::collection::vec((label(), label()), 1..80)) {
            let (ca, cb) = (confusion(&a).unwrap(), confusion(&b).unwrap());
            let ab = group_gap(&ca, &cb);
            let ba = group_gap(&cb, &ca);
            for c in 0..K {
                prop_assert_eq!(ab.per_class[c], ba.per_class[c].map(|v| -v));
                prop_assert_eq!(ab.per_class_rounded[c], ba.per_class_rounded[c].map(|v| -v));
            }
            prop_assert_eq!(ab.overall, ba.overall.map(|v| -v));
            prop_assert_eq!(ab.flagged_cells.len(), ba.flagged_cells.len());
            let same = group_gap(&ca, &ca);
            prop_assert!(same.per_class.iter().flatten().all(|&v| v == 0.0));
            prop_assert!(same.flagged_cells.is_empty());
        }
    }
}
