//! Labeled, group-tagged image manifests and subject-disjoint splits.

mod synth;

pub use synth::{render_synth, synth_dataset, GroupStyle, SynthSpec};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imgproc::{EyePair, ImageError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unknown emotion label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: unknown group {group:?}")]
    UnknownGroup { line: usize, group: String },
    #[error("need at least 2 distinct subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("invalid synthetic dataset spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// The six basic emotions in canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EmotionLabel {
    Angry = 0,
    Disgust = 1,
    Fear = 2,
    Happy = 3,
    Sad = 4,
    Surprise = 5,
}

impl EmotionLabel {
    pub const COUNT: usize = 6;
    pub const ALL: [EmotionLabel; 6] = [
        EmotionLabel::Angry,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happy,
        EmotionLabel::Sad,
        EmotionLabel::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Angry => "Angry",
            EmotionLabel::Disgust => "Disgust",
            EmotionLabel::Fear => "Fear",
            EmotionLabel::Happy => "Happy",
            EmotionLabel::Sad => "Sad",
            EmotionLabel::Surprise => "Surprise",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionLabel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        Self::ALL.into_iter().find(|l| l.name().eq_ignore_ascii_case(s)).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupTag {
    Female,
    Male,
}

impl GroupTag {
    pub const ALL: [GroupTag; 2] = [GroupTag::Female, GroupTag::Male];

    pub fn name(self) -> &'static str {
        match self {
            GroupTag::Female => "female",
            GroupTag::Male => "male",
        }
    }
}

impl fmt::Display for GroupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupTag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        Self::ALL.into_iter().find(|g| g.name().eq_ignore_ascii_case(s)).ok_or(())
    }
}

/// Which groups a training or testing set admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupSelector {
    Both,
    FemaleOnly,
    MaleOnly,
}

impl GroupSelector {
    pub const ALL: [GroupSelector; 3] = [GroupSelector::Both, GroupSelector::FemaleOnly, GroupSelector::MaleOnly];

    pub fn admits(self, group: GroupTag) -> bool {
        match self {
            GroupSelector::Both => true,
            GroupSelector::FemaleOnly => group == GroupTag::Female,
            GroupSelector::MaleOnly => group == GroupTag::Male,
        }
    }

    /// One-letter code used in experiment ids ("B", "F", "M").
    pub fn code(self) -> &'static str {
        match self {
            GroupSelector::Both => "B",
            GroupSelector::FemaleOnly => "F",
            GroupSelector::MaleOnly => "M",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GroupSelector::Both => "both",
            GroupSelector::FemaleOnly => "female",
            GroupSelector::MaleOnly => "male",
        }
    }
}

impl fmt::Display for GroupSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GroupSelector {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "both" | "b" => Ok(GroupSelector::Both),
            "female" | "femaleonly" | "f" => Ok(GroupSelector::FemaleOnly),
            "male" | "maleonly" | "m" => Ok(GroupSelector::MaleOnly),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: EmotionLabel,
    pub group: GroupTag,
    pub subject_id: String,
    pub eye_landmarks: Option<EyePair>,
}

impl ManifestEntry {
    /// Path of the image, resolved against `base` when relative.
    pub fn resolve(&self, base: &Path) -> PathBuf {
        let p = Path::new(&self.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// The manifest line for this entry.
    pub fn to_line(&self) -> String {
        let mut line = format!("{},{},{},{}", self.path, self.label.name().to_lowercase(), self.group, self.subject_id);
        if let Some(((lx, ly), (rx, ry))) = self.eye_landmarks {
            line.push_str(&format!(",{lx},{ly},{rx},{ry}"));
        }
        line
    }
}

/// Parses manifest text. Line numbers in errors are 1-based.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, DatasetError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 && fields.len() != 8 {
            return Err(DatasetError::MalformedLine {
                line,
                reason: format!("expected 4 or 8 comma-separated fields, found {}", fields.len()),
            });
        }
        let path = fields[0];
        if path.is_empty() {
            return Err(DatasetError::MalformedLine { line, reason: "empty path".into() });
        }
        let label = fields[1]
            .parse::<EmotionLabel>()
            .map_err(|_| DatasetError::UnknownLabel { line, label: fields[1].to_string() })?;
        let group = fields[2]
            .parse::<GroupTag>()
            .map_err(|_| DatasetError::UnknownGroup { line, group: fields[2].to_string() })?;
        let subject_id = fields[3];
        if subject_id.is_empty() {
            return Err(DatasetError::MalformedLine { line, reason: "empty subject_id".into() });
        }
        let eye_landmarks = if fields.len() == 8 {
            let mut coords = [0.0f64; 4];
            for (c, f) in coords.iter_mut().zip(&fields[4..]) {
                *c = f.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| DatasetError::MalformedLine {
                    line,
                    reason: format!("bad landmark coordinate {f:?}"),
                })?;
            }
            if !(coords[0] < coords[2]) {
                return Err(DatasetError::MalformedLine {
                    line,
                    reason: "left-eye x must be less than right-eye x".into(),
                });
            }
            Some(((coords[0], coords[1]), (coords[2], coords[3])))
        } else {
            None
        };
        entries.push(ManifestEntry {
            path: path.to_string(),
            label,
            group,
            subject_id: subject_id.to_string(),
            eye_landmarks,
        });
    }
    Ok(entries)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, DatasetError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    parse_manifest(&text)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut text = String::from("# path,label,group,subject_id[,lx,ly,rx,ry]\n");
    for e in entries {
        text.push_str(&e.to_line());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    pub seed: u64,
    pub train_fraction: f64,
}

impl DatasetSplit {
    pub fn train_subjects(&self) -> BTreeSet<&str> {
        self.train.iter().map(|e| e.subject_id.as_str()).collect()
    }

    pub fn test_subjects(&self) -> BTreeSet<&str> {
        self.test.iter().map(|e| e.subject_id.as_str()).collect()
    }
}

/// `round(x)` with ties going up.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn distinct_subjects(entries: &[ManifestEntry]) -> Vec<String> {
    let set: BTreeSet<&str> = entries.iter().map(|e| e.subject_id.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

/// Shuffled subject ids (sorted first, so input order does not matter) and
/// the number that go to the training side.
fn shuffled_subjects(subjects: Vec<String>, train_fraction: f64, seed: u64) -> (Vec<String>, usize) {
    let mut subjects = subjects;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let n = subjects.len();
    // both sides keep at least one subject
    let n_train = (round_half_up(train_fraction * n as f64) as usize).clamp(1, n - 1);
    (subjects, n_train)
}

fn check_fraction(train_fraction: f64) -> Result<(), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    Ok(())
}

fn partition(entries: &[ManifestEntry], train_ids: &HashSet<String>, train_fraction: f64, seed: u64) -> DatasetSplit {
    let (train, test) = entries.iter().cloned().partition(|e| train_ids.contains(&e.subject_id));
    DatasetSplit { train, test, seed, train_fraction }
}

/// Subject-level split: `round(train_fraction * #subjects)` shuffled subjects
/// go to train, the rest to test. Entry order is preserved on both sides.
pub fn split_by_subject(entries: &[ManifestEntry], train_fraction: f64, seed: u64) -> Result<DatasetSplit, DatasetError> {
    check_fraction(train_fraction)?;
    let subjects = distinct_subjects(entries);
    if subjects.len() < 2 {
        return Err(DatasetError::TooFewSubjects(subjects.len()));
    }
    let (order, n_train) = shuffled_subjects(subjects, train_fraction, seed);
    let train_ids: HashSet<String> = order.into_iter().take(n_train).collect();
    Ok(partition(entries, &train_ids, train_fraction, seed))
}

/// Like [`split_by_subject`] but applied to each group separately, so both
/// groups are represented on the test side in the configured proportion.
pub fn split_by_subject_stratified(
    entries: &[ManifestEntry],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    check_fraction(train_fraction)?;
    let mut by_group: BTreeMap<GroupTag, Vec<ManifestEntry>> = BTreeMap::new();
    for e in entries {
        by_group.entry(e.group).or_default().push(e.clone());
    }
    let mut train_ids = HashSet::new();
    for (i, group_entries) in by_group.values().enumerate() {
        let subjects = distinct_subjects(group_entries);
        if subjects.len() < 2 {
            return Err(DatasetError::TooFewSubjects(subjects.len()));
        }
        let (order, n_train) = shuffled_subjects(subjects, train_fraction, seed.wrapping_add(i as u64));
        train_ids.extend(order.into_iter().take(n_train));
    }
    Ok(partition(entries, &train_ids, train_fraction, seed))
}

/// Warning-level signal: the filtered set lacks these classes entirely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmptyResult {
    pub missing: Vec<EmotionLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub entries: Vec<ManifestEntry>,
    pub empty: Option<EmptyResult>,
}

pub fn missing_classes(entries: &[ManifestEntry]) -> Vec<EmotionLabel> {
    let mut present = [false; EmotionLabel::COUNT];
    for e in entries {
        present[e.label.index()] = true;
    }
    EmotionLabel::ALL.into_iter().filter(|l| !present[l.index()]).collect()
}

/// Order-preserving subsequence of entries admitted by `selector`.
pub fn filter_group(entries: &[ManifestEntry], selector: GroupSelector) -> Filtered {
    let kept: Vec<ManifestEntry> = entries.iter().filter(|e| selector.admits(e.group)).cloned().collect();
    let missing = missing_classes(&kept);
    let empty = (!missing.is_empty()).then_some(EmptyResult { missing });
    Filtered { entries: kept, empty }
}
