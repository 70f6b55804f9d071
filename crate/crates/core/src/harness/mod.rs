//! Config-driven orchestration of the full audit and the command-line tool.

pub mod cli;
mod config;

pub use config::{AuditConfig, ConfigError, SplitConfig};

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bias::{
    emit_report, group_gap, AuditSummary, BiasError, ConfusionMatrix, ExplanationRecord, MatrixReport, RunMetadata,
};
use crate::dataset::{
    filter_group, load_manifest, split_by_subject, split_by_subject_stratified, DatasetError, DatasetSplit,
    EmotionLabel, GroupSelector, ManifestEntry,
};
use crate::imgproc::{
    augment, decode_pgm, decode_ppm, homogenize, preprocess_test, resize_bilinear, GrayImage, ImageError, SourceImage,
};
use crate::lime::{explain, write_explanation, LimeError, ModelPredictor};
use crate::nn::{image_to_input, save_weights, train, CnnModel, NnError, TrainReport, TrainSample};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing required setting: {0}")]
    MissingSetting(&'static str),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Lime(#[from] LimeError),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("audit invariant violated: {0}")]
    Invariant(String),
}

impl HarnessError {
    /// 1 for configuration and validation problems, 2 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::MissingSetting(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

pub(crate) fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

/// One train/test pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentCell {
    pub training: GroupSelector,
    pub testing: GroupSelector,
}

impl ExperimentCell {
    pub fn new(training: GroupSelector, testing: GroupSelector) -> Self {
        Self { training, testing }
    }

    pub fn id(&self) -> String {
        format!("{}-{}", self.training.code(), self.testing.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentPlan {
    pub cells: Vec<ExperimentCell>,
}

impl Default for ExperimentPlan {
    /// Both-trained model against all three test groups, each single-group
    /// model against its own group then the other.
    fn default() -> Self {
        use GroupSelector::*;
        let cells = [
            (Both, Both),
            (Both, FemaleOnly),
            (Both, MaleOnly),
            (FemaleOnly, FemaleOnly),
            (FemaleOnly, MaleOnly),
            (MaleOnly, MaleOnly),
            (MaleOnly, FemaleOnly),
        ];
        Self { cells: cells.into_iter().map(|(a, b)| ExperimentCell::new(a, b)).collect() }
    }
}

impl ExperimentPlan {
    pub fn ids(&self) -> Vec<String> {
        self.cells.iter().map(ExperimentCell::id).collect()
    }

    /// Training selectors in first-use order.
    pub fn trainings(&self) -> Vec<GroupSelector> {
        let mut out = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.training) {
                out.push(c.training);
            }
        }
        out
    }

    /// Same-model cell pairs compared as female minus male.
    pub fn gap_pairs(&self) -> Vec<(String, String)> {
        self.trainings()
            .into_iter()
            .filter_map(|t| {
                let f = ExperimentCell::new(t, GroupSelector::FemaleOnly);
                let m = ExperimentCell::new(t, GroupSelector::MaleOnly);
                (self.cells.contains(&f) && self.cells.contains(&m)).then(|| (f.id(), m.id()))
            })
            .collect()
    }
}

/// Decodes a binary PGM or PPM file.
pub fn load_source(path: &Path) -> Result<SourceImage, HarnessError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(b"P6") {
        Ok(SourceImage::Rgb(decode_ppm(&bytes)?))
    } else {
        Ok(SourceImage::Gray(decode_pgm(&bytes)?))
    }
}

/// Base directory against which manifest paths resolve.
pub fn manifest_base(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// SHA-256 over the manifest records and the bytes of every referenced image.
pub fn dataset_fingerprint(entries: &[ManifestEntry], base: &Path) -> Result<String, HarnessError> {
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.to_line().as_bytes());
        h.update(b"\n");
        let path = e.resolve(base);
        h.update(std::fs::read(&path).map_err(io_err(&path))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Training samples for `entries`: aligned, then augmented when `augment`
/// is set, otherwise only resized.
pub fn training_samples(
    entries: &[ManifestEntry],
    base: &Path,
    cfg: &AuditConfig,
) -> Result<Vec<TrainSample<f32>>, HarnessError> {
    let size = cfg.net.input_size;
    let mut out = Vec::new();
    for e in entries {
        let src = load_source(&e.resolve(base))?;
        let aligned = homogenize(&src, e.eye_landmarks)?;
        let variants =
            if cfg.augment_enabled { augment(&aligned, &cfg.augment, size)? } else { vec![resize_bilinear(&aligned, size, size)?] };
        out.extend(variants.iter().map(|v| TrainSample { input: image_to_input(v), label: e.label.index() }));
    }
    Ok(out)
}

pub fn train_for_group(
    entries: &[ManifestEntry],
    base: &Path,
    cfg: &AuditConfig,
) -> Result<(CnnModel<f32>, TrainReport), HarnessError> {
    let samples = training_samples(entries, base, cfg)?;
    let model = CnnModel::init(cfg.net.clone(), cfg.net_seed)?;
    Ok(train(model, &samples, &cfg.train)?)
}

/// One test prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub entry: ManifestEntry,
    pub predicted: EmotionLabel,
}

/// Classifies preprocessed test images; the confusion matrix is `None`
/// when there are no entries.
pub fn evaluate(
    model: &CnnModel<f32>,
    entries: &[ManifestEntry],
    images: &HashMap<String, GrayImage>,
) -> Result<(Option<ConfusionMatrix>, Vec<Prediction>), HarnessError> {
    let mut preds = Vec::with_capacity(entries.len());
    for e in entries {
        let img = images.get(&e.path).ok_or_else(|| HarnessError::Invariant(format!("no test image for {}", e.path)))?;
        preds.push(Prediction { entry: e.clone(), predicted: model.predict_label(img)? });
    }
    let pairs: Vec<(EmotionLabel, EmotionLabel)> = preds.iter().map(|p| (p.entry.label, p.predicted)).collect();
    let cm = if pairs.is_empty() { None } else { Some(crate::bias::confusion(&pairs)?) };
    Ok((cm, preds))
}

/// Test-time images keyed by manifest path.
pub fn preprocess_entries(
    entries: &[ManifestEntry],
    base: &Path,
    size: usize,
) -> Result<HashMap<String, GrayImage>, HarnessError> {
    let mut out = HashMap::with_capacity(entries.len());
    for e in entries {
        let src = load_source(&e.resolve(base))?;
        out.insert(e.path.clone(), preprocess_test(&src, e.eye_landmarks, size)?);
    }
    Ok(out)
}

fn file_stem_for(path: &str) -> String {
    let trimmed = path.rsplit_once('.').map_or(path, |(s, _)| s);
    trimmed.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn check_training_set(selector: GroupSelector, entries: &[ManifestEntry], split: &DatasetSplit) -> Result<(), HarnessError> {
    if let Some(bad) = entries.iter().find(|e| !selector.admits(e.group)) {
        return Err(HarnessError::Invariant(format!("{} training set contains {} entry {}", selector, bad.group, bad.path)));
    }
    let test_subjects = split.test_subjects();
    if let Some(bad) = entries.iter().find(|e| test_subjects.contains(e.subject_id.as_str())) {
        return Err(HarnessError::Invariant(format!("subject {} appears on both sides of the split", bad.subject_id)));
    }
    Ok(())
}

/// Runs the complete audit and writes every artifact under the configured
/// output directory. Returns the summary that was written.
pub fn run_audit(cfg: &AuditConfig, plan: &ExperimentPlan) -> Result<AuditSummary, HarnessError> {
    cfg.validate()?;
    let manifest = cfg.manifest.as_deref().ok_or(HarnessError::MissingSetting("audit.manifest"))?;
    let out = cfg.output.as_deref().ok_or(HarnessError::MissingSetting("audit.output"))?;
    let entries = load_manifest(manifest)?;
    let base = manifest_base(manifest);
    create_dir(out)?;
    let resolved = cfg.to_text();
    let resolved_path = out.join("resolved_config");
    std::fs::write(&resolved_path, &resolved).map_err(io_err(&resolved_path))?;

    let split = if cfg.split.stratify {
        split_by_subject_stratified(&entries, cfg.split.train_fraction, cfg.split.seed)?
    } else {
        split_by_subject(&entries, cfg.split.train_fraction, cfg.split.seed)?
    };

    let models_dir = out.join("models");
    create_dir(&models_dir)?;
    let mut models = BTreeMap::new();
    let mut train_images = BTreeMap::new();
    for selector in plan.trainings() {
        let subset = filter_group(&split.train, selector).entries;
        check_training_set(selector, &subset, &split)?;
        let (model, _report) = train_for_group(&subset, &base, cfg)?;
        save_weights(&model, models_dir.join(format!("{}.weights", selector.code())))?;
        train_images.insert(selector.code().to_string(), subset.len());
        models.insert(selector, model);
    }

    let test_images = preprocess_entries(&split.test, &base, cfg.net.input_size)?;
    let expl_dir = out.join("explanations");
    let mut matrices = Vec::new();
    let mut explanations = Vec::new();
    for cell in &plan.cells {
        let id = cell.id();
        let test = filter_group(&split.test, cell.testing).entries;
        let model = &models[&cell.training];
        let (cm, preds) = evaluate(model, &test, &test_images)?;
        let cm = cm.ok_or_else(|| HarnessError::Invariant(format!("cell {id} has no test images")))?;
        matrices.push(MatrixReport::new(&cm.labeled(&id, cell.testing), cell.training));
        if cfg.explain_misclassified && cfg.max_explanations_per_cell > 0 {
            let cell_dir = expl_dir.join(&id);
            let wrong = preds.iter().filter(|p| p.predicted != p.entry.label).take(cfg.max_explanations_per_cell);
            for p in wrong {
                create_dir(&cell_dir)?;
                let img = &test_images[&p.entry.path];
                for (tag, target) in [("pred", p.predicted), ("true", p.entry.label)] {
                    let (seg, expl) = explain(&ModelPredictor(model), img, target, &cfg.lime)?;
                    let stem = format!("{}_{tag}_{}", file_stem_for(&p.entry.path), target.name());
                    write_explanation(&cell_dir, &stem, img, &seg, &expl)?;
                    explanations.push(ExplanationRecord {
                        cell: id.clone(),
                        image: p.entry.path.clone(),
                        true_label: p.entry.label,
                        predicted: p.predicted,
                        explained: target,
                        fidelity: expl.fidelity,
                        top_superpixels: expl.top_features.iter().map(|(i, _)| *i).collect(),
                        file_stem: format!("{id}/{stem}"),
                    });
                }
            }
        }
    }

    let gaps = plan
        .gap_pairs()
        .into_iter()
        .map(|(a, b)| {
            let find = |id: &str| matrices.iter().find(|m| m.id == id).expect("cell evaluated").matrix();
            group_gap(&find(&a), &find(&b))
        })
        .collect();

    let mut seeds = BTreeMap::new();
    seeds.insert("split".to_string(), cfg.split.seed);
    seeds.insert("net".to_string(), cfg.net_seed);
    seeds.insert("train".to_string(), cfg.train.seed);
    seeds.insert("lime".to_string(), cfg.lime.seed);
    let summary = AuditSummary {
        metadata: RunMetadata {
            seeds,
            dataset_fingerprint: dataset_fingerprint(&entries, &base)?,
            config: resolved,
            train_images,
            test_subjects: split.test_subjects().into_iter().map(str::to_string).collect(),
        },
        matrices,
        gaps,
        explanations,
    };
    emit_report(&summary, out)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan_cells() {
        let plan = ExperimentPlan::default();
        assert_eq!(plan.ids(), ["B-B", "B-F", "B-M", "F-F", "F-M", "M-M", "M-F"]);
        assert_eq!(plan.trainings(), [GroupSelector::Both, GroupSelector::FemaleOnly, GroupSelector::MaleOnly]);
        assert_eq!(
            plan.gap_pairs(),
            [("B-F".into(), "B-M".into()), ("F-F".into(), "F-M".into()), ("M-F".into(), "M-M".into())]
        );
        let mut smaller = plan.clone();
        smaller.cells.pop();
        assert_eq!(smaller.ids().len(), 6);
        assert_eq!(smaller.gap_pairs().len(), 2);
    }

    #[test]
    fn stems_are_flat() {
        assert_eq!(file_stem_for("F001/angry_0.pgm"), "F001_angry_0");
        assert_eq!(file_stem_for("plain"), "plain");
    }

    #[test]
    fn training_purity_is_enforced() {
        use crate::dataset::GroupTag;
        let entry = |subject: &str, group| ManifestEntry {
            path: format!("{subject}.pgm"),
            label: EmotionLabel::Happy,
            group,
            subject_id: subject.to_string(),
            eye_landmarks: None,
        };
        let split = DatasetSplit {
            train: vec![entry("F1", GroupTag::Female), entry("M1", GroupTag::Male)],
            test: vec![entry("F2", GroupTag::Female), entry("M2", GroupTag::Male)],
            seed: 0,
            train_fraction: 0.5,
        };
        assert!(check_training_set(GroupSelector::Both, &split.train, &split).is_ok());
        assert!(check_training_set(GroupSelector::MaleOnly, &split.train[1..], &split).is_ok());
        assert!(matches!(
            check_training_set(GroupSelector::MaleOnly, &split.train, &split),
            Err(HarnessError::Invariant(_))
        ));
        let leaked = vec![entry("M2", GroupTag::Male)];
        assert!(matches!(check_training_set(GroupSelector::MaleOnly, &leaked, &split), Err(HarnessError::Invariant(_))));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::MissingSetting("audit.manifest").exit_code(), 1);
        assert_eq!(HarnessError::Invariant("x".into()).exit_code(), 2);
    }
}
