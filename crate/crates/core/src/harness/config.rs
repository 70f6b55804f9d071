//! Line-based `section.key = value` configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::SynthSpec;
use crate::imgproc::AugmentConfig;
use crate::lime::{LimeParams, Replacement};
use crate::nn::{ConvSpec, NetConfig, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for `{key}`: {msg}")]
    Type { key: String, msg: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    /// Split each group's subjects separately.
    pub stratify: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 0, stratify: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub manifest: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub explain_misclassified: bool,
    pub max_explanations_per_cell: usize,
    pub split: SplitConfig,
    pub augment_enabled: bool,
    pub augment: AugmentConfig,
    pub net: NetConfig,
    pub net_seed: u64,
    pub train: TrainConfig,
    pub lime: LimeParams,
    pub synth: SynthSpec,
    pub synth_seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            output: None,
            explain_misclassified: true,
            max_explanations_per_cell: 2,
            split: SplitConfig::default(),
            augment_enabled: true,
            augment: AugmentConfig::default(),
            net: NetConfig::desk(),
            net_seed: 0,
            train: TrainConfig::default(),
            lime: LimeParams::default(),
            synth: SynthSpec::default(),
            synth_seed: 0,
        }
    }
}

fn type_err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Type { key: key.to_string(), msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| type_err(key, format!("cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(type_err(key, format!("expected a boolean, got `{v}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl AuditConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse { line, msg: format!("expected `section.key = value`, got `{content}`") })?;
            let (key, value) = (key.trim(), value.trim());
            if !key.contains('.') {
                return Err(ConfigError::Parse { line, msg: format!("key `{key}` has no section") });
            }
            if !cfg.set(key, value)? {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Applies one key; returns `false` for an unknown key.
    fn set(&mut self, key: &str, v: &str) -> Result<bool, ConfigError> {
        match key {
            "audit.manifest" => self.manifest = Some(PathBuf::from(v)),
            "audit.output" => self.output = Some(PathBuf::from(v)),
            "audit.explain_misclassified" => self.explain_misclassified = parse_bool(key, v)?,
            "audit.max_explanations_per_cell" => self.max_explanations_per_cell = parse_num(key, v)?,
            "split.train_fraction" => self.split.train_fraction = parse_num(key, v)?,
            "split.seed" => self.split.seed = parse_num(key, v)?,
            "split.stratify" => self.split.stratify = parse_bool(key, v)?,
            "augment.enabled" => self.augment_enabled = parse_bool(key, v)?,
            "augment.gamma_values" => self.augment.gamma_values = parse_list(key, v)?,
            "augment.translate_px" => self.augment.translate_px = parse_num(key, v)?,
            "augment.include_translation" => self.augment.include_translation = parse_bool(key, v)?,
            "augment.include_flip" => self.augment.include_flip = parse_bool(key, v)?,
            "net.input_size" => self.net.input_size = parse_num(key, v)?,
            "net.channels" => {
                let chans: Vec<usize> = parse_list(key, v)?;
                let kernel = self.net.conv_specs.first().map_or(3, |c| c.kernel);
                self.net.conv_specs = chans.into_iter().map(|c| ConvSpec::new(c, kernel, 1)).collect();
            }
            "net.kernel" => {
                let k = parse_num(key, v)?;
                self.net.conv_specs.iter_mut().for_each(|c| c.kernel = k);
            }
            "net.pool_after" => self.net.pool_after = parse_list(key, v)?,
            "net.fc1_units" => self.net.fc1_units = parse_num(key, v)?,
            "net.dropout_rate" => self.net.dropout_rate = parse_num(key, v)?,
            "net.seed" => self.net_seed = parse_num(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse_num(key, v)?,
            "train.epochs" => self.train.epochs = parse_num(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v)?,
            "train.seed" => self.train.seed = parse_num(key, v)?,
            "train.shuffle" => self.train.shuffle = parse_bool(key, v)?,
            "lime.num_samples" => self.lime.num_samples = parse_num(key, v)?,
            "lime.kernel_width" => self.lime.kernel_width = parse_num(key, v)?,
            "lime.ridge_lambda" => self.lime.ridge_lambda = parse_num(key, v)?,
            "lime.top_k" => self.lime.top_k = parse_num(key, v)?,
            "lime.seed" => self.lime.seed = parse_num(key, v)?,
            "lime.slic_k" => self.lime.segmentation.k = parse_num(key, v)?,
            "lime.slic_compactness" => self.lime.segmentation.compactness = parse_num(key, v)?,
            "lime.slic_iterations" => self.lime.segmentation.iterations = parse_num(key, v)?,
            "lime.replacement" => {
                self.lime.replacement = if v.eq_ignore_ascii_case("mean") {
                    Replacement::SuperpixelMean
                } else {
                    Replacement::Constant(parse_num(key, v)?)
                }
            }
            "synth.subjects_per_group" => self.synth.subjects_per_group = parse_num(key, v)?,
            "synth.images_per_emotion" => self.synth.images_per_emotion = parse_num(key, v)?,
            "synth.image_size" => self.synth.image_size = parse_num(key, v)?,
            "synth.noise" => self.synth.noise = parse_num(key, v)?,
            "synth.max_rotation_deg" => self.synth.max_rotation_deg = parse_num(key, v)?,
            "synth.with_landmarks" => self.synth.with_landmarks = parse_bool(key, v)?,
            "synth.seed" => self.synth_seed = parse_num(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.split;
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return Err(type_err("split.train_fraction", "must lie strictly between 0 and 1"));
        }
        if !(self.train.learning_rate > 0.0) || !self.train.learning_rate.is_finite() {
            return Err(type_err("train.learning_rate", "must be positive"));
        }
        self.train.validate().map_err(|e| type_err("train", e.to_string()))?;
        self.augment.validate().map_err(|e| type_err("augment", e.to_string()))?;
        self.net.validate().map_err(|e| type_err("net", e.to_string()))?;
        self.lime.validate().map_err(|e| type_err("lime", e.to_string()))?;
        if self.lime.segmentation.k < 2 {
            return Err(type_err("lime.slic_k", "must be at least 2"));
        }
        self.synth.validate().map_err(|e| type_err("synth", e.to_string()))?;
        Ok(())
    }

    /// The fully resolved configuration; [`AuditConfig::parse`] of this text
    /// yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(p) = &self.manifest {
            kv("audit.manifest", p.display().to_string());
        }
        if let Some(p) = &self.output {
            kv("audit.output", p.display().to_string());
        }
        kv("audit.explain_misclassified", self.explain_misclassified.to_string());
        kv("audit.max_explanations_per_cell", self.max_explanations_per_cell.to_string());
        kv("split.train_fraction", self.split.train_fraction.to_string());
        kv("split.seed", self.split.seed.to_string());
        kv("split.stratify", self.split.stratify.to_string());
        kv("augment.enabled", self.augment_enabled.to_string());
        kv("augment.gamma_values", join(&self.augment.gamma_values));
        kv("augment.translate_px", self.augment.translate_px.to_string());
        kv("augment.include_translation", self.augment.include_translation.to_string());
        kv("augment.include_flip", self.augment.include_flip.to_string());
        kv("net.input_size", self.net.input_size.to_string());
        kv("net.kernel", self.net.conv_specs.first().map_or(3, |c| c.kernel).to_string());
        let chans: Vec<usize> = self.net.conv_specs.iter().map(|c| c.out_channels).collect();
        kv("net.channels", join(&chans));
        kv("net.pool_after", join(&self.net.pool_after));
        kv("net.fc1_units", self.net.fc1_units.to_string());
        kv("net.dropout_rate", self.net.dropout_rate.to_string());
        kv("net.seed", self.net_seed.to_string());
        kv("train.learning_rate", self.train.learning_rate.to_string());
        kv("train.epochs", self.train.epochs.to_string());
        kv("train.batch_size", self.train.batch_size.to_string());
        kv("train.seed", self.train.seed.to_string());
        kv("train.shuffle", self.train.shuffle.to_string());
        kv("lime.num_samples", self.lime.num_samples.to_string());
        kv("lime.kernel_width", self.lime.kernel_width.to_string());
        kv("lime.ridge_lambda", self.lime.ridge_lambda.to_string());
        kv("lime.top_k", self.lime.top_k.to_string());
        kv("lime.seed", self.lime.seed.to_string());
        kv("lime.slic_k", self.lime.segmentation.k.to_string());
        kv("lime.slic_compactness", self.lime.segmentation.compactness.to_string());
        kv("lime.slic_iterations", self.lime.segmentation.iterations.to_string());
        kv(
            "lime.replacement",
            match self.lime.replacement {
                Replacement::SuperpixelMean => "mean".to_string(),
                Replacement::Constant(c) => c.to_string(),
            },
        );
        kv("synth.subjects_per_group", self.synth.subjects_per_group.to_string());
        kv("synth.images_per_emotion", self.synth.images_per_emotion.to_string());
        kv("synth.image_size", self.synth.image_size.to_string());
        kv("synth.noise", self.synth.noise.to_string());
        kv("synth.max_rotation_deg", self.synth.max_rotation_deg.to_string());
        kv("synth.with_landmarks", self.synth.with_landmarks.to_string());
        kv("synth.seed", self.synth_seed.to_string());
        s
    }
}
