//! The `fairlens` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{
    create_dir, evaluate, load_source, manifest_base, preprocess_entries, run_audit, train_for_group, AuditConfig,
    ExperimentPlan, HarnessError,
};
use crate::bias::write_confusion_csv;
use crate::dataset::{
    filter_group, load_manifest, split_by_subject, split_by_subject_stratified, synth_dataset, write_manifest,
    EmotionLabel, GroupSelector, ManifestEntry,
};
use crate::imgproc::{augment, homogenize, resize_bilinear, write_pgm, SourceImage};
use crate::lime::{explain, write_explanation, ModelPredictor};
use crate::nn::{load_weights, save_weights};

#[derive(Debug, Parser)]
#[command(name = "fairlens", version, about = "Group-fairness audits for facial-expression classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Configuration file (`section.key = value` lines)
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-group dataset and its manifest
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Preprocess and augment a manifest's images into a directory
    Prepare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train one model on the training side of the configured split
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// both, female or male
        #[arg(long, default_value = "both")]
        group: String,
        /// Output weight file
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Evaluate a model on every entry of a manifest and write a confusion CSV
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "both")]
        group: String,
        /// Experiment id used for the CSV file name
        #[arg(long, default_value = "eval")]
        id: String,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Explain one image's class probability with an overlay and sidecar
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        image: PathBuf,
        /// Emotion to explain; defaults to the predicted one
        #[arg(long)]
        class: Option<String>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run the full seven-cell audit
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<AuditConfig, HarnessError> {
    match &common.config {
        Some(p) => Ok(AuditConfig::load(p)?),
        None => Ok(AuditConfig::default()),
    }
}

fn selector(s: &str) -> Result<GroupSelector, HarnessError> {
    s.parse().map_err(|_| {
        HarnessError::Config(super::ConfigError::Type { key: "--group".into(), msg: format!("unknown group `{s}`") })
    })
}

fn manifest_path(cli: Option<PathBuf>, cfg: &AuditConfig) -> Result<PathBuf, HarnessError> {
    cli.or_else(|| cfg.manifest.clone()).ok_or(HarnessError::MissingSetting("audit.manifest"))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

/// Executes a parsed command, returning a short report for stdout.
pub fn run(cli: Cli) -> Result<String, HarnessError> {
    match cli.command {
        Command::Synth { common, out } => {
            let cfg = load_config(&common)?;
            let entries = synth_dataset(&cfg.synth, cfg.synth_seed, &out)?;
            Ok(format!("wrote {} images and {}", entries.len(), out.join("manifest.csv").display()))
        }
        Command::Prepare { common, manifest, out } => {
            let cfg = load_config(&common)?;
            let manifest = manifest_path(manifest, &cfg)?;
            let entries = load_manifest(&manifest)?;
            let base = manifest_base(&manifest);
            create_dir(&out)?;
            let size = cfg.net.input_size;
            let mut written = Vec::new();
            for e in &entries {
                let aligned = homogenize(&load_source(&e.resolve(&base))?, e.eye_landmarks)?;
                let variants = if cfg.augment_enabled {
                    augment(&aligned, &cfg.augment, size)?
                } else {
                    vec![resize_bilinear(&aligned, size, size)?]
                };
                let stem = super::file_stem_for(&e.path);
                for (k, v) in variants.iter().enumerate() {
                    let name = format!("{stem}_{k:02}.pgm");
                    write_pgm(out.join(&name), v)?;
                    written.push(ManifestEntry { path: name, eye_landmarks: None, ..e.clone() });
                }
            }
            write_manifest(out.join("manifest.csv"), &written)?;
            Ok(format!("prepared {} images from {} inputs", written.len(), entries.len()))
        }
        Command::Train { common, manifest, group, out } => {
            let cfg = load_config(&common)?;
            let sel = selector(&group)?;
            let manifest = manifest_path(manifest, &cfg)?;
            let entries = load_manifest(&manifest)?;
            let split = if cfg.split.stratify {
                split_by_subject_stratified(&entries, cfg.split.train_fraction, cfg.split.seed)?
            } else {
                split_by_subject(&entries, cfg.split.train_fraction, cfg.split.seed)?
            };
            let subset = filter_group(&split.train, sel).entries;
            let (model, report) = train_for_group(&subset, &manifest_base(&manifest), &cfg)?;
            save_weights(&model, &out)?;
            let last = report.loss_history.last().copied().unwrap_or(f64::NAN);
            Ok(format!("trained on {} images, final loss {last:.4}, saved {}", subset.len(), out.display()))
        }
        Command::Evaluate { common, model, manifest, group, id, out } => {
            let cfg = load_config(&common)?;
            let sel = selector(&group)?;
            let manifest = manifest_path(manifest, &cfg)?;
            let model = load_weights(&model, &cfg.net)?;
            let entries = filter_group(&load_manifest(&manifest)?, sel).entries;
            let images = preprocess_entries(&entries, &manifest_base(&manifest), cfg.net.input_size)?;
            let (cm, _) = evaluate(&model, &entries, &images)?;
            let cm = cm.ok_or_else(|| HarnessError::Invariant("no entries to evaluate".into()))?.labeled(&id, sel);
            create_dir(&out)?;
            let path = write_confusion_csv(&cm, &out)?;
            let acc = cm.accuracy().unwrap_or(0.0) * 100.0;
            Ok(format!("accuracy {acc:.2}% over {} images, wrote {}", cm.total(), path.display()))
        }
        Command::Explain { common, model, image, class, out } => {
            let cfg = load_config(&common)?;
            let model = load_weights(&model, &cfg.net)?;
            let img = match load_source(&image)? {
                SourceImage::Gray(g) => g,
                rgb => homogenize(&rgb, None)?,
            };
            let target = match class {
                Some(c) => c.parse::<EmotionLabel>().map_err(|_| {
                    HarnessError::Config(super::ConfigError::Type { key: "--class".into(), msg: format!("unknown emotion `{c}`") })
                })?,
                None => model.predict_label(&img)?,
            };
            let (seg, expl) = explain(&ModelPredictor(&model), &img, target, &cfg.lime)?;
            create_dir(&out)?;
            let stem = format!("{}_{}", super::file_stem_for(&image.file_name().unwrap_or_default().to_string_lossy()), target.name());
            write_explanation(&out, &stem, &img, &seg, &expl)?;
            write_text(&out.join(format!("{stem}.json")), &serde_json::to_string_pretty(&expl).expect("plain data"))?;
            Ok(format!("explained {} over {} superpixels, wrote {}", target, seg.num_segments(), out.join(stem).display()))
        }
        Command::Audit { common, manifest, out } => {
            let mut cfg = load_config(&common)?;
            if manifest.is_some() {
                cfg.manifest = manifest;
            }
            if out.is_some() {
                cfg.output = out;
            }
            let summary = run_audit(&cfg, &ExperimentPlan::default())?;
            let mut report = String::new();
            for m in &summary.matrices {
                report.push_str(&format!("{} accuracy {:.2}%\n", m.id, m.accuracy.unwrap_or(0.0) * 100.0));
            }
            report.push_str(&format!("{} explanations", summary.explanations.len()));
            Ok(report)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(report) => {
            println!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
