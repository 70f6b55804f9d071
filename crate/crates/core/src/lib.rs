//! Group-fairness auditing for facial-expression image classifiers.
//!
//! The crate covers the whole audit loop: manifest ingestion and
//! subject-disjoint splits ([`dataset`]), image preprocessing and
//! augmentation ([`imgproc`]), a small from-scratch CNN ([`nn`]), local
//! surrogate explanations over superpixels ([`lime`]), per-group confusion
//! analysis ([`bias`]) and the config-driven experiment runner ([`harness`]).

pub mod bias;
pub mod dataset;
pub mod harness;
pub mod imgproc;
pub mod lime;
pub mod nn;

pub use dataset::{EmotionLabel, GroupSelector, GroupTag, ManifestEntry};
pub use imgproc::{GrayImage, RgbImage};
