//! A small framework-free CNN: five convolutions, three max-pools, two fully
//! connected layers with dropout on the first, softmax output.
//!
//! The network is generic over the scalar type so training can run in `f32`
//! while gradient checks run the identical code path in `f64`.

mod config;
pub mod gradcheck;
mod io;
mod model;
mod train;

pub use config::{ConvSpec, LayerShape, NetConfig};
pub use io::{load_weights, save_weights, WEIGHT_FORMAT_VERSION, WEIGHT_MAGIC};
pub use model::{argmax, CnnModel, Gradients, Mode};
pub use train::{sgd_step, train, TrainConfig, TrainReport, TrainSample};

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::EmotionLabel;
use crate::imgproc::GrayImage;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("label {0} out of range 0..6")]
    LabelOutOfRange(usize),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("weight file version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("weight file was saved for a different network config")]
    ConfigFingerprintMismatch,
    #[error("corrupt weight file: {0}")]
    CorruptFile(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Scalar type the network computes in.
pub trait Real: Float + FromPrimitive + NumAssign + Sum + Default + Debug + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) || n != data.len() {
            return Err(NnError::ShapeMismatch { expected: shape, got: vec![data.len()] });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::zero(); n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a tensor whose first axis is the batch.
    pub fn row(&self, i: usize) -> &[T] {
        let stride = self.data.len() / self.shape[0];
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64().expect("finite"))).collect(),
        }
    }
}

/// Normalises an image to `[0, 1]` as a network input row.
pub fn image_to_input<T: Real>(img: &GrayImage) -> Vec<T> {
    img.pixels().iter().map(|&p| T::from_f64_lossy(p as f64 / 255.0)).collect()
}

/// Stacks equally sized images into an `(n, size, size, 1)` batch.
pub fn images_to_batch<T: Real>(images: &[&GrayImage]) -> Result<Tensor<T>, NnError> {
    let first = images.first().ok_or(NnError::EmptyTrainSet)?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * w * h);
    for img in images {
        if img.width() != w || img.height() != h {
            return Err(NnError::ShapeMismatch { expected: vec![h, w], got: vec![img.height(), img.width()] });
        }
        data.extend(image_to_input::<T>(img));
    }
    Tensor::new(vec![images.len(), h, w, 1], data)
}

/// Classifies one image: argmax label (ties to the lower index) plus the
/// full probability vector.
pub fn predict<T: Real>(model: &CnnModel<T>, img: &GrayImage) -> Result<(EmotionLabel, [f64; 6]), NnError> {
    let probs = model.probabilities(img)?;
    let label = EmotionLabel::from_index(argmax(&probs)).expect("six classes");
    Ok((label, probs))
}
