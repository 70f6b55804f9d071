use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CnnModel, Mode, NnError, Real, Tensor};
use crate::dataset::EmotionLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.02, epochs: 50, batch_size: 4, seed: 0, shuffle: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(NnError::InvalidTrainConfig(format!("learning_rate {} must be non-negative", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::InvalidTrainConfig("epochs and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// A normalised network input and its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T> {
    pub input: Vec<T>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch (dropout active).
    pub loss_history: Vec<f64>,
    /// Classes with no training samples; the model can never learn them.
    pub missing_classes: Vec<EmotionLabel>,
    pub steps: usize,
}

/// One plain SGD update `w <- w - lr * grad`. Returns the batch loss before
/// the update.
pub fn sgd_step<T: Real>(
    model: &mut CnnModel<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    learning_rate: f64,
    mode: Mode,
) -> Result<T, NnError> {
    let (loss, grads) = model.loss_and_gradients(batch, labels, mode)?;
    let lr = T::from_f64_lossy(learning_rate);
    if lr != T::zero() {
        for (p, g) in model.parameters_mut().iter_mut().zip(&grads) {
            for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= lr * d;
            }
        }
    }
    Ok(loss)
}

/// Mini-batch SGD over `samples`. Shuffling order and dropout masks derive
/// from `cfg.seed`, so identical inputs give identical parameters.
pub fn train<T: Real>(
    mut model: CnnModel<T>,
    samples: &[TrainSample<T>],
    cfg: &TrainConfig,
) -> Result<(CnnModel<T>, TrainReport), NnError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(NnError::EmptyTrainSet);
    }
    let s = model.config().input_size;
    let len = s * s;
    if let Some(bad) = samples.iter().find(|x| x.input.len() != len) {
        return Err(NnError::ShapeMismatch { expected: vec![len], got: vec![bad.input.len()] });
    }
    let mut present = [false; EmotionLabel::COUNT];
    for x in samples {
        if x.label >= EmotionLabel::COUNT {
            return Err(NnError::LabelOutOfRange(x.label));
        }
        present[x.label] = true;
    }
    let missing_classes = EmotionLabel::ALL.into_iter().filter(|l| !present[l.index()]).collect();

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut steps = 0usize;
    for _epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut data = Vec::with_capacity(chunk.len() * len);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                data.extend_from_slice(&samples[i].input);
                labels.push(samples[i].label);
            }
            let batch = Tensor::new(vec![chunk.len(), s, s, 1], data)?;
            let dropout_seed = cfg.seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(steps as u64);
            let loss = sgd_step(&mut model, &batch, &labels, cfg.learning_rate, Mode::Training { seed: dropout_seed })?;
            epoch_loss += loss.to_f64().expect("finite") * chunk.len() as f64;
            steps += 1;
        }
        history.push(epoch_loss / samples.len() as f64);
    }
    Ok((model, TrainReport { loss_history: history, missing_classes, steps }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetConfig;
    use rand::Rng;

    fn samples(n: usize, seed: u64) -> Vec<TrainSample<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| TrainSample { input: (0..64).map(|_| rng.gen_range(0.0..1.0)).collect(), label: i % 6 })
            .collect()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let model = CnnModel::<f32>::init(NetConfig::tiny(), 1).unwrap();
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, batch_size: 4, ..Default::default() };
        let (trained, report) = train(model.clone(), &samples(10, 2), &cfg).unwrap();
        assert_eq!(trained, model);
        assert_eq!(report.loss_history.len(), 3);
        assert_eq!(report.steps, 9);
    }

    #[test]
    fn training_is_deterministic() {
        let model = CnnModel::<f32>::init(NetConfig::tiny(), 1).unwrap();
        let cfg = TrainConfig { learning_rate: 0.1, epochs: 2, batch_size: 3, seed: 9, shuffle: true };
        let data = samples(12, 3);
        let a = train(model.clone(), &data, &cfg).unwrap();
        let b = train(model, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn guards() {
        let model = CnnModel::<f32>::init(NetConfig::tiny(), 1).unwrap();
        assert!(matches!(train(model.clone(), &[], &TrainConfig::default()), Err(NnError::EmptyTrainSet)));
        let bad = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(train(model.clone(), &samples(2, 0), &bad).is_err());
        let (_, report) = train(model, &samples(2, 0), &TrainConfig { epochs: 1, ..Default::default() }).unwrap();
        assert_eq!(report.missing_classes.len(), 4);
    }
}
