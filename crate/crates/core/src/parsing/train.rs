use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PartClassifier, PixelBatch, Reduction};
use crate::error::{validation, IspError, Result};
use crate::pipeline::LrSchedule;
use crate::rng::derive_seed;
use crate::tensor::{FeatureMapSet, LabelMap};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    /// Pixels per optimizer step; 0 means one full-batch step per epoch.
    pub batch_size: usize,
    pub reduction: Reduction,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { batch_size: 64, reduction: Reduction::Mean }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub classifier: PartClassifier,
    /// Full-batch loss (under the chosen reduction) after each epoch.
    pub loss_history: Vec<f64>,
}

/// A classifier together with its optimizer state, trained a few epochs at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub classifier: PartClassifier,
    adam: Adam,
    options: TrainOptions,
}

impl Trainer {
    pub fn new(classifier: PartClassifier, options: TrainOptions) -> Self {
        let adam = Adam::new(classifier.weights().len());
        Self { classifier, adam, options }
    }

    /// Trains over `epochs` (absolute epoch indices, used for the learning rate
    /// and for the shuffle seed) and returns the loss after each.
    pub fn train_epochs(
        &mut self,
        batch: &PixelBatch,
        schedule: &LrSchedule,
        epochs: std::ops::Range<usize>,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(IspError::Degenerate("no labeled pixels to train on".into()));
        }
        if batch.c != self.classifier.c() {
            return Err(validation!("pixel dim {} != classifier dim {}", batch.c, self.classifier.c()));
        }
        if let Some(&bad) = batch.labels.iter().find(|&&l| usize::from(l) >= self.classifier.k()) {
            return Err(validation!("label {bad} out of range for K={}", self.classifier.k()));
        }
        let mut history = Vec::with_capacity(epochs.len());
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let step = match self.options.batch_size {
            0 => batch.len(),
            b => b,
        };
        for epoch in epochs {
            let lr = schedule.lr_at(epoch)?;
            if step < batch.len() {
                order.sort_unstable();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[epoch as u64])));
            }
            for chunk in order.chunks(step) {
                let (_, grad) =
                    self.classifier.loss_and_gradient_on(batch, chunk.iter().copied(), self.options.reduction);
                self.adam.step(self.classifier.weights_mut(), &grad, lr);
            }
            let loss = self.classifier.loss(batch, self.options.reduction);
            if !loss.is_finite() || self.classifier.weights().iter().any(|w| !w.is_finite()) {
                return Err(IspError::Divergence { epoch, loss });
            }
            history.push(loss);
        }
        Ok(history)
    }
}

/// Fits `clf` to the pseudo-labels with Adam for `epochs` epochs.
pub fn train_classifier(
    clf: PartClassifier,
    set: &FeatureMapSet,
    labels: &[LabelMap],
    schedule: &LrSchedule,
    epochs: usize,
    seed: u64,
    options: TrainOptions,
) -> Result<TrainOutcome> {
    if epochs == 0 {
        return Err(validation!("epochs must be >= 1"));
    }
    let batch = PixelBatch::from_maps(set, labels)?;
    let mut trainer = Trainer::new(clf, options);
    let loss_history = trainer.train_epochs(&batch, schedule, 0..epochs, seed)?;
    Ok(TrainOutcome { classifier: trainer.classifier, loss_history })
}
