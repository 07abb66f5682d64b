//! Mini-batch gradient descent for [`AttentionClassifier`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use super::model::{bce_loss, decide, AttentionClassifier};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,val_loss,val_acc";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Mean loss and accuracy (threshold 0.5) over `samples`.
pub fn evaluate(model: &AttentionClassifier, samples: &[Sample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in samples {
        let p = model.probability(&s.features)?;
        loss += bce_loss(f64::from(p), s.label);
        correct += usize::from(decide(p, 0.5) == s.label);
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains attention and head jointly. Batch order is reshuffled every epoch
/// from a stream derived from `config.seed` and the epoch index, so the
/// result is a pure function of the inputs.
pub fn train(
    mut model: AttentionClassifier,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
) -> Result<(AttentionClassifier, TrainHistory)> {
    config.validate()?;
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((model, history));
    }
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    for s in train_set.iter().chain(val_set) {
        model.check_input(&s.features)?;
    }

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng_from_seed(derive_seed(config.seed, &[epoch as u64])));
        for chunk in order.chunks(config.batch_size) {
            let (loss, grads) = model.loss_and_grads(chunk.iter().map(|&i| &train_set[i]))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss diverged in epoch {}", epoch + 1)));
            }
            model.apply_gradients(&grads, config.learning_rate)?;
        }
        let (train_loss, train_accuracy) = evaluate(&model, train_set)?;
        let (val_loss, val_accuracy) = evaluate(&model, val_set)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::Numeric(format!("loss diverged in epoch {}", epoch + 1)));
        }
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }
    Ok((model, history))
}
