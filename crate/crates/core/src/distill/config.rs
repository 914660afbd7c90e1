use serde::{Deserialize, Serialize};

use super::Lattice;
use crate::error::{Error, Result};

/// Step-decayed learning rate: `lr * decay^(floor(iter / interval))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr: f64,
    pub decay: f64,
    pub interval: usize,
    pub iterations: usize,
}

impl Schedule {
    pub fn new(lr: f64, decay: f64, interval: usize, iterations: usize) -> Self {
        Self {
            lr,
            decay,
            interval,
            iterations,
        }
    }

    pub fn lr_at(&self, iter: usize) -> f64 {
        self.lr * self.decay.powi((iter / self.interval.max(1)) as i32)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.lr > 0.0 && self.decay > 0.0 && self.decay <= 1.0) || self.interval == 0 {
            return Err(Error::MissingConfig(format!(
                "{what}: needs lr > 0, decay in (0, 1] and a positive interval"
            )));
        }
        Ok(())
    }
}

/// One fine-tuning stage: the network truncated at `layer` is trained on the
/// L2 loss of that layer's output alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneStage {
    /// Name of the target conv layer.
    pub layer: String,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Samples per pretraining step.
    pub batch_size: usize,
    /// Pretraining of layers without batch norm.
    pub pretrain_plain: Schedule,
    /// Pretraining of layers followed by batch norm.
    pub pretrain_bn: Schedule,
    /// Run in order, one image per step.
    pub finetune: Vec<FinetuneStage>,
    pub lattice: Lattice,
    /// Held-out loss is recorded every this many pretraining steps.
    pub checkpoint_interval: usize,
    /// Fraction of each kernel's samples held out for checkpoints.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// The VGG-16 schedules.
    fn default() -> Self {
        Self {
            batch_size: 256,
            pretrain_plain: Schedule::new(0.01, 0.1, 4000, 16_000),
            pretrain_bn: Schedule::new(0.01, 0.1, 1000, 4000),
            finetune: vec![
                FinetuneStage {
                    layer: "conv3_3".into(),
                    schedule: Schedule::new(1e-5, 0.1, 6000, 12_000),
                },
                FinetuneStage {
                    layer: "conv5_3".into(),
                    schedule: Schedule::new(1e-4, 0.1, 1024, 2048),
                },
            ],
            lattice: Lattice::default(),
            checkpoint_interval: 1000,
            holdout: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.checkpoint_interval == 0 {
            return Err(Error::MissingConfig("batch size and checkpoint interval must be positive".into()));
        }
        if self.lattice.per_row == 0 || self.lattice.row_stride == 0 {
            return Err(Error::MissingConfig("lattice counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(Error::MissingConfig("holdout must be in [0, 1)".into()));
        }
        self.pretrain_plain.validate("pretrain_plain")?;
        self.pretrain_bn.validate("pretrain_bn")?;
        for s in &self.finetune {
            s.schedule.validate(&s.layer)?;
        }
        Ok(())
    }
}
