use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::MolecularStructure;
use crate::model::{Model, ModelParams};
use crate::parallel::Execution;

use super::{batch_loss_and_grad, evaluate, lr_schedule, Adam, TrainError};

/// Optimisation hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Force weight in the loss, in `[0, 1]`.
    pub beta: f64,
    pub lr: f64,
    pub decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub decay_interval: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs between validation passes.
    pub valid_every: usize,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.99,
            lr: 1e-3,
            decay_factor: 0.5,
            decay_interval: 1000,
            batch_size: 1,
            epochs: 100,
            seed: 0,
            valid_every: 10,
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(TrainError::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !(self.lr > 0.0) || !(self.decay_factor > 0.0) {
            return Err(TrainError::Config("lr and decay_factor must be positive".into()));
        }
        if self.batch_size == 0 || self.decay_interval == 0 || self.valid_every == 0 {
            return Err(TrainError::Config(
                "batch_size, decay_interval and valid_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    /// Mean loss over the epoch's batches, measured before each update.
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    /// Validation energy MAE; with pure force training the energy offset is
    /// fitted on the validation predictions first.
    pub valid_energy_mae: Option<f64>,
    pub valid_force_mae: Option<f64>,
}

/// Stateful training loop: model, optimizer and best-so-far parameters.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
    pub best: Option<(f64, ModelParams)>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let adam = Adam::new(model.params());
        Ok(Trainer {
            model,
            config,
            adam,
            epoch: 0,
            best: None,
        })
    }

    /// Continues from saved optimizer state.
    pub fn resume(model: Model, config: TrainConfig, adam: Adam, epoch: usize) -> Result<Self, TrainError> {
        let mut t = Trainer::new(model, config)?;
        if adam.m.len() != t.adam.m.len() {
            return Err(TrainError::Config("optimizer state does not match the model".into()));
        }
        t.adam = adam;
        t.epoch = epoch;
        Ok(t)
    }

    /// Checks that every structure carries the labels the loss needs.
    pub fn check_labels(&self, data: &[MolecularStructure]) -> Result<(), TrainError> {
        for (index, s) in data.iter().enumerate() {
            if s.energy.is_none() {
                return Err(TrainError::MissingEnergy { index });
            }
            if self.config.beta > 0.0 && s.forces.is_none() {
                return Err(TrainError::MissingForces {
                    index,
                    beta: self.config.beta,
                });
            }
        }
        Ok(())
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    /// Runs one epoch over `train` in a seeded order.
    pub fn train_epoch(&mut self, train: &[MolecularStructure]) -> Result<(f64, f64), TrainError> {
        let lr = lr_schedule(
            self.epoch,
            self.config.lr,
            self.config.decay_factor,
            self.config.decay_interval,
        );
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epoch as u64 + 1);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<(usize, &MolecularStructure)> = chunk.iter().map(|&k| (k, &train[k])).collect();
            let (loss, grads) = batch_loss_and_grad(&self.model, &batch, self.config.beta, self.config.execution)?;
            self.adam.update(self.model.params_mut(), &grads, lr);
            total += loss;
            batches += 1;
        }
        self.epoch += 1;
        Ok((lr, total / batches as f64))
    }

    /// Mean loss over `data` without updating anything.
    pub fn loss(&self, data: &[MolecularStructure]) -> Result<f64, TrainError> {
        let all: Vec<(usize, &MolecularStructure)> = data.iter().enumerate().collect();
        let mut total = 0.0;
        for chunk in all.chunks(64) {
            let (l, _) = batch_loss_and_grad(&self.model, chunk, self.config.beta, self.config.execution)?;
            total += l * chunk.len() as f64;
        }
        Ok(total / data.len() as f64)
    }

    /// One epoch plus, when due, a validation pass. Labels are assumed to
    /// have been checked.
    pub fn next_epoch(
        &mut self,
        train: &[MolecularStructure],
        valid: &[MolecularStructure],
    ) -> Result<EpochRecord, TrainError> {
        let (lr, train_loss) = self.train_epoch(train)?;
        let mut record = EpochRecord {
            epoch: self.epoch,
            lr,
            train_loss,
            valid_loss: None,
            valid_energy_mae: None,
            valid_force_mae: None,
        };
        let due = self.epoch.is_multiple_of(self.config.valid_every) || self.epoch == self.config.epochs;
        if due && !valid.is_empty() {
            let eval = evaluate(&self.model, valid, self.config.execution)?;
            let shift = if self.config.beta >= 1.0 { eval.self_shift() } else { 0.0 };
            let vloss = self.loss(valid)?;
            record.valid_loss = Some(vloss);
            record.valid_energy_mae = Some(eval.energy_mae(shift));
            record.valid_force_mae = eval.force_mae();
            if self.best.as_ref().is_none_or(|(b, _)| vloss < *b) {
                self.best = Some((vloss, self.model.params().clone()));
            }
        }
        Ok(record)
    }

    /// Trains until `config.epochs` epochs are complete, calling `log` once
    /// per epoch.
    pub fn run(
        &mut self,
        train: &[MolecularStructure],
        valid: &[MolecularStructure],
        mut log: impl FnMut(&EpochRecord),
    ) -> Result<Vec<EpochRecord>, TrainError> {
        if train.is_empty() {
            return Err(TrainError::Empty("training set"));
        }
        self.check_labels(train)?;
        self.check_labels(valid)?;
        let mut history = Vec::new();
        while !self.finished() {
            let record = self.next_epoch(train, valid)?;
            log(&record);
            history.push(record);
        }
        Ok(history)
    }
}
