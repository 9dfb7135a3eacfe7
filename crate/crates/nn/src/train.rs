//! Mini-batch training loop with early stopping and resumable state.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::checkpoint::Checkpoint;
use crate::error::{NnError, Result};
use crate::params::{clip_global_norm, Parameters};
use crate::scalar::Scalar;

const SHUFFLE_SALT: u64 = 0x5B0F_F1E5_0000_0001;
const DROPOUT_SALT: u64 = 0xD0D0_0D0D_0000_0002;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 64, max_epochs: 100, patience: 10, seed: 0, clip_norm: 5.0, adam: AdamConfig::default() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(NnError::InvalidConfig("patience must be at least 1".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(NnError::InvalidConfig("clip_norm must be positive".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(NnError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Loss and token accuracy accumulated over some examples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

impl BatchStats {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.count.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count.max(1) as f64
    }

    pub fn merge(&mut self, other: BatchStats) {
        self.loss_sum += other.loss_sum;
        self.correct += other.correct;
        self.count += other.count;
    }
}

/// A model the [`Trainer`] can fit.
pub trait Trainable<T: Scalar>: Parameters<T> + Clone {
    type Batch;

    /// Zero-valued gradient accumulator with this model's shapes.
    fn zeros_like(&self) -> Self;

    /// Forward and backward with dropout drawn from `rng`; accumulates the
    /// gradient of the mean loss into `grads`.
    fn train_batch(&self, batch: &Self::Batch, rng: &mut ChaCha8Rng, grads: &mut Self) -> Result<BatchStats>;

    /// Inference-mode loss and accuracy.
    fn eval_batch(&self, batch: &Self::Batch) -> Result<BatchStats>;
}

/// Indexable collection of examples that can be gathered into batches.
pub trait Examples<B> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, positions: &[usize]) -> B;
}

/// A model type that can be saved and rebuilt from a checkpoint.
pub trait Architecture<T: Scalar>: Trainable<T> {
    type Config: Serialize + DeserializeOwned + Clone;
    const ARCH: &'static str;

    fn config(&self) -> Self::Config;
    fn zeros_from(config: &Self::Config) -> Result<Self>;
}

/// Checkpoint metadata shared by every architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta<C> {
    pub arch: String,
    pub seed: u64,
    /// Hash of the feature normalization statistics the model was trained with.
    pub stats_hash: String,
    pub config: C,
}

pub fn model_checkpoint<T: Scalar, M: Architecture<T>>(model: &M, seed: u64, stats_hash: &str) -> Result<Checkpoint> {
    let meta = ModelMeta { arch: M::ARCH.to_string(), seed, stats_hash: stats_hash.to_string(), config: model.config() };
    let text = toml::to_string(&meta).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut ckpt = Checkpoint::new(text);
    ckpt.push_params("", model);
    Ok(ckpt)
}

pub fn model_from_checkpoint<T: Scalar, M: Architecture<T>>(ckpt: &Checkpoint) -> Result<(M, ModelMeta<M::Config>)> {
    let meta: ModelMeta<M::Config> =
        toml::from_str(&ckpt.metadata).map_err(|e| NnError::Checkpoint(format!("metadata: {e}")))?;
    if meta.arch != M::ARCH {
        return Err(NnError::Checkpoint(format!("expected a {} checkpoint, found {}", M::ARCH, meta.arch)));
    }
    let mut model = M::zeros_from(&meta.config)?;
    ckpt.restore("", &mut model)?;
    Ok((model, meta))
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub clip_events: usize,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,train_acc,val_acc,clip_events";

pub fn write_history<W: Write>(w: &mut W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in history {
        writeln!(
            w,
            "{},{:.10},{:.10},{:.6},{:.6},{}",
            r.epoch, r.train_loss, r.val_loss, r.train_acc, r.val_acc, r.clip_events
        )?;
    }
    Ok(())
}

/// Everything needed to continue training bit-for-bit where it stopped.
#[derive(Debug, Clone)]
pub struct TrainState<T, M> {
    pub model: M,
    pub best: M,
    pub adam: Adam<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Epochs since the validation loss last improved.
    pub stale: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateMeta<C> {
    model: ModelMeta<C>,
    epoch: usize,
    best_epoch: usize,
    best_val_loss: f64,
    stale: usize,
    adam_steps: u64,
    adam: AdamConfig,
    history: Vec<EpochRecord>,
}

impl<T: Scalar, M: Architecture<T>> TrainState<T, M> {
    pub fn to_checkpoint(&self, seed: u64, stats_hash: &str) -> Result<Checkpoint> {
        let meta = StateMeta {
            model: ModelMeta {
                arch: M::ARCH.to_string(),
                seed,
                stats_hash: stats_hash.to_string(),
                config: self.model.config(),
            },
            epoch: self.epoch,
            best_epoch: self.best_epoch,
            best_val_loss: self.best_val_loss,
            stale: self.stale,
            adam_steps: self.adam.t,
            adam: self.adam.config,
            history: self.history.clone(),
        };
        let text = toml::to_string(&meta).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let mut ckpt = Checkpoint::new(text);
        ckpt.push_params("model", &self.model);
        ckpt.push_params("best", &self.best);
        let names: Vec<String> = self.model.tensors().into_iter().map(|(n, _)| n).collect();
        for (prefix, moments) in [("adam.m", &self.adam.m), ("adam.v", &self.adam.v)] {
            for (name, m) in names.iter().zip(moments) {
                ckpt.tensors.push(crate::checkpoint::Tensor {
                    name: format!("{prefix}.{name}"),
                    shape: m.shape().to_vec(),
                    values: m.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                });
            }
        }
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, ModelMeta<M::Config>)> {
        let meta: StateMeta<M::Config> =
            toml::from_str(&ckpt.metadata).map_err(|e| NnError::Checkpoint(format!("training state metadata: {e}")))?;
        if meta.model.arch != M::ARCH {
            return Err(NnError::Checkpoint(format!("expected a {} state, found {}", M::ARCH, meta.model.arch)));
        }
        let mut model = M::zeros_from(&meta.model.config)?;
        ckpt.restore("model", &mut model)?;
        let mut best = M::zeros_from(&meta.model.config)?;
        ckpt.restore("best", &mut best)?;
        let mut adam = Adam::new(meta.adam, &model);
        adam.t = meta.adam_steps;
        let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
        for (prefix, moments) in [("adam.m", &mut adam.m), ("adam.v", &mut adam.v)] {
            for (name, m) in names.iter().zip(moments.iter_mut()) {
                let full = format!("{prefix}.{name}");
                let stored = ckpt.get(&full).ok_or_else(|| NnError::Checkpoint(format!("missing tensor {full}")))?;
                if stored.shape != m.shape() {
                    return Err(NnError::ShapeMismatch {
                        context: full,
                        expected: m.shape().to_vec(),
                        actual: stored.shape.clone(),
                    });
                }
                for (dst, &src) in m.iter_mut().zip(&stored.values) {
                    *dst = T::of(src);
                }
            }
        }
        let state = Self {
            model,
            best,
            adam,
            epoch: meta.epoch,
            best_epoch: meta.best_epoch,
            best_val_loss: meta.best_val_loss,
            stale: meta.stale,
            history: meta.history,
        };
        Ok((state, meta.model))
    }
}

/// Result of [`Trainer::fit`]; `model` is the best-validation snapshot.
#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

pub struct Trainer<T, M> {
    config: TrainConfig,
    state: TrainState<T, M>,
    grads: M,
}

impl<T: Scalar, M: Trainable<T>> Trainer<T, M> {
    pub fn new(model: M, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = TrainState {
            adam: Adam::new(config.adam, &model),
            best: model.clone(),
            model,
            epoch: 0,
            best_epoch: 0,
            best_val_loss: f64::INFINITY,
            stale: 0,
            history: Vec::new(),
        };
        Self::resume(state, config)
    }

    pub fn resume(state: TrainState<T, M>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let grads = state.model.zeros_like();
        Ok(Self { config, state, grads })
    }

    pub fn state(&self) -> &TrainState<T, M> {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// True once the epoch budget is spent or patience has run out.
    pub fn finished(&self) -> bool {
        self.state.epoch >= self.config.max_epochs || self.state.stale >= self.config.patience
    }

    /// Order in which training examples are visited during `epoch` (1-based).
    pub fn epoch_order(&self, epoch: usize, len: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ SHUFFLE_SALT);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        order
    }

    pub fn run_epoch<E: Examples<M::Batch> + ?Sized, V: Examples<M::Batch> + ?Sized>(
        &mut self,
        train: &E,
        val: &V,
    ) -> Result<EpochRecord> {
        if train.is_empty() || val.is_empty() {
            return Err(NnError::InvalidConfig("training and validation sets must be non-empty".into()));
        }
        let epoch = self.state.epoch + 1;
        let order = self.epoch_order(epoch, train.len());
        let mut stats = BatchStats::default();
        let mut clip_events = 0;
        for (index, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch = train.batch(chunk);
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ DROPOUT_SALT);
            rng.set_stream(((epoch as u64) << 32) | index as u64);
            self.grads.fill_zero();
            let param_norm = || self.state.model.global_norm().to_f64().unwrap_or(f64::NAN);
            let batch_stats = match self.state.model.train_batch(&batch, &mut rng, &mut self.grads) {
                Err(NnError::NonFinite(_)) => {
                    return Err(NnError::NonFiniteLoss { epoch, batch: index, param_norm: param_norm() })
                }
                other => other?,
            };
            if !batch_stats.mean_loss().is_finite() {
                return Err(NnError::NonFiniteLoss { epoch, batch: index, param_norm: param_norm() });
            }
            let (norm, clipped) = clip_global_norm(&mut self.grads, T::of(self.config.clip_norm));
            if !norm.is_finite() {
                return Err(NnError::NonFiniteLoss { epoch, batch: index, param_norm: param_norm() });
            }
            clip_events += usize::from(clipped);
            self.state.adam.step(&mut self.state.model, &self.grads)?;
            stats.merge(batch_stats);
        }
        let val_stats = evaluate(&self.state.model, val, self.config.batch_size)?;
        if !val_stats.mean_loss().is_finite() {
            let param_norm = self.state.model.global_norm().to_f64().unwrap_or(f64::NAN);
            return Err(NnError::NonFiniteLoss { epoch, batch: usize::MAX, param_norm });
        }
        let record = EpochRecord {
            epoch,
            train_loss: stats.mean_loss(),
            val_loss: val_stats.mean_loss(),
            train_acc: stats.accuracy(),
            val_acc: val_stats.accuracy(),
            clip_events,
        };
        let s = &mut self.state;
        s.epoch = epoch;
        if record.val_loss < s.best_val_loss {
            s.best_val_loss = record.val_loss;
            s.best_epoch = epoch;
            s.best = s.model.clone();
            s.stale = 0;
        } else {
            s.stale += 1;
        }
        s.history.push(record);
        Ok(record)
    }

    /// Trains until [`Trainer::finished`], calling `on_epoch` after each
    /// epoch (e.g. to persist the state).
    pub fn fit<E, V, F>(mut self, train: &E, val: &V, mut on_epoch: F) -> Result<TrainOutcome<M>>
    where
        E: Examples<M::Batch> + ?Sized,
        V: Examples<M::Batch> + ?Sized,
        F: FnMut(&EpochRecord, &TrainState<T, M>) -> Result<()>,
    {
        while !self.finished() {
            let record = self.run_epoch(train, val)?;
            on_epoch(&record, &self.state)?;
        }
        Ok(self.into_outcome())
    }

    pub fn into_outcome(self) -> TrainOutcome<M> {
        let stopped_early = self.state.stale >= self.config.patience && self.state.epoch < self.config.max_epochs;
        TrainOutcome {
            model: self.state.best,
            history: self.state.history,
            best_epoch: self.state.best_epoch,
            stopped_early,
        }
    }
}

/// Inference-mode loss and accuracy over all of `examples`.
pub fn evaluate<T: Scalar, M: Trainable<T>, E: Examples<M::Batch> + ?Sized>(
    model: &M,
    examples: &E,
    batch_size: usize,
) -> Result<BatchStats> {
    let mut stats = BatchStats::default();
    let positions: Vec<usize> = (0..examples.len()).collect();
    for chunk in positions.chunks(batch_size.max(1)) {
        stats.merge(model.eval_batch(&examples.batch(chunk))?);
    }
    Ok(stats)
}
