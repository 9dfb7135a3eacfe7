//! Feed-forward predictor that maps one CSI snapshot to one beam.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, NnError, Result};
use crate::layers::{argmax, batch_cross_entropy, Dense};
use crate::params::{prefixed, Named, NamedMut, Parameters};
use crate::scalar::Scalar;
use crate::train::{Architecture, BatchStats, Trainable};

pub const FFN_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfnConfig {
    pub num_features: usize,
    pub num_beams: usize,
    #[serde(default = "default_width")]
    pub width: usize,
}

fn default_width() -> usize {
    256
}

impl FfnConfig {
    pub fn new(num_features: usize, num_beams: usize) -> Self {
        Self { num_features, num_beams, width: default_width() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_features == 0 || self.num_beams == 0 || self.width == 0 {
            return Err(NnError::InvalidConfig("feed-forward dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// `B x F` standardized snapshots with one label each.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnBatch<T> {
    pub features: Array2<T>,
    pub labels: Vec<usize>,
}

/// Four tanh hidden layers followed by a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Ffn<T> {
    pub config: FfnConfig,
    pub hidden: [Dense<T>; FFN_DEPTH],
    pub output: Dense<T>,
}

impl<T: Scalar> Ffn<T> {
    pub fn new<R: Rng>(config: FfnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let w = config.width;
        let hidden = std::array::from_fn(|i| Dense::new(if i == 0 { config.num_features } else { w }, w, rng));
        Ok(Self { output: Dense::new(w, config.num_beams, rng), hidden, config })
    }

    pub fn zeros(config: FfnConfig) -> Self {
        let w = config.width;
        Self {
            hidden: std::array::from_fn(|i| Dense::zeros(if i == 0 { config.num_features } else { w }, w)),
            output: Dense::zeros(w, config.num_beams),
            config,
        }
    }

    /// Returns the logits and every layer's input.
    fn forward_impl(&self, x: ArrayView2<T>) -> Result<(Array2<T>, Vec<Array2<T>>)> {
        check_shape("ffn input", &[x.nrows(), self.config.num_features], x.shape())?;
        let mut inputs = Vec::with_capacity(FFN_DEPTH + 1);
        let mut a = x.to_owned();
        for layer in &self.hidden {
            let z = layer.forward(a.view())?.mapv(|v| v.tanh());
            inputs.push(a);
            a = z;
        }
        let logits = self.output.forward(a.view())?;
        inputs.push(a);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("ffn forward".into()));
        }
        Ok((logits, inputs))
    }

    pub fn logits(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.forward_impl(x)?.0)
    }

    /// One beam per row of `x`.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.rows().into_iter().map(argmax).collect())
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        match labels.iter().find(|&&l| l >= self.config.num_beams) {
            Some(&label) => Err(NnError::LabelOutOfRange { label, classes: self.config.num_beams }),
            None => Ok(()),
        }
    }

    /// Mean cross-entropy over the batch with gradients accumulated into `grads`.
    pub fn forward_backward(&self, batch: &FfnBatch<T>, grads: &mut Ffn<T>) -> Result<BatchStats> {
        self.check_labels(&batch.labels)?;
        let (logits, inputs) = self.forward_impl(batch.features.view())?;
        let (loss, correct, dz) = batch_cross_entropy(logits.view(), &batch.labels)?;
        let dz = dz * T::of(1.0 / batch.labels.len().max(1) as f64);
        let mut grad = self.output.backward(inputs[FFN_DEPTH].view(), dz.view(), &mut grads.output);
        for i in (0..FFN_DEPTH).rev() {
            let y = &inputs[i + 1];
            grad.zip_mut_with(y, |g, &a| *g = *g * (T::one() - a * a));
            grad = self.hidden[i].backward(inputs[i].view(), grad.view(), &mut grads.hidden[i]);
        }
        Ok(BatchStats { loss_sum: loss.to_f64().unwrap_or(f64::NAN), correct, count: batch.labels.len() })
    }
}

impl<T: Scalar> Parameters<T> for Ffn<T> {
    fn tensors(&self) -> Named<'_, T> {
        let mut v = Vec::new();
        for (i, layer) in self.hidden.iter().enumerate() {
            v.extend(prefixed(&format!("hidden{i}"), layer.tensors()));
        }
        v.extend(prefixed("output", self.output.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> NamedMut<'_, T> {
        let mut v = Vec::new();
        for (i, layer) in self.hidden.iter_mut().enumerate() {
            v.extend(prefixed(&format!("hidden{i}"), layer.tensors_mut()));
        }
        v.extend(prefixed("output", self.output.tensors_mut()));
        v
    }
}

impl<T: Scalar> Trainable<T> for Ffn<T> {
    type Batch = FfnBatch<T>;

    fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    fn train_batch(&self, batch: &Self::Batch, _rng: &mut ChaCha8Rng, grads: &mut Self) -> Result<BatchStats> {
        self.forward_backward(batch, grads)
    }

    fn eval_batch(&self, batch: &Self::Batch) -> Result<BatchStats> {
        self.check_labels(&batch.labels)?;
        let logits = self.logits(batch.features.view())?;
        let (loss, correct, _) = batch_cross_entropy(logits.view(), &batch.labels)?;
        Ok(BatchStats { loss_sum: loss.to_f64().unwrap_or(f64::NAN), correct, count: batch.labels.len() })
    }
}

impl<T: Scalar> Architecture<T> for Ffn<T> {
    type Config = FfnConfig;
    const ARCH: &'static str = "ffn";

    fn config(&self) -> FfnConfig {
        self.config
    }

    fn zeros_from(config: &FfnConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::zeros(*config))
    }
}
