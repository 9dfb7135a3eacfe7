//! Encoder-decoder beam sequence predictor.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, NnError, Result};
use crate::layers::{
    argmax, batch_cross_entropy, softmax_cross_entropy, Attention, AttentionMemory, AttentionSeqCache, Dense, Dropout,
    DropoutMask, Embedding, Lstm, LstmSeqCache, LstmState,
};
use crate::params::{prefixed, Named, NamedMut, Parameters};
use crate::scalar::Scalar;
use crate::train::{BatchStats, Trainable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seq2SeqConfig {
    /// Features per input slot (antennas of the source array).
    pub num_features: usize,
    pub input_len: usize,
    pub output_len: usize,
    pub num_beams: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Width of the dense layer in front of the encoder.
    #[serde(default = "default_hidden")]
    pub input_width: usize,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_hidden() -> usize {
    256
}

fn default_embed() -> usize {
    100
}

fn default_dropout() -> f64 {
    0.2
}

impl Seq2SeqConfig {
    pub fn new(num_features: usize, input_len: usize, output_len: usize, num_beams: usize) -> Self {
        Self {
            num_features,
            input_len,
            output_len,
            num_beams,
            hidden: default_hidden(),
            input_width: default_hidden(),
            embed_dim: default_embed(),
            dropout: default_dropout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_features", self.num_features),
            ("input_len", self.input_len),
            ("output_len", self.output_len),
            ("num_beams", self.num_beams),
            ("hidden", self.hidden),
            ("input_width", self.input_width),
            ("embed_dim", self.embed_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(NnError::InvalidConfig(format!("{name} must be positive")));
        }
        Dropout::new(self.dropout)?;
        Ok(())
    }

    /// Decoder vocabulary: every beam plus the start token.
    pub fn vocab(&self) -> usize {
        self.num_beams + 1
    }
}

/// A batch of windows: standardized features `B x T x F` and target beams `B x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqBatch<T> {
    pub features: Array3<T>,
    pub targets: Array2<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq<T> {
    pub config: Seq2SeqConfig,
    pub input: Dense<T>,
    pub encoder: [Lstm<T>; 2],
    pub embedding: Embedding<T>,
    pub decoder: [Lstm<T>; 2],
    pub attention: Attention<T>,
    pub output: Dense<T>,
}

/// Encoder result: the top-layer state sequence (with attention keys) and
/// each layer's final state.
#[derive(Debug, Clone)]
pub struct Encoded<T> {
    pub memory: AttentionMemory<T>,
    pub finals: [LstmState<T>; 2],
}

struct EncoderCache<T> {
    /// Time-major inputs flattened to `(T*B) x F`.
    x: Array2<T>,
    mask_in: DropoutMask<T>,
    lstm0: LstmSeqCache<T>,
    mask_mid: DropoutMask<T>,
    lstm1: LstmSeqCache<T>,
}

struct DecoderCache<T> {
    /// Time-major input tokens, `K*B`.
    tokens: Vec<usize>,
    lstm0: LstmSeqCache<T>,
    mask_mid: DropoutMask<T>,
    lstm1: LstmSeqCache<T>,
    attention: AttentionSeqCache<T>,
    /// `(K*B) x H`
    attentional: Array2<T>,
}

impl<T: Scalar> Seq2Seq<T> {
    pub fn new<R: Rng>(config: Seq2SeqConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        Ok(Self {
            input: Dense::new(c.num_features, c.input_width, rng),
            encoder: [Lstm::new(c.input_width, c.hidden, rng), Lstm::new(c.hidden, c.hidden, rng)],
            embedding: Embedding::new(c.vocab(), c.embed_dim, rng),
            decoder: [Lstm::new(c.embed_dim, c.hidden, rng), Lstm::new(c.hidden, c.hidden, rng)],
            attention: Attention::new(c.hidden, rng),
            output: Dense::new(c.hidden, c.num_beams, rng),
            config,
        })
    }

    /// All parameters zero; also the gradient accumulator shape.
    pub fn zeros(config: Seq2SeqConfig) -> Self {
        let c = &config;
        Self {
            input: Dense::zeros(c.num_features, c.input_width),
            encoder: [Lstm::zeros(c.input_width, c.hidden), Lstm::zeros(c.hidden, c.hidden)],
            embedding: Embedding::zeros(c.vocab(), c.embed_dim),
            decoder: [Lstm::zeros(c.embed_dim, c.hidden), Lstm::zeros(c.hidden, c.hidden)],
            attention: Attention::zeros(c.hidden),
            output: Dense::zeros(c.hidden, c.num_beams),
            config,
        }
    }

    pub fn start_token(&self) -> usize {
        self.config.num_beams
    }

    fn dropout(&self) -> Dropout {
        Dropout::new(self.config.dropout).expect("validated at construction")
    }

    fn check_features(&self, features: &ArrayView3<T>) -> Result<()> {
        let (b, t, f) = features.dim();
        if t != self.config.input_len {
            return Err(NnError::SequenceLength { expected: self.config.input_len, actual: t });
        }
        check_shape("encoder features", &[b, t, self.config.num_features], &[b, t, f])
    }

    /// Runs the encoder in inference mode.
    pub fn encode(&self, features: ArrayView3<T>) -> Result<Encoded<T>> {
        Ok(self.encode_impl(features, None)?.0)
    }

    fn encode_impl(&self, features: ArrayView3<T>, mut rng: Option<&mut ChaCha8Rng>) -> Result<(Encoded<T>, EncoderCache<T>)> {
        self.check_features(&features)?;
        let (b, t, f) = features.dim();
        let dropout = self.dropout();
        let x = features.permuted_axes([1, 0, 2]).as_standard_layout().into_shape_with_order((t * b, f)).expect("contiguous").into_owned();
        let z = self.input.forward(x.view())?;
        let (z, mask_in) = apply_dropout(&dropout, z, rng.as_deref_mut());
        let z = z.into_shape_with_order((t, b, self.config.input_width)).expect("contiguous");
        let zero = LstmState::zeros(b, self.config.hidden);
        let (h0, s0, lstm0) = self.encoder[0].forward_sequence(z.view(), &zero)?;
        let (mid, mask_mid) = apply_dropout_3d(&dropout, h0, rng.as_deref_mut());
        let (h1, s1, lstm1) = self.encoder[1].forward_sequence(mid.view(), &zero)?;
        let states = h1.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
        let memory = self.attention.memory(states)?;
        let cache = EncoderCache { x, mask_in, lstm0, mask_mid, lstm1 };
        Ok((Encoded { memory, finals: [s0, s1] }, cache))
    }

    /// Teacher-forced decoder over all steps at once. Logits are time-major
    /// and flattened, `(K*B) x X`.
    fn decode_teacher_impl(
        &self,
        encoded: &Encoded<T>,
        targets: ArrayView2<usize>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<T>, DecoderCache<T>)> {
        let b = encoded.memory.states.dim().0;
        self.check_targets(&targets, b)?;
        let k_len = self.config.output_len;
        let tokens: Vec<usize> = (0..k_len).flat_map(|k| self.teacher_tokens(&targets, k)).collect();
        let e = self.embedding.forward(&tokens)?.into_shape_with_order((k_len, b, self.config.embed_dim)).expect("contiguous");
        let (h0, _, lstm0) = self.decoder[0].forward_sequence(e.view(), &encoded.finals[0])?;
        let (mid, mask_mid) = apply_dropout_3d(&self.dropout(), h0, rng);
        let (h1, _, lstm1) = self.decoder[1].forward_sequence(mid.view(), &encoded.finals[1])?;
        let (att, attention) = self.attention.forward_all(h1.view(), &encoded.memory)?;
        let attentional = att.into_shape_with_order((k_len * b, self.config.hidden)).expect("contiguous");
        let logits = self.output.forward(attentional.view())?;
        Ok((logits, DecoderCache { tokens, lstm0, mask_mid, lstm1, attention, attentional }))
    }

    fn decode_step(
        &self,
        tokens: Vec<usize>,
        states: &[LstmState<T>; 2],
        memory: &AttentionMemory<T>,
    ) -> Result<(Array2<T>, [LstmState<T>; 2])> {
        let e = self.embedding.forward(&tokens)?;
        let (n0, _) = self.decoder[0].step(e.view(), &states[0])?;
        let (n1, _) = self.decoder[1].step(n0.h.view(), &states[1])?;
        let (att, _) = self.attention.step(n1.h.view(), memory)?;
        let logits = self.output.forward(att.attentional.view())?;
        Ok((logits, [n0, n1]))
    }

    fn check_targets(&self, targets: &ArrayView2<usize>, batch: usize) -> Result<()> {
        check_shape("decoder targets", &[batch, self.config.output_len], targets.shape())?;
        match targets.iter().find(|&&l| l >= self.config.num_beams) {
            Some(&label) => Err(NnError::LabelOutOfRange { label, classes: self.config.num_beams }),
            None => Ok(()),
        }
    }

    fn teacher_tokens(&self, targets: &ArrayView2<usize>, k: usize) -> Vec<usize> {
        if k == 0 {
            vec![self.start_token(); targets.nrows()]
        } else {
            targets.column(k - 1).to_vec()
        }
    }

    /// Teacher-forced decoding in inference mode. Returns logits `B x K x X`.
    pub fn decode_teacher_forced(&self, encoded: &Encoded<T>, targets: ArrayView2<usize>) -> Result<Array3<T>> {
        let b = encoded.memory.states.dim().0;
        let (logits, _) = self.decode_teacher_impl(encoded, targets, None)?;
        let logits = logits.into_shape_with_order((self.config.output_len, b, self.config.num_beams)).expect("contiguous");
        Ok(logits.permuted_axes([1, 0, 2]).as_standard_layout().into_owned())
    }

    /// Teacher-forced decoding one step at a time through the same cells
    /// used by greedy decoding. Returns logits `B x K x X`.
    pub fn decode_teacher_forced_stepwise(&self, encoded: &Encoded<T>, targets: ArrayView2<usize>) -> Result<Array3<T>> {
        let b = encoded.memory.states.dim().0;
        self.check_targets(&targets, b)?;
        let k_len = self.config.output_len;
        let mut logits = Array3::zeros((b, k_len, self.config.num_beams));
        let mut states = encoded.finals.clone();
        for k in 0..k_len {
            let (z, next) = self.decode_step(self.teacher_tokens(&targets, k), &states, &encoded.memory)?;
            logits.index_axis_mut(Axis(1), k).assign(&z);
            states = next;
        }
        Ok(logits)
    }

    /// Greedy autoregressive decoding, `B x K` beam indices.
    pub fn decode_greedy(&self, encoded: &Encoded<T>) -> Result<Array2<usize>> {
        let b = encoded.memory.states.dim().0;
        let k_len = self.config.output_len;
        let mut out = Array2::zeros((b, k_len));
        let mut states = encoded.finals.clone();
        let mut tokens = vec![self.start_token(); b];
        for k in 0..k_len {
            let (z, next) = self.decode_step(tokens, &states, &encoded.memory)?;
            tokens = z.rows().into_iter().map(argmax).collect();
            for (i, &tok) in tokens.iter().enumerate() {
                out[[i, k]] = tok;
            }
            states = next;
        }
        Ok(out)
    }

    /// Encodes then decodes greedily.
    pub fn predict(&self, features: ArrayView3<T>) -> Result<Array2<usize>> {
        self.decode_greedy(&self.encode(features)?)
    }

    /// Mean cross-entropy of teacher-forced predictions (inference mode).
    pub fn loss(&self, batch: &Seq2SeqBatch<T>) -> Result<T> {
        let encoded = self.encode(batch.features.view())?;
        let logits = self.decode_teacher_forced(&encoded, batch.targets.view())?;
        let mut total = T::zero();
        for (l, t) in logits.outer_iter().zip(batch.targets.outer_iter()) {
            total = total + compute_loss(l, &t.to_vec())?;
        }
        Ok(total / T::of(batch.features.dim().0 as f64))
    }

    /// Forward and backward over a batch. `rng` enables dropout. Gradients of
    /// the mean per-token loss are accumulated into `grads`.
    pub fn forward_backward(
        &self,
        batch: &Seq2SeqBatch<T>,
        mut rng: Option<&mut ChaCha8Rng>,
        grads: &mut Seq2Seq<T>,
    ) -> Result<BatchStats> {
        let targets = batch.targets.view();
        let b = batch.features.dim().0;
        self.check_targets(&targets, b)?;
        let (encoded, enc) = self.encode_impl(batch.features.view(), rng.as_deref_mut())?;
        let (logits, dec) = self.decode_teacher_impl(&encoded, targets, rng)?;
        let k_len = self.config.output_len;
        let flat_targets: Vec<usize> = (0..k_len).flat_map(|k| targets.column(k).to_vec()).collect();
        let (loss, correct, dlogits) = batch_cross_entropy(logits.view(), &flat_targets)?;
        let dlogits = dlogits * (T::one() / T::of((b * k_len) as f64));
        self.backward(&encoded, &enc, &dec, dlogits, grads)?;
        Ok(BatchStats { loss_sum: loss.to_f64().unwrap_or(f64::NAN), correct, count: b * k_len })
    }

    fn backward(
        &self,
        encoded: &Encoded<T>,
        enc: &EncoderCache<T>,
        dec: &DecoderCache<T>,
        dlogits: Array2<T>,
        grads: &mut Seq2Seq<T>,
    ) -> Result<()> {
        let memory = &encoded.memory;
        let (b, t, h) = memory.states.dim();
        let k_len = self.config.output_len;
        let mut g_states = Array3::zeros((b, t, h));
        let mut g_keys = Array3::zeros((b, t, h));
        let zero = Array2::<T>::zeros((b, h));

        let dht = self.output.backward(dec.attentional.view(), dlogits.view(), &mut grads.output);
        let dht = dht.into_shape_with_order((k_len, b, h)).expect("contiguous");
        let dq = self.attention.backward_all(&dec.attention, memory, dht.view(), &mut g_states, &mut g_keys, &mut grads.attention);
        let (dx1, dh1, dc1) = self.decoder[1].backward_sequence(&dec.lstm1, dq.view(), (zero.view(), zero.view()), &mut grads.decoder[1]);
        let dx1 = dropout_backward_3d(&dec.mask_mid, dx1);
        let (demb, dh0, dc0) = self.decoder[0].backward_sequence(&dec.lstm0, dx1.view(), (zero.view(), zero.view()), &mut grads.decoder[0]);
        let demb = demb.into_shape_with_order((k_len * b, self.config.embed_dim)).expect("contiguous");
        self.embedding.backward(&dec.tokens, demb.view(), &mut grads.embedding)?;
        self.attention.memory_backward(memory, g_keys.view(), &mut g_states, &mut grads.attention);

        let g_states = g_states.permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
        let (dx1, _, _) = self.encoder[1].backward_sequence(&enc.lstm1, g_states.view(), (dh1.view(), dc1.view()), &mut grads.encoder[1]);
        let dx1 = dropout_backward_3d(&enc.mask_mid, dx1);
        let (dx0, _, _) = self.encoder[0].backward_sequence(&enc.lstm0, dx1.view(), (dh0.view(), dc0.view()), &mut grads.encoder[0]);
        let dz = dx0.into_shape_with_order((t * b, self.config.input_width)).expect("contiguous");
        let dz = Dropout::backward(&enc.mask_in, dz);
        self.input.backward_params(enc.x.view(), dz.view(), &mut grads.input);
        Ok(())
    }
}

/// Mean cross-entropy of `K x X` logits against `K` targets.
pub fn compute_loss<T: Scalar>(logits: ArrayView2<T>, targets: &[usize]) -> Result<T> {
    check_shape("loss targets", &[logits.nrows()], &[targets.len()])?;
    let mut total = T::zero();
    for (row, &t) in logits.rows().into_iter().zip(targets) {
        total = total + softmax_cross_entropy(row, t)?.0;
    }
    Ok(total / T::of(targets.len() as f64))
}

fn apply_dropout_3d<T: Scalar>(
    dropout: &Dropout,
    x: Array3<T>,
    rng: Option<&mut ChaCha8Rng>,
) -> (Array3<T>, DropoutMask<T>) {
    let dim = x.raw_dim();
    let (a, b, c) = x.dim();
    let (y, mask) = apply_dropout(dropout, x.into_shape_with_order((a * b, c)).expect("contiguous"), rng);
    (y.into_shape_with_order(dim).expect("contiguous"), mask)
}

fn dropout_backward_3d<T: Scalar>(mask: &DropoutMask<T>, grad: Array3<T>) -> Array3<T> {
    let dim = grad.raw_dim();
    let (a, b, c) = grad.dim();
    Dropout::backward(mask, grad.into_shape_with_order((a * b, c)).expect("contiguous")).into_shape_with_order(dim).expect("contiguous")
}

fn apply_dropout<T: Scalar>(
    dropout: &Dropout,
    x: Array2<T>,
    rng: Option<&mut ChaCha8Rng>,
) -> (Array2<T>, DropoutMask<T>) {
    match rng {
        Some(rng) => dropout.forward(x.view(), rng, true),
        None => (x, None),
    }
}

impl<T: Scalar> Parameters<T> for Seq2Seq<T> {
    fn tensors(&self) -> Named<'_, T> {
        let mut v = prefixed("encoder.input", self.input.tensors());
        v.extend(prefixed("encoder.lstm0", self.encoder[0].tensors()));
        v.extend(prefixed("encoder.lstm1", self.encoder[1].tensors()));
        v.extend(prefixed("decoder.embedding", self.embedding.tensors()));
        v.extend(prefixed("decoder.lstm0", self.decoder[0].tensors()));
        v.extend(prefixed("decoder.lstm1", self.decoder[1].tensors()));
        v.extend(prefixed("decoder.attention", self.attention.tensors()));
        v.extend(prefixed("decoder.output", self.output.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> NamedMut<'_, T> {
        let [e0, e1] = &mut self.encoder;
        let [d0, d1] = &mut self.decoder;
        let mut v = prefixed("encoder.input", self.input.tensors_mut());
        v.extend(prefixed("encoder.lstm0", e0.tensors_mut()));
        v.extend(prefixed("encoder.lstm1", e1.tensors_mut()));
        v.extend(prefixed("decoder.embedding", self.embedding.tensors_mut()));
        v.extend(prefixed("decoder.lstm0", d0.tensors_mut()));
        v.extend(prefixed("decoder.lstm1", d1.tensors_mut()));
        v.extend(prefixed("decoder.attention", self.attention.tensors_mut()));
        v.extend(prefixed("decoder.output", self.output.tensors_mut()));
        v
    }
}

impl<T: Scalar> Trainable<T> for Seq2Seq<T> {
    type Batch = Seq2SeqBatch<T>;

    fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    fn train_batch(&self, batch: &Self::Batch, rng: &mut ChaCha8Rng, grads: &mut Self) -> Result<BatchStats> {
        self.forward_backward(batch, Some(rng), grads)
    }

    fn eval_batch(&self, batch: &Self::Batch) -> Result<BatchStats> {
        let encoded = self.encode(batch.features.view())?;
        let logits = self.decode_teacher_forced(&encoded, batch.targets.view())?;
        let mut stats = BatchStats::default();
        for (l, t) in logits.outer_iter().zip(batch.targets.outer_iter()) {
            let (loss, correct, _) = batch_cross_entropy(l, &t.to_vec())?;
            stats.loss_sum += loss.to_f64().unwrap_or(f64::NAN);
            stats.correct += correct;
            stats.count += t.len();
        }
        Ok(stats)
    }
}

impl<T: Scalar> crate::train::Architecture<T> for Seq2Seq<T> {
    type Config = Seq2SeqConfig;
    const ARCH: &'static str = "seq2seq";

    fn config(&self) -> Seq2SeqConfig {
        self.config
    }

    fn zeros_from(config: &Seq2SeqConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::zeros(*config))
    }
}
