//! Hand-differentiated neural network kernel and the two beam predictors
//! built on it: an attention encoder-decoder and a feed-forward baseline.
//!
//! Every layer exposes an explicit forward step that returns a cache and a
//! backward step that accumulates parameter gradients into a zero-valued
//! copy of the layer. Models are generic over the scalar type; the aliases
//! below fix it to `f64`.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod ffn;
pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod scalar;
pub mod seq2seq;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use ffn::{FfnBatch, FfnConfig};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use params::{clip_global_norm, Parameters};
pub use scalar::Scalar;
pub use seq2seq::{compute_loss, Encoded, Seq2SeqBatch, Seq2SeqConfig};
pub use train::{
    evaluate, model_checkpoint, model_from_checkpoint, write_history, Architecture, BatchStats, EpochRecord, Examples,
    ModelMeta, TrainConfig, TrainOutcome, TrainState, Trainable, Trainer,
};

pub type Seq2Seq = seq2seq::Seq2Seq<f64>;
pub type Ffn = ffn::Ffn<f64>;
pub type Dense = layers::Dense<f64>;
pub type Lstm = layers::Lstm<f64>;
pub type Attention = layers::Attention<f64>;
pub type Embedding = layers::Embedding<f64>;
pub type SeqSamples = data::SeqSamples<f64>;
pub type SnapshotSamples = data::SnapshotSamples<f64>;
