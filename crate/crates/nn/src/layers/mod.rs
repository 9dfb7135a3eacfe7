mod attention;
mod dense;
mod dropout;
mod embedding;
mod loss;
mod lstm;

pub use attention::{Attention, AttentionCache, AttentionMemory, AttentionOutput, AttentionSeqCache};
pub use dense::Dense;
pub use dropout::{Dropout, DropoutMask};
pub use embedding::Embedding;
pub use loss::{argmax, batch_cross_entropy, softmax, softmax_cross_entropy, softmax_in_place};
pub use lstm::{Lstm, LstmCache, LstmSeqCache, LstmState};
