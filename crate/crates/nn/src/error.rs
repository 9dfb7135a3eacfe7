use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { context: String, expected: Vec<usize>, actual: Vec<usize> },
    #[error("non-finite values produced by {0}")]
    NonFinite(String),
    #[error("token {token} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidDropoutRate(f64),
    #[error("attention over an empty encoder sequence")]
    EmptySequence,
    #[error("sequence length {actual} does not match the model's {expected}")]
    SequenceLength { expected: usize, actual: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (parameter norm {param_norm:.4e})")]
    NonFiniteLoss { epoch: usize, batch: usize, param_norm: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn check_shape(context: &str, expected: &[usize], actual: &[usize]) -> Result<()> {
    if expected != actual {
        return Err(NnError::ShapeMismatch {
            context: context.to_string(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        });
    }
    Ok(())
}
