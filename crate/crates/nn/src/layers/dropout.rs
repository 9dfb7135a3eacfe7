use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{NnError, Result};
use crate::scalar::Scalar;

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` so the
/// expectation is unchanged and inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

/// Per-element multipliers (0 or `1 / (1 - rate)`) used by a training pass.
/// `None` means the pass was the identity.
pub type DropoutMask<T> = Option<Array2<T>>;

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::InvalidDropoutRate(rate));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `rng` is only consulted when `training` is set and the rate is positive.
    pub fn forward<T: Scalar, R: Rng>(&self, x: ArrayView2<T>, rng: &mut R, training: bool) -> (Array2<T>, DropoutMask<T>) {
        if !training || self.rate == 0.0 {
            return (x.to_owned(), None);
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || if rng.gen::<f64>() < self.rate { T::zero() } else { keep });
        (&x * &mask, Some(mask))
    }

    pub fn backward<T: Scalar>(mask: &DropoutMask<T>, grad_y: Array2<T>) -> Array2<T> {
        match mask {
            Some(m) => grad_y * m,
            None => grad_y,
        }
    }
}
