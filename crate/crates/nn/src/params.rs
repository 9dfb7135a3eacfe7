//! Named parameter tensors, shared by the optimizer, the gradient checker
//! and the checkpoint format.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use crate::scalar::Scalar;

pub type Named<'a, T> = Vec<(String, ArrayViewD<'a, T>)>;
pub type NamedMut<'a, T> = Vec<(String, ArrayViewMutD<'a, T>)>;

/// A set of trainable tensors with stable names and order.
pub trait Parameters<T: Scalar> {
    fn tensors(&self) -> Named<'_, T>;
    fn tensors_mut(&mut self) -> NamedMut<'_, T>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn fill_zero(&mut self) {
        for (_, mut t) in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    fn global_norm(&self) -> T {
        self.tensors()
            .iter()
            .fold(T::zero(), |acc, (_, t)| t.iter().fold(acc, |a, &v| a + v * v))
            .sqrt()
    }

    fn scale(&mut self, factor: T) {
        for (_, mut t) in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Prefix child tensor names with `prefix.`.
pub(crate) fn prefixed<'a, V>(prefix: &str, items: Vec<(String, V)>) -> Vec<(String, V)> {
    items.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

/// Rescale `grads` so their global norm is at most `max_norm`. Returns the
/// pre-clip norm and whether clipping happened.
pub fn clip_global_norm<T: Scalar, P: Parameters<T>>(grads: &mut P, max_norm: T) -> (T, bool) {
    let norm = grads.global_norm();
    if norm > max_norm && norm.is_finite() {
        grads.scale(max_norm / norm);
        (norm, true)
    } else {
        (norm, false)
    }
}

/// `U[-k, k]` with `k = 1/sqrt(fan_in)`.
pub fn uniform_matrix<T: Scalar, R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<T> {
    let k = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::of(rng.gen_range(-k..k)))
}

pub fn uniform_vector<T: Scalar, R: Rng>(len: usize, fan_in: usize, rng: &mut R) -> Array1<T> {
    let k = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array1::from_shape_simple_fn(len, || T::of(rng.gen_range(-k..k)))
}
