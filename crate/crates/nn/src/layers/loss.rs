use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1};

use crate::error::{NnError, Result};
use crate::scalar::Scalar;

/// Numerically stable softmax over a vector, in place.
pub fn softmax_in_place<T: Scalar>(mut z: ArrayViewMut1<T>) {
    let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    z.mapv_inplace(|v| (v - max).exp());
    let sum = z.sum();
    z.mapv_inplace(|v| v / sum);
}

pub fn softmax<T: Scalar>(z: ArrayView1<T>) -> Array1<T> {
    let mut out = z.to_owned();
    softmax_in_place(out.view_mut());
    out
}

/// `-log softmax(logits)[target]` and its gradient `softmax - onehot`.
pub fn softmax_cross_entropy<T: Scalar>(logits: ArrayView1<T>, target: usize) -> Result<(T, Array1<T>)> {
    let classes = logits.len();
    if target >= classes {
        return Err(NnError::LabelOutOfRange { label: target, classes });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite("logits".into()));
    }
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let log_sum = logits.iter().map(|&v| (v - max).exp()).fold(T::zero(), |a, b| a + b).ln();
    let loss = log_sum - (logits[target] - max);
    let mut grad = logits.mapv(|v| (v - max - log_sum).exp());
    grad[target] = grad[target] - T::one();
    Ok((loss, grad))
}

/// Batched cross-entropy. Returns the summed loss, the number of rows whose
/// argmax equals the target, and the unscaled gradient rows.
pub fn batch_cross_entropy<T: Scalar>(logits: ArrayView2<T>, targets: &[usize]) -> Result<(T, usize, Array2<T>)> {
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = T::zero();
    let mut correct = 0;
    for ((row, &target), mut g) in logits.rows().into_iter().zip(targets).zip(grad.rows_mut()) {
        let (loss, dz) = softmax_cross_entropy(row, target)?;
        total = total + loss;
        correct += usize::from(argmax(row) == target);
        g.assign(&dz);
    }
    Ok((total, correct, grad))
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<T: Scalar>(v: ArrayView1<T>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
