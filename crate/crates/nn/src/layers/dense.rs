use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{check_shape, Result};
use crate::params::{uniform_matrix, uniform_vector, Named, NamedMut, Parameters};
use crate::scalar::Scalar;

/// Affine layer `y = x W^T + b` over a batch of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `out x in`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Self { weight: uniform_matrix(output, input, input, rng), bias: uniform_vector(output, input, rng) }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((output, input)), bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        check_shape("dense input", &[x.nrows(), self.input_dim()], x.shape())?;
        let mut y = Array2::from_shape_fn((x.nrows(), self.output_dim()), |(_, j)| self.bias[j]);
        general_mat_mul(T::one(), &x, &self.weight.t(), T::one(), &mut y);
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<T>, grad_y: ArrayView2<T>, grads: &mut Dense<T>) -> Array2<T> {
        self.backward_params(x, grad_y, grads);
        grad_y.dot(&self.weight)
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn backward_params(&self, x: ArrayView2<T>, grad_y: ArrayView2<T>, grads: &mut Dense<T>) {
        general_mat_mul(T::one(), &grad_y.t(), &x, T::one(), &mut grads.weight);
        grads.bias += &grad_y.sum_axis(Axis(0));
    }
}

impl<T: Scalar> Parameters<T> for Dense<T> {
    fn tensors(&self) -> Named<'_, T> {
        vec![
            ("weight".into(), self.weight.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> NamedMut<'_, T> {
        vec![
            ("weight".into(), self.weight.view_mut().into_dyn()),
            ("bias".into(), self.bias.view_mut().into_dyn()),
        ]
    }
}
