use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{check_shape, NnError, Result};
use crate::params::{Named, NamedMut, Parameters};
use crate::scalar::Scalar;

/// Token lookup table, `vocab x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub table: Array2<T>,
}

impl<T: Scalar> Embedding<T> {
    /// Rows drawn from `U[-1, 1]`.
    pub fn new<R: Rng>(vocab: usize, dim: usize, rng: &mut R) -> Self {
        Self { table: Array2::from_shape_simple_fn((vocab, dim), || T::of(rng.gen_range(-1.0..1.0))) }
    }

    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Self { table: Array2::zeros((vocab, dim)) }
    }

    pub fn vocab(&self) -> usize {
        self.table.nrows()
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }

    fn check(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.vocab()) {
            Some(&token) => Err(NnError::TokenOutOfRange { token, vocab: self.vocab() }),
            None => Ok(()),
        }
    }

    pub fn forward(&self, tokens: &[usize]) -> Result<Array2<T>> {
        self.check(tokens)?;
        let mut out = Array2::zeros((tokens.len(), self.dim()));
        for (mut row, &t) in out.rows_mut().into_iter().zip(tokens) {
            row.assign(&self.table.row(t));
        }
        Ok(out)
    }

    /// Scatter-adds each row of `grad_y` into the looked-up table row.
    pub fn backward(&self, tokens: &[usize], grad_y: ArrayView2<T>, grads: &mut Embedding<T>) -> Result<()> {
        self.check(tokens)?;
        check_shape("embedding gradient", &[tokens.len(), self.dim()], grad_y.shape())?;
        for (g, &t) in grad_y.rows().into_iter().zip(tokens) {
            let mut row = grads.table.row_mut(t);
            row += &g;
        }
        Ok(())
    }
}

impl<T: Scalar> Parameters<T> for Embedding<T> {
    fn tensors(&self) -> Named<'_, T> {
        vec![("table".into(), self.table.view().into_dyn())]
    }

    fn tensors_mut(&mut self) -> NamedMut<'_, T> {
        vec![("table".into(), self.table.view_mut().into_dyn())]
    }
}
