use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis, Zip};
use rand::Rng;

use crate::error::{check_shape, NnError, Result};
use crate::layers::softmax_in_place;
use crate::params::{uniform_matrix, uniform_vector, Named, NamedMut, Parameters};
use crate::scalar::Scalar;

/// Global attention with the bilinear ("general") score
/// `score_s = q^T W_a h_s` and the combine step `tanh(W_c [c; q] + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    /// `H x H`
    pub w_score: Array2<T>,
    /// `H x 2H`, acting on `[context; query]`.
    pub w_combine: Array2<T>,
    pub b_combine: Array1<T>,
}

/// Encoder states for a batch together with their projected keys
/// `K_s = W_a h_s`, both `B x T x H`.
#[derive(Debug, Clone)]
pub struct AttentionMemory<T> {
    pub states: Array3<T>,
    pub keys: Array3<T>,
}

/// Result of one attention step over a batch.
#[derive(Debug, Clone)]
pub struct AttentionOutput<T> {
    /// `B x H`
    pub context: Array2<T>,
    /// `B x T`, rows sum to one.
    pub weights: Array2<T>,
    /// Attentional vector, `B x H`.
    pub attentional: Array2<T>,
}

/// Values saved by [`Attention::forward_all`].
#[derive(Debug, Clone)]
pub struct AttentionSeqCache<T> {
    /// `[context; query]` per step, `K x B x 2H`.
    joined: Array3<T>,
    /// `B x K x T`
    pub weights: Array3<T>,
    attentional: Array3<T>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    query: Array2<T>,
    out: AttentionOutput<T>,
}

impl<T: Scalar> Attention<T> {
    pub fn new<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        Self {
            w_score: uniform_matrix(hidden, hidden, hidden, rng),
            w_combine: uniform_matrix(hidden, 2 * hidden, 2 * hidden, rng),
            b_combine: uniform_vector(hidden, 2 * hidden, rng),
        }
    }

    pub fn zeros(hidden: usize) -> Self {
        Self {
            w_score: Array2::zeros((hidden, hidden)),
            w_combine: Array2::zeros((hidden, 2 * hidden)),
            b_combine: Array1::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_score.nrows()
    }

    /// Precomputes the keys for a `B x T x H` block of encoder states.
    pub fn memory(&self, states: Array3<T>) -> Result<AttentionMemory<T>> {
        let (b, t, h) = states.dim();
        if t == 0 {
            return Err(NnError::EmptySequence);
        }
        check_shape("attention memory", &[b, t, self.hidden()], states.shape())?;
        let flat = states.view().into_shape_with_order((b * t, h)).expect("standard layout");
        let keys = flat.dot(&self.w_score.t()).into_shape_with_order((b, t, h)).expect("contiguous");
        Ok(AttentionMemory { states, keys })
    }

    pub fn step(&self, query: ArrayView2<T>, memory: &AttentionMemory<T>) -> Result<(AttentionOutput<T>, AttentionCache<T>)> {
        let (b, t, h) = memory.states.dim();
        check_shape("attention query", &[b, h], query.shape())?;
        let mut weights = Array2::zeros((b, t));
        let mut context = Array2::zeros((b, h));
        for i in 0..b {
            let q = query.row(i);
            let mut w = memory.keys.index_axis(Axis(0), i).dot(&q);
            softmax_in_place(w.view_mut());
            context.row_mut(i).assign(&memory.states.index_axis(Axis(0), i).t().dot(&w));
            weights.row_mut(i).assign(&w);
        }
        let joined = concatenate![Axis(1), context, query];
        let mut attentional = Array2::from_shape_fn((b, h), |(_, j)| self.b_combine[j]);
        general_mat_mul(T::one(), &joined, &self.w_combine.t(), T::one(), &mut attentional);
        attentional.mapv_inplace(|v| v.tanh());
        if attentional.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("attention step".into()));
        }
        let out = AttentionOutput { context, weights, attentional };
        Ok((out.clone(), AttentionCache { query: query.to_owned(), out }))
    }

    /// Backward through one step given `dL/dh~`. Accumulates into the
    /// combine-weight gradients and into `grad_memory`, a pair of
    /// `B x T x H` buffers for the states and keys. Returns `dL/dq`.
    pub fn step_backward(
        &self,
        cache: &AttentionCache<T>,
        memory: &AttentionMemory<T>,
        grad_attentional: ArrayView2<T>,
        grad_states: &mut Array3<T>,
        grad_keys: &mut Array3<T>,
        grads: &mut Attention<T>,
    ) -> Array2<T> {
        let h = self.hidden();
        let one = T::one();
        let out = &cache.out;
        let dpre = Zip::from(&grad_attentional).and(&out.attentional).map_collect(|&g, &a| g * (one - a * a));
        let joined = concatenate![Axis(1), out.context, cache.query];
        general_mat_mul(one, &dpre.t(), &joined, one, &mut grads.w_combine);
        grads.b_combine += &dpre.sum_axis(Axis(0));
        let djoined = dpre.dot(&self.w_combine);
        let dcontext = djoined.slice(s![.., ..h]);
        let mut dquery = djoined.slice(s![.., h..]).to_owned();

        for i in 0..out.weights.nrows() {
            let a = out.weights.row(i);
            let dc = dcontext.row(i);
            let states = memory.states.index_axis(Axis(0), i);
            // context = a^T E
            let mut ds = grad_states.index_axis_mut(Axis(0), i);
            Zip::from(ds.rows_mut()).and(&a).for_each(|mut row, &w| row.scaled_add(w, &dc));
            let da = states.dot(&dc);
            let dot = a.dot(&da);
            let dscore = Zip::from(&a).and(&da).map_collect(|&w, &d| w * (d - dot));
            // score_s = q . K_s
            dquery.row_mut(i).scaled_add(one, &memory.keys.index_axis(Axis(0), i).t().dot(&dscore));
            let q = cache.query.row(i);
            let mut dk = grad_keys.index_axis_mut(Axis(0), i);
            Zip::from(dk.rows_mut()).and(&dscore).for_each(|mut row, &d| row.scaled_add(d, &q));
        }
        dquery
    }

    /// Folds the key gradients back into the score weight and the states.
    pub fn memory_backward(
        &self,
        memory: &AttentionMemory<T>,
        grad_keys: ArrayView3<T>,
        grad_states: &mut Array3<T>,
        grads: &mut Attention<T>,
    ) {
        let (b, t, h) = memory.states.dim();
        let states = memory.states.view().into_shape_with_order((b * t, h)).expect("standard layout");
        let dk = grad_keys.into_shape_with_order((b * t, h)).expect("standard layout");
        general_mat_mul(T::one(), &dk.t(), &states, T::one(), &mut grads.w_score);
        let mut ds = grad_states.view_mut().into_shape_with_order((b * t, h)).expect("standard layout");
        general_mat_mul(T::one(), &dk, &self.w_score, T::one(), &mut ds);
    }

    /// Attends every query of a time-major block `queries [K x B x H]` at
    /// once. Returns the attentional vectors `[K x B x H]`.
    pub fn forward_all(&self, queries: ArrayView3<T>, memory: &AttentionMemory<T>) -> Result<(Array3<T>, AttentionSeqCache<T>)> {
        let (k_len, b, h) = queries.dim();
        let t_len = memory.states.dim().1;
        check_shape("attention queries", &[k_len, memory.states.dim().0, self.hidden()], &[k_len, b, h])?;
        let queries = queries.as_standard_layout().into_owned();
        let mut weights = Array3::zeros((b, k_len, t_len));
        let mut joined = Array3::zeros((k_len, b, 2 * h));
        for i in 0..b {
            let q = queries.slice(s![.., i, ..]);
            let mut w = weights.index_axis_mut(Axis(0), i);
            general_mat_mul(T::one(), &q, &memory.keys.index_axis(Axis(0), i).t(), T::zero(), &mut w);
            for row in w.rows_mut() {
                softmax_in_place(row);
            }
            let mut ctx = joined.slice_mut(s![.., i, ..h]);
            general_mat_mul(T::one(), &w, &memory.states.index_axis(Axis(0), i), T::zero(), &mut ctx);
        }
        joined.slice_mut(s![.., .., h..]).assign(&queries);
        let flat = joined.view().into_shape_with_order((k_len * b, 2 * h)).expect("contiguous");
        let mut out = Array2::from_shape_fn((k_len * b, h), |(_, j)| self.b_combine[j]);
        general_mat_mul(T::one(), &flat, &self.w_combine.t(), T::one(), &mut out);
        out.mapv_inplace(|v| v.tanh());
        if out.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite("attention".into()));
        }
        let out = out.into_shape_with_order((k_len, b, h)).expect("contiguous");
        Ok((out.clone(), AttentionSeqCache { joined, weights, attentional: out }))
    }

    /// Backward of [`Attention::forward_all`]. Accumulates into the states and
    /// keys gradient buffers (`B x T x H`) and returns `dL/dqueries`.
    pub fn backward_all(
        &self,
        cache: &AttentionSeqCache<T>,
        memory: &AttentionMemory<T>,
        grad_attentional: ArrayView3<T>,
        grad_states: &mut Array3<T>,
        grad_keys: &mut Array3<T>,
        grads: &mut Attention<T>,
    ) -> Array3<T> {
        let (k_len, b, h) = cache.attentional.dim();
        let one = T::one();
        let dpre = Zip::from(&grad_attentional).and(&cache.attentional).map_collect(|&g, &a| g * (one - a * a));
        let dpre = dpre.into_shape_with_order((k_len * b, h)).expect("contiguous");
        let joined = cache.joined.view().into_shape_with_order((k_len * b, 2 * h)).expect("contiguous");
        general_mat_mul(one, &dpre.t(), &joined, one, &mut grads.w_combine);
        grads.b_combine += &dpre.sum_axis(Axis(0));
        let djoined = dpre.dot(&self.w_combine).into_shape_with_order((k_len, b, 2 * h)).expect("contiguous");
        let mut dqueries = djoined.slice(s![.., .., h..]).to_owned();

        for i in 0..b {
            let a = cache.weights.index_axis(Axis(0), i);
            let dc = djoined.slice(s![.., i, ..h]);
            let states = memory.states.index_axis(Axis(0), i);
            // context = A E
            let mut ds = grad_states.index_axis_mut(Axis(0), i);
            general_mat_mul(one, &a.t(), &dc, one, &mut ds);
            let da = dc.dot(&states.t());
            let mut dscore = &a * &da;
            for (mut row, arow) in dscore.rows_mut().into_iter().zip(a.rows()) {
                let dot = row.sum();
                row.zip_mut_with(&arow, |d, &w| *d = *d - w * dot);
            }
            // scores = Q K^T
            let mut dq = dqueries.slice_mut(s![.., i, ..]);
            general_mat_mul(one, &dscore, &memory.keys.index_axis(Axis(0), i), one, &mut dq);
            let q = cache.joined.slice(s![.., i, h..]);
            let mut dk = grad_keys.index_axis_mut(Axis(0), i);
            general_mat_mul(one, &dscore.t(), &q, one, &mut dk);
        }
        dqueries
    }

    /// Single-query convenience: `query [H]`, `states [T x H]`.
    pub fn forward(&self, query: ArrayView2<T>, states: ArrayView2<T>) -> Result<AttentionOutput<T>> {
        let (t, h) = states.dim();
        let states = Array3::from_shape_vec((1, t, h), states.iter().copied().collect()).expect("length matches");
        let memory = self.memory(states)?;
        Ok(self.step(query, &memory)?.0)
    }
}

impl<T: Scalar> Parameters<T> for Attention<T> {
    fn tensors(&self) -> Named<'_, T> {
        vec![
            ("w_score".into(), self.w_score.view().into_dyn()),
            ("w_combine".into(), self.w_combine.view().into_dyn()),
            ("b_combine".into(), self.b_combine.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> NamedMut<'_, T> {
        vec![
            ("w_score".into(), self.w_score.view_mut().into_dyn()),
            ("w_combine".into(), self.w_combine.view_mut().into_dyn()),
            ("b_combine".into(), self.b_combine.view_mut().into_dyn()),
        ]
    }
}
