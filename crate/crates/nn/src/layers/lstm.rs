use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut2, Axis, Zip};
use rand::Rng;

use crate::error::{check_shape, NnError, Result};
use crate::params::{uniform_matrix, uniform_vector, Named, NamedMut, Parameters};
use crate::scalar::Scalar;

/// One LSTM layer. The four gates are stacked row-wise in the order
/// input, forget, cell, output, so `w_ih` is `4H x D`, `w_hh` is `4H x H`
/// and `bias` has `4H` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub w_ih: Array2<T>,
    pub w_hh: Array2<T>,
    pub bias: Array1<T>,
}

/// Hidden and cell state for a batch, each `B x H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Array2<T>,
    pub c: Array2<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self { h: Array2::zeros((batch, hidden)), c: Array2::zeros((batch, hidden)) }
    }
}

/// Values saved by [`Lstm::forward_sequence`], all time-major.
#[derive(Debug, Clone)]
pub struct LstmSeqCache<T> {
    xs: Array3<T>,
    init: LstmState<T>,
    hs: Array3<T>,
    cs: Array3<T>,
    gates: Array3<T>,
    tanh_cs: Array3<T>,
}

/// Values saved by [`Lstm::step`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    x: Array2<T>,
    h_prev: Array2<T>,
    c_prev: Array2<T>,
    /// Activated gates `[i | f | g | o]`, `B x 4H`.
    gates: Array2<T>,
    tanh_c: Array2<T>,
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

impl<T: Scalar> Lstm<T> {
    /// Uniform `1/sqrt(H)` init with the forget-gate bias set to 1.
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = uniform_vector(4 * hidden, hidden, rng);
        bias.slice_mut(s![hidden..2 * hidden]).fill(T::one());
        Self {
            w_ih: uniform_matrix(4 * hidden, input, hidden, rng),
            w_hh: uniform_matrix(4 * hidden, hidden, hidden, rng),
            bias,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn step(&self, x: ArrayView2<T>, state: &LstmState<T>) -> Result<(LstmState<T>, LstmCache<T>)> {
        let (b, hdim) = (x.nrows(), self.hidden());
        check_shape("lstm input", &[b, self.input_dim()], x.shape())?;
        self.check_state(b, state)?;
        let mut z = Array2::from_shape_fn((b, 4 * hdim), |(_, j)| self.bias[j]);
        general_mat_mul(T::one(), &x, &self.w_ih.t(), T::one(), &mut z);
        general_mat_mul(T::one(), &state.h, &self.w_hh.t(), T::one(), &mut z);
        let (next, tanh_c) = activate(z.view_mut(), state.c.view())?;
        let cache = LstmCache {
            x: x.to_owned(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates: z,
            tanh_c,
        };
        Ok((next, cache))
    }

    fn check_state(&self, batch: usize, state: &LstmState<T>) -> Result<()> {
        check_shape("lstm hidden state", &[batch, self.hidden()], state.h.shape())?;
        check_shape("lstm cell state", &[batch, self.hidden()], state.c.shape())
    }

    /// Backpropagates `dL/dh` and `dL/dc` through one step. Accumulates
    /// parameter gradients into `grads`; returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        cache: &LstmCache<T>,
        grad_h: ArrayView2<T>,
        grad_c: ArrayView2<T>,
        grads: &mut Lstm<T>,
    ) -> (Array2<T>, Array2<T>, Array2<T>) {
        let mut dz = Array2::zeros(cache.gates.raw_dim());
        let dc_prev = gate_backward(
            cache.gates.view(),
            cache.c_prev.view(),
            cache.tanh_c.view(),
            grad_h,
            grad_c,
            dz.view_mut(),
        );
        let one = T::one();
        general_mat_mul(one, &dz.t(), &cache.x, one, &mut grads.w_ih);
        general_mat_mul(one, &dz.t(), &cache.h_prev, one, &mut grads.w_hh);
        grads.bias += &dz.sum_axis(Axis(0));
        (dz.dot(&self.w_ih), dz.dot(&self.w_hh), dc_prev)
    }

    /// Runs a whole time-major sequence `xs [T x B x D]`. Returns the hidden
    /// states `[T x B x H]`, the final state and a cache for
    /// [`Lstm::backward_sequence`].
    pub fn forward_sequence(
        &self,
        xs: ArrayView3<T>,
        init: &LstmState<T>,
    ) -> Result<(Array3<T>, LstmState<T>, LstmSeqCache<T>)> {
        let (t_len, b, d) = xs.dim();
        let hdim = self.hidden();
        check_shape("lstm sequence input", &[t_len, b, self.input_dim()], &[t_len, b, d])?;
        self.check_state(b, init)?;
        let xs = xs.as_standard_layout().into_owned();
        let flat = xs.view().into_shape_with_order((t_len * b, d)).expect("standard layout");
        let mut gates = Array2::from_shape_fn((t_len * b, 4 * hdim), |(_, j)| self.bias[j]);
        general_mat_mul(T::one(), &flat, &self.w_ih.t(), T::one(), &mut gates);
        let mut gates = gates.into_shape_with_order((t_len, b, 4 * hdim)).expect("contiguous");

        let mut hs = Array3::zeros((t_len, b, hdim));
        let mut cs = Array3::zeros((t_len, b, hdim));
        let mut tanh_cs = Array3::zeros((t_len, b, hdim));
        let mut state = init.clone();
        for t in 0..t_len {
            let mut z = gates.index_axis_mut(Axis(0), t);
            general_mat_mul(T::one(), &state.h, &self.w_hh.t(), T::one(), &mut z);
            let (next, tanh_c) = activate(z, state.c.view())?;
            hs.index_axis_mut(Axis(0), t).assign(&next.h);
            cs.index_axis_mut(Axis(0), t).assign(&next.c);
            tanh_cs.index_axis_mut(Axis(0), t).assign(&tanh_c);
            state = next;
        }
        let cache = LstmSeqCache { xs, init: init.clone(), hs: hs.clone(), cs, gates, tanh_cs };
        Ok((hs, state, cache))
    }

    /// Backward through a sequence given `dL/dh_t` for every step and the
    /// gradient flowing into the final state. Returns `(dxs, dh0, dc0)`.
    pub fn backward_sequence(
        &self,
        cache: &LstmSeqCache<T>,
        grad_hs: ArrayView3<T>,
        grad_final: (ArrayView2<T>, ArrayView2<T>),
        grads: &mut Lstm<T>,
    ) -> (Array3<T>, Array2<T>, Array2<T>) {
        let (t_len, b, hdim) = cache.hs.dim();
        let d = cache.xs.dim().2;
        let one = T::one();
        let mut dz = Array3::zeros((t_len, b, 4 * hdim));
        let mut carry_h = grad_final.0.to_owned();
        let mut carry_c = grad_final.1.to_owned();
        for t in (0..t_len).rev() {
            let c_prev = if t == 0 { cache.init.c.view() } else { cache.cs.index_axis(Axis(0), t - 1) };
            let dh = &grad_hs.index_axis(Axis(0), t) + &carry_h;
            let mut dz_t = dz.index_axis_mut(Axis(0), t);
            carry_c = gate_backward(
                cache.gates.index_axis(Axis(0), t),
                c_prev,
                cache.tanh_cs.index_axis(Axis(0), t),
                dh.view(),
                carry_c.view(),
                dz_t.view_mut(),
            );
            carry_h = dz_t.dot(&self.w_hh);
        }

        let dz_flat = dz.view().into_shape_with_order((t_len * b, 4 * hdim)).expect("contiguous");
        let xs = cache.xs.view().into_shape_with_order((t_len * b, d)).expect("contiguous");
        general_mat_mul(one, &dz_flat.t(), &xs, one, &mut grads.w_ih);
        // h_{t-1} for every step: the initial state followed by hs[..T-1].
        let mut grad_w_hh = dz.index_axis(Axis(0), 0).t().dot(&cache.init.h);
        if t_len > 1 {
            let later = dz.slice(s![1.., .., ..]).into_shape_with_order(((t_len - 1) * b, 4 * hdim)).expect("contiguous");
            let prev = cache.hs.slice(s![..t_len - 1, .., ..]).into_shape_with_order(((t_len - 1) * b, hdim)).expect("contiguous");
            general_mat_mul(one, &later.t(), &prev, one, &mut grad_w_hh);
        }
        grads.w_hh += &grad_w_hh;
        grads.bias += &dz_flat.sum_axis(Axis(0));
        let dxs = dz_flat.dot(&self.w_ih).into_shape_with_order((t_len, b, d)).expect("contiguous");
        (dxs, carry_h, carry_c)
    }
}

/// Applies the gate nonlinearities to `z` in place and advances the cell.
fn activate<T: Scalar>(mut z: ArrayViewMut2<T>, c_prev: ArrayView2<T>) -> Result<(LstmState<T>, Array2<T>)> {
    let hdim = z.ncols() / 4;
    for mut row in z.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if (2 * hdim..3 * hdim).contains(&j) { v.tanh() } else { sigmoid(*v) };
        }
    }
    let i = z.slice(s![.., 0..hdim]);
    let f = z.slice(s![.., hdim..2 * hdim]);
    let g = z.slice(s![.., 2 * hdim..3 * hdim]);
    let o = z.slice(s![.., 3 * hdim..]);
    let c = Zip::from(&f).and(&c_prev).and(&i).and(&g).map_collect(|&f, &cp, &i, &g| f * cp + i * g);
    let tanh_c = c.mapv(|v| v.tanh());
    let h = &o * &tanh_c;
    if h.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite("lstm step".into()));
    }
    Ok((LstmState { h, c }, tanh_c))
}

/// Writes the pre-activation gradient into `dz` and returns `dL/dc_prev`.
fn gate_backward<T: Scalar>(
    gates: ArrayView2<T>,
    c_prev: ArrayView2<T>,
    tanh_c: ArrayView2<T>,
    grad_h: ArrayView2<T>,
    grad_c: ArrayView2<T>,
    mut dz: ArrayViewMut2<T>,
) -> Array2<T> {
    let hdim = tanh_c.ncols();
    let one = T::one();
    let i = gates.slice(s![.., 0..hdim]);
    let f = gates.slice(s![.., hdim..2 * hdim]);
    let g = gates.slice(s![.., 2 * hdim..3 * hdim]);
    let o = gates.slice(s![.., 3 * hdim..]);

    // Total cell gradient: carried dc plus the path through h = o * tanh(c).
    let dc = Zip::from(&grad_c)
        .and(&grad_h)
        .and(&o)
        .and(&tanh_c)
        .map_collect(|&dc, &dh, &o, &tc| dc + dh * o * (one - tc * tc));

    Zip::from(dz.slice_mut(s![.., 0..hdim]))
        .and(&dc)
        .and(&g)
        .and(&i)
        .for_each(|d, &dc, &g, &i| *d = dc * g * i * (one - i));
    Zip::from(dz.slice_mut(s![.., hdim..2 * hdim]))
        .and(&dc)
        .and(&c_prev)
        .and(&f)
        .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (one - f));
    Zip::from(dz.slice_mut(s![.., 2 * hdim..3 * hdim]))
        .and(&dc)
        .and(&i)
        .and(&g)
        .for_each(|d, &dc, &i, &g| *d = dc * i * (one - g * g));
    Zip::from(dz.slice_mut(s![.., 3 * hdim..]))
        .and(&grad_h)
        .and(&tanh_c)
        .and(&o)
        .for_each(|d, &dh, &tc, &o| *d = dh * tc * o * (one - o));
    &dc * &f
}

impl<T: Scalar> Parameters<T> for Lstm<T> {
    fn tensors(&self) -> Named<'_, T> {
        vec![
            ("w_ih".into(), self.w_ih.view().into_dyn()),
            ("w_hh".into(), self.w_hh.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> NamedMut<'_, T> {
        vec![
            ("w_ih".into(), self.w_ih.view_mut().into_dyn()),
            ("w_hh".into(), self.w_hh.view_mut().into_dyn()),
            ("bias".into(), self.bias.view_mut().into_dyn()),
        ]
    }
}
