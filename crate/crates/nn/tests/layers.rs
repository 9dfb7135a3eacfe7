use beamseq_nn::gradcheck::{finite_diff_check, relative_error};
use beamseq_nn::layers::{argmax, softmax, softmax_cross_entropy, Dropout, LstmState};
use beamseq_nn::params::{Named, NamedMut, Parameters};
use beamseq_nn::{Adam, AdamConfig, Attention, Dense, Embedding, Lstm, NnError};
use ndarray::{array, Array1, Array2, Array3, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-1.0..1.0))
}

/// Loose tensors used as differentiable inputs in the checks below.
#[derive(Clone)]
struct Inputs(Vec<Array2<f64>>);

impl Parameters<f64> for Inputs {
    fn tensors(&self) -> Named<'_, f64> {
        self.0.iter().enumerate().map(|(i, t)| (format!("in{i}"), t.view().into_dyn())).collect()
    }

    fn tensors_mut(&mut self) -> NamedMut<'_, f64> {
        self.0.iter_mut().enumerate().map(|(i, t)| (format!("in{i}"), t.view_mut().into_dyn())).collect()
    }
}

fn weighted(y: &Array2<f64>, r: &Array2<f64>) -> f64 {
    (y * r).sum()
}

#[test]
fn dense_identity() {
    let d = Dense { weight: Array2::eye(3), bias: Array1::zeros(3) };
    let x = array![[1.0, -2.0, 0.5], [3.0, 0.0, 4.0]];
    assert_eq!(d.forward(x.view()).unwrap(), x);
}

#[test]
fn dense_zero_upstream_gives_zero_grads() {
    let mut r = rng(1);
    let d = Dense::new(3, 5, &mut r);
    let x = random(4, 3, &mut r);
    let mut g = Dense::zeros(3, 5);
    let gx = d.backward(x.view(), Array2::zeros((4, 5)).view(), &mut g);
    assert!(g.all_finite());
    assert_eq!(g.global_norm(), 0.0);
    assert!(gx.iter().all(|&v| v == 0.0));
}

#[test]
fn dense_rejects_wrong_width() {
    let d = Dense::zeros(3, 5);
    assert!(matches!(d.forward(Array2::zeros((2, 4)).view()), Err(NnError::ShapeMismatch { .. })));
}

#[test]
fn dense_gradients_match_finite_differences() {
    let mut r = rng(2);
    let d = Dense::new(3, 5, &mut r);
    let x = random(4, 3, &mut r);
    let w = random(4, 5, &mut r);
    let mut g = Dense::zeros(3, 5);
    let gx = d.backward(x.view(), w.view(), &mut g);
    let report = finite_diff_check(&d, &g, |p| weighted(&p.forward(x.view()).unwrap(), &w), None, H, &mut r);
    assert!(report.max_rel_error < 1e-6, "{report:?}");

    let inputs = Inputs(vec![x.clone()]);
    let report =
        finite_diff_check(&inputs, &Inputs(vec![gx]), |p| weighted(&d.forward(p.0[0].view()).unwrap(), &w), None, H, &mut r);
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn embedding_lookup_and_scatter() {
    let mut r = rng(3);
    let e = Embedding::new(6, 4, &mut r);
    let out = e.forward(&[0, 3, 3]).unwrap();
    assert_eq!(out.row(0), e.table.row(0));
    assert_eq!(out.row(1), e.table.row(3));

    let grad = random(3, 4, &mut r);
    let mut g = Embedding::zeros(6, 4);
    e.backward(&[0, 3, 3], grad.view(), &mut g).unwrap();
    let expected = &grad.row(1) + &grad.row(2);
    assert_eq!(g.table.row(3), expected);
    assert_eq!(g.table.row(0), grad.row(0));
    for untouched in [1, 2, 4, 5] {
        assert!(g.table.row(untouched).iter().all(|&v| v == 0.0));
    }
    assert!(matches!(e.forward(&[6]), Err(NnError::TokenOutOfRange { token: 6, vocab: 6 })));
}

#[test]
fn embedding_gradients_match_finite_differences() {
    let mut r = rng(4);
    let e = Embedding::new(5, 3, &mut r);
    let tokens = [2, 4, 2];
    let w = random(3, 3, &mut r);
    let mut g = Embedding::zeros(5, 3);
    e.backward(&tokens, w.view(), &mut g).unwrap();
    let report = finite_diff_check(&e, &g, |p| weighted(&p.forward(&tokens).unwrap(), &w), None, H, &mut r);
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn lstm_zero_weights_stay_at_zero() {
    let cell = Lstm::zeros(3, 4);
    let mut r = rng(5);
    let x = random(2, 3, &mut r);
    let (s, _) = cell.step(x.view(), &LstmState::zeros(2, 4)).unwrap();
    assert!(s.h.iter().chain(s.c.iter()).all(|&v| v == 0.0));
}

#[test]
fn lstm_saturated_forget_gate_keeps_cell() {
    let mut cell = Lstm::zeros(3, 4);
    cell.bias.slice_mut(ndarray::s![4..8]).fill(20.0);
    let mut r = rng(6);
    let x = random(2, 3, &mut r);
    let prev = LstmState { h: random(2, 4, &mut r), c: random(2, 4, &mut r) };
    let (s, _) = cell.step(x.view(), &prev).unwrap();
    for (a, b) in s.c.iter().zip(prev.c.iter()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn lstm_forget_bias_initialised_to_one() {
    let cell = Lstm::new(3, 4, &mut rng(7));
    assert!(cell.bias.slice(ndarray::s![4..8]).iter().all(|&v| v == 1.0));
    assert_eq!(cell.w_ih.dim(), (16, 3));
    assert_eq!(cell.w_hh.dim(), (16, 4));
}

#[test]
fn lstm_non_finite_input_is_an_error() {
    let cell = Lstm::new(3, 4, &mut rng(8));
    let x = array![[f64::NAN, 0.0, 0.0]];
    assert!(matches!(cell.step(x.view(), &LstmState::zeros(1, 4)), Err(NnError::NonFinite(_))));
}

#[test]
fn lstm_gradients_match_finite_differences() {
    let mut r = rng(9);
    let cell = Lstm::new(3, 4, &mut r);
    let x = random(2, 3, &mut r);
    let prev = LstmState { h: random(2, 4, &mut r), c: random(2, 4, &mut r) };
    let (wh, wc) = (random(2, 4, &mut r), random(2, 4, &mut r));
    let loss = |cell: &Lstm, x: &Array2<f64>, s: &LstmState<f64>| {
        let (n, _) = cell.step(x.view(), s).unwrap();
        weighted(&n.h, &wh) + weighted(&n.c, &wc)
    };

    let (_, cache) = cell.step(x.view(), &prev).unwrap();
    let mut g = Lstm::zeros(3, 4);
    let (dx, dh, dc) = cell.step_backward(&cache, wh.view(), wc.view(), &mut g);
    let report = finite_diff_check(&cell, &g, |p| loss(p, &x, &prev), None, H, &mut r);
    assert!(report.max_rel_error < 1e-5, "{report:?}");

    let inputs = Inputs(vec![x.clone(), prev.h.clone(), prev.c.clone()]);
    let report = finite_diff_check(
        &inputs,
        &Inputs(vec![dx, dh, dc]),
        |p| loss(&cell, &p.0[0], &LstmState { h: p.0[1].clone(), c: p.0[2].clone() }),
        None,
        H,
        &mut r,
    );
    assert!(report.max_rel_error < 1e-5, "{report:?}");
}

#[test]
fn attention_identical_states_give_uniform_weights() {
    let mut r = rng(10);
    let att = Attention::new(4, &mut r);
    let state = random(1, 4, &mut r);
    let states = Array2::from_shape_fn((5, 4), |(_, j)| state[[0, j]]);
    let out = att.forward(random(1, 4, &mut r).view(), states.view()).unwrap();
    for &w in out.weights.iter() {
        assert!((w - 0.2).abs() < 1e-12);
    }
    for (c, s) in out.context.iter().zip(state.iter()) {
        assert!((c - s).abs() < 1e-12);
    }
}

#[test]
fn attention_single_state() {
    let mut r = rng(11);
    let att = Attention::new(4, &mut r);
    let states = random(1, 4, &mut r);
    let out = att.forward(random(1, 4, &mut r).view(), states.view()).unwrap();
    assert_eq!(out.weights, array![[1.0]]);
    assert_eq!(out.context, states);
}

#[test]
fn attention_rejects_empty_memory() {
    let att = Attention::zeros(4);
    assert!(matches!(att.memory(Array3::zeros((1, 0, 4))), Err(NnError::EmptySequence)));
}

#[test]
fn attention_matches_direct_formula() {
    let mut r = rng(12);
    let att = Attention::new(3, &mut r);
    let states = random(4, 3, &mut r);
    let q = random(1, 3, &mut r);
    let out = att.forward(q.view(), states.view()).unwrap();
    let scores: Vec<f64> = (0..4).map(|s| q.row(0).dot(&att.w_score.dot(&states.row(s)))).collect();
    let m = scores.iter().cloned().fold(f64::MIN, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    let a: Vec<f64> = scores.iter().map(|s| (s - m).exp() / z).collect();
    let mut ctx = Array1::zeros(3);
    for s in 0..4 {
        ctx.scaled_add(a[s], &states.row(s));
    }
    let joined: Array1<f64> = ctx.iter().chain(q.row(0).iter()).copied().collect();
    let expected = (att.w_combine.dot(&joined) + &att.b_combine).mapv(f64::tanh);
    for (x, y) in out.attentional.row(0).iter().zip(expected.iter()) {
        assert!((x - y).abs() < 1e-12);
    }
    for (x, y) in out.weights.row(0).iter().zip(&a) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn attention_gradients_match_finite_differences() {
    let mut r = rng(13);
    let att = Attention::new(4, &mut r);
    let states = Array3::from_shape_simple_fn((2, 5, 4), || r.gen_range(-1.0..1.0));
    let q = random(2, 4, &mut r);
    let w = random(2, 4, &mut r);
    let loss = |att: &Attention, q: &Array2<f64>, states: &Array3<f64>| {
        let mem = att.memory(states.clone()).unwrap();
        weighted(&att.step(q.view(), &mem).unwrap().0.attentional, &w)
    };

    let mem = att.memory(states.clone()).unwrap();
    let (_, cache) = att.step(q.view(), &mem).unwrap();
    let mut g = Attention::zeros(4);
    let mut gs = Array3::zeros((2, 5, 4));
    let mut gk = Array3::zeros((2, 5, 4));
    let dq = att.step_backward(&cache, &mem, w.view(), &mut gs, &mut gk, &mut g);
    att.memory_backward(&mem, gk.view(), &mut gs, &mut g);

    let report = finite_diff_check(&att, &g, |p| loss(p, &q, &states), None, H, &mut r);
    assert!(report.max_rel_error < 1e-5, "{report:?}");

    let flat_states = states.clone().into_shape_with_order((10, 4)).unwrap();
    let flat_grad = gs.into_shape_with_order((10, 4)).unwrap();
    let inputs = Inputs(vec![q.clone(), flat_states]);
    let report = finite_diff_check(
        &inputs,
        &Inputs(vec![dq, flat_grad]),
        |p| loss(&att, &p.0[0], &p.0[1].clone().into_shape_with_order((2, 5, 4)).unwrap()),
        None,
        H,
        &mut r,
    );
    assert!(report.max_rel_error < 1e-5, "{report:?}");
}

#[test]
fn cross_entropy_examples() {
    let (loss, _) = softmax_cross_entropy(Array1::<f64>::zeros(4).view(), 2).unwrap();
    assert!((loss - 4f64.ln()).abs() < 1e-15);

    let mut z = Array1::<f64>::zeros(6);
    z[3] = 50.0;
    let (loss, grad) = softmax_cross_entropy(z.view(), 3).unwrap();
    assert!(loss < 1e-20, "{loss}");
    assert!(grad.iter().all(|g| g.abs() < 1e-20));

    assert!(matches!(
        softmax_cross_entropy(z.view(), 6),
        Err(NnError::LabelOutOfRange { label: 6, classes: 6 })
    ));
    z[0] = f64::INFINITY;
    assert!(softmax_cross_entropy(z.view(), 3).is_err());
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut r = rng(14);
    let z = random(1, 10, &mut r);
    let (_, grad) = softmax_cross_entropy(z.row(0), 7).unwrap();
    let analytic = Inputs(vec![grad.insert_axis(Axis(0))]);
    let report =
        finite_diff_check(&Inputs(vec![z]), &analytic, |p| softmax_cross_entropy(p.0[0].row(0), 7).unwrap().0, None, H, &mut r);
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax(array![1.0, 3.0, 3.0, 2.0].view()), 1);
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant(
        z in prop::collection::vec(-30.0f64..30.0, 1..40),
        shift in -100.0f64..100.0,
    ) {
        let z = Array1::from(z);
        let p = softmax(z.view());
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        let q = softmax((&z + shift).view());
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inference_dropout_is_identity(rate in 0.0f64..0.99, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random(3, 7, &mut r);
        let d = Dropout::new(rate).unwrap();
        let (y, mask) = d.forward(x.view(), &mut r, false);
        prop_assert!(mask.is_none());
        prop_assert_eq!(y, x);
    }

    #[test]
    fn adam_ignores_zero_gradients(seed in any::<u64>(), steps in 1usize..5) {
        let mut r = rng(seed);
        let mut d = Dense::new(3, 2, &mut r);
        let before = d.clone();
        let mut adam = Adam::new(AdamConfig::default(), &d);
        for _ in 0..steps {
            adam.step(&mut d, &Dense::zeros(3, 2)).unwrap();
        }
        prop_assert_eq!(d, before);
        prop_assert_eq!(adam.t, steps as u64);
    }
}

#[test]
fn dropout_rate_zero_is_identity() {
    let mut r = rng(15);
    let x = random(4, 4, &mut r);
    let (y, _) = Dropout::new(0.0).unwrap().forward(x.view(), &mut r, true);
    assert_eq!(y, x);
}

#[test]
fn dropout_rejects_rate_one() {
    assert!(matches!(Dropout::new(1.0), Err(NnError::InvalidDropoutRate(_))));
    assert!(Dropout::new(-0.1).is_err());
}

#[test]
fn dropout_monte_carlo() {
    let mut r = rng(16);
    let x = Array2::<f64>::from_elem((1000, 1000), 1.5);
    let (y, _) = Dropout::new(0.2).unwrap().forward(x.view(), &mut r, true);
    let survivors = y.iter().filter(|&&v| v != 0.0).count() as f64 / 1e6;
    assert!((survivors - 0.8).abs() < 0.002, "{survivors}");
    assert!((y.mean().unwrap() - 1.5).abs() < 0.01);
    assert!(y.iter().all(|&v| v == 0.0 || (v - 1.875).abs() < 1e-12));
}

#[test]
fn dropout_backward_uses_mask() {
    let mut r = rng(17);
    let x = random(5, 5, &mut r);
    let d = Dropout::new(0.5).unwrap();
    let (y, mask) = d.forward(x.view(), &mut r, true);
    let g = Dropout::backward(&mask, Array2::ones((5, 5)));
    for ((yv, xv), gv) in y.iter().zip(x.iter()).zip(g.iter()) {
        assert!((yv - xv * gv).abs() < 1e-15);
    }
}

#[test]
fn adam_first_step() {
    let mut d = Dense { weight: array![[1.0]], bias: array![0.0] };
    let g = Dense { weight: array![[0.5]], bias: array![0.0] };
    let mut adam = Adam::new(AdamConfig::default(), &d);
    adam.step(&mut d, &g).unwrap();
    assert!((d.weight[[0, 0]] - 0.999).abs() < 1e-8);
    assert_eq!(d.bias[0], 0.0);
}

#[test]
fn adam_constant_gradient_steps_approach_learning_rate() {
    let mut d = Dense { weight: array![[0.0]], bias: array![0.0] };
    let g = Dense { weight: array![[1.0]], bias: array![0.0] };
    let mut adam = Adam::new(AdamConfig::default(), &d);
    let mut last = 0.0;
    let mut step = 0.0;
    for _ in 0..5000 {
        adam.step(&mut d, &g).unwrap();
        step = last - d.weight[[0, 0]];
        last = d.weight[[0, 0]];
    }
    // m_hat = v_hat = 1 exactly for a constant unit gradient.
    assert!((step - 1e-3 / (1.0 + 1e-8)).abs() < 1e-12, "{step}");
}

#[test]
fn adam_rejects_mismatched_gradients() {
    let mut d = Dense::zeros(3, 2);
    let mut adam = Adam::new(AdamConfig::default(), &d);
    assert!(matches!(adam.step(&mut d, &Dense::zeros(2, 2)), Err(NnError::ShapeMismatch { .. })));
}

#[test]
fn gradcheck_on_linear_function_is_exact() {
    let mut r = rng(18);
    let c = random(3, 4, &mut r);
    let p = Inputs(vec![random(3, 4, &mut r)]);
    let report = finite_diff_check(&p, &Inputs(vec![c.clone()]), |p| weighted(&p.0[0], &c), None, H, &mut r);
    assert!(report.max_rel_error < 1e-9, "{report:?}");
    assert_eq!(report.probed, 12);
    let report = finite_diff_check(&p, &Inputs(vec![c.clone()]), |p| weighted(&p.0[0], &c), Some(5), H, &mut r);
    assert_eq!(report.probed, 5);
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
}

#[test]
fn lstm_sequence_matches_repeated_steps() {
    let mut r = rng(40);
    let cell = Lstm::new(3, 4, &mut r);
    let xs = Array3::from_shape_simple_fn((5, 2, 3), || r.gen_range(-1.0..1.0));
    let init = LstmState { h: random(2, 4, &mut r), c: random(2, 4, &mut r) };
    let (hs, last, cache) = cell.forward_sequence(xs.view(), &init).unwrap();

    let mut state = init.clone();
    let mut caches = Vec::new();
    for t in 0..5 {
        let (next, c) = cell.step(xs.index_axis(Axis(0), t), &state).unwrap();
        for (a, b) in hs.index_axis(Axis(0), t).iter().zip(next.h.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        caches.push(c);
        state = next;
    }
    assert!((&last.c - &state.c).iter().all(|v| v.abs() < 1e-14));

    let gh = Array3::from_shape_simple_fn((5, 2, 4), || r.gen_range(-1.0..1.0));
    let (fh, fc) = (random(2, 4, &mut r), random(2, 4, &mut r));
    let mut g_seq = Lstm::zeros(3, 4);
    let (dxs, dh0, dc0) = cell.backward_sequence(&cache, gh.view(), (fh.view(), fc.view()), &mut g_seq);

    let mut g_step = Lstm::zeros(3, 4);
    let (mut dh, mut dc) = (fh.clone(), fc.clone());
    for t in (0..5).rev() {
        let total = &gh.index_axis(Axis(0), t) + &dh;
        let (dx, a, b) = cell.step_backward(&caches[t], total.view(), dc.view(), &mut g_step);
        for (x, y) in dxs.index_axis(Axis(0), t).iter().zip(dx.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        dh = a;
        dc = b;
    }
    assert!((&dh - &dh0).iter().chain((&dc - &dc0).iter()).all(|v| v.abs() < 1e-12));
    for ((_, a), (_, b)) in g_seq.tensors().iter().zip(g_step.tensors().iter()) {
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

#[test]
fn batched_attention_matches_single_steps() {
    let mut r = rng(41);
    let att = Attention::new(4, &mut r);
    let states = Array3::from_shape_simple_fn((2, 5, 4), || r.gen_range(-1.0..1.0));
    let mem = att.memory(states).unwrap();
    let queries = Array3::from_shape_simple_fn((3, 2, 4), || r.gen_range(-1.0..1.0));
    let (out, cache) = att.forward_all(queries.view(), &mem).unwrap();
    let upstream = Array3::from_shape_simple_fn((3, 2, 4), || r.gen_range(-1.0..1.0));

    let mut g_all = Attention::zeros(4);
    let (mut gs_all, mut gk_all) = (Array3::zeros((2, 5, 4)), Array3::zeros((2, 5, 4)));
    let dq_all = att.backward_all(&cache, &mem, upstream.view(), &mut gs_all, &mut gk_all, &mut g_all);

    let mut g_step = Attention::zeros(4);
    let (mut gs_step, mut gk_step) = (Array3::zeros((2, 5, 4)), Array3::zeros((2, 5, 4)));
    for k in 0..3 {
        let (o, c) = att.step(queries.index_axis(Axis(0), k), &mem).unwrap();
        for (x, y) in out.index_axis(Axis(0), k).iter().zip(o.attentional.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        let dq = att.step_backward(&c, &mem, upstream.index_axis(Axis(0), k), &mut gs_step, &mut gk_step, &mut g_step);
        for (x, y) in dq_all.index_axis(Axis(0), k).iter().zip(dq.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    assert!((&gs_all - &gs_step).iter().chain((&gk_all - &gk_step).iter()).all(|v| v.abs() < 1e-12));
    for ((_, a), (_, b)) in g_all.tensors().iter().zip(g_step.tensors().iter()) {
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}
