mod common;

use common::ops::run_op_sweep;
use common::{assert_close, rng, uniform, weighted_sum};
use proptest::prelude::*;
use slotrte::autodiff::gradcheck::{check_gradients, check_param_gradients, GradCheckOptions};
use slotrte::autodiff::{gru_cell, GruParams, ParamGroup, ParamStore, Tape, Tensor};
use slotrte::Error;

const SEEDS: u64 = 100;
const TOL: f64 = 1e-4;

fn t(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

#[test]
fn matmul_examples() {
    let mut tape = Tape::new();
    let b = t(&[vec![3.0, -1.0], vec![0.5, 2.0]]);
    let i = tape.constant(Tensor::identity(2));
    let bv = tape.constant(b.clone());
    let c = tape.matmul(i, bv).unwrap();
    assert_eq!(tape.value(c), &b);

    let a = tape.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
    let p = tape.constant(t(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
    let c = tape.matmul(a, p).unwrap();
    assert_eq!(tape.value(c).values(), &[2.0, 1.0, 4.0, 3.0]);

    let bad = tape.constant(Tensor::zeros(&[3, 2]));
    assert!(matches!(tape.matmul(a, bad), Err(Error::Dimension { .. })));
}

#[test]
fn matmul_sum_gradient_matches_differences() {
    let mut r = rng(1);
    let a = uniform(&mut r, &[3, 4], -1.0, 1.0);
    let b = uniform(&mut r, &[4, 2], -1.0, 1.0);
    let rep = check_gradients(&[a, b], GradCheckOptions::default(), |tape, v| {
        let c = tape.matmul(v[0], v[1])?;
        Ok(tape.sum(c))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn elementwise_examples() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::scalar(0.0));
    let th = tape.tanh(z);
    let sg = tape.sigmoid(z);
    assert_eq!(tape.value(th).values()[0], 0.0);
    assert_eq!(tape.value(sg).values()[0], 0.5);

    let x = tape.constant(Tensor::scalar(2.5));
    let l = tape.log(x).unwrap();
    let e = tape.exp(l);
    assert_close(tape.value(e).values()[0], 2.5, 1e-15, "exp(log x)");

    let neg = tape.constant(Tensor::scalar(-1.0));
    assert!(matches!(tape.log(neg), Err(Error::Domain { .. })));
    let zero = tape.constant(Tensor::scalar(0.0));
    assert!(matches!(tape.log(zero), Err(Error::Domain { .. })));

    let a = tape.constant(Tensor::zeros(&[2, 2]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(tape.add(a, b), Err(Error::Dimension { .. })));
    assert!(matches!(tape.sub(a, b), Err(Error::Dimension { .. })));
    assert!(matches!(tape.mul(a, b), Err(Error::Dimension { .. })));
}

#[test]
fn tanh_gradient_at_point_seven() {
    let rep = check_gradients(&[Tensor::scalar(0.7)], GradCheckOptions::default(), |tape, v| {
        let y = tape.tanh(v[0]);
        Ok(tape.sum(y))
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
    // d/dx tanh = 1 − tanh²
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(0.7), true);
    let y = tape.tanh(x);
    let g = tape.gradients(y).unwrap();
    assert_close(g.get(x).unwrap()[0], 1.0 - 0.7f64.tanh().powi(2), 1e-15, "tanh'");
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(&[1, 4]));
    let s = tape.softmax_rows(z).unwrap();
    assert_eq!(tape.value(s).values(), &[0.25; 4]);

    let x = tape.constant(t(&[vec![0.0, 3f64.ln()]]));
    let s = tape.softmax_rows(x).unwrap();
    assert_close(tape.value(s).values()[0], 0.25, 1e-15, "p0");
    assert_close(tape.value(s).values()[1], 0.75, 1e-15, "p1");

    let nan = tape.constant(t(&[vec![0.0, f64::NAN]]));
    assert!(matches!(tape.softmax_rows(nan), Err(Error::Numeric(_))));

    // large logits stay finite thanks to max subtraction
    let big = tape.constant(t(&[vec![1000.0, 1000.0]]));
    let s = tape.softmax_rows(big).unwrap();
    assert_eq!(tape.value(s).values(), &[0.5, 0.5]);
}

#[test]
fn softmax_jvp_matches_differences() {
    let mut r = rng(2);
    let x = uniform(&mut r, &[3, 5], -1.0, 1.0);
    let w = uniform(&mut r, &[3, 5], -1.0, 1.0);
    let rep = check_gradients(&[x], GradCheckOptions::default(), |tape, v| {
        let s = tape.softmax_rows(v[0])?;
        weighted_sum(tape, s, &w)
    })
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

fn zero_gru(store: &mut ParamStore, d: usize) -> GruParams {
    let p = GruParams::init(store, "gru", d, ParamGroup::Decoder, &mut rng(0)).unwrap();
    for id in p.ids() {
        store.get_mut(id).value.values_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    p
}

#[test]
fn gru_zero_weights() {
    let mut store = ParamStore::new();
    let p = zero_gru(&mut store, 3);
    let mut tape = Tape::new();
    let h = t(&[vec![1.0, -2.0, 0.5], vec![4.0, 0.0, -1.0]]);
    let hv = tape.constant(h.clone());
    let x = tape.constant(Tensor::zeros(&[2, 3]));
    let out = gru_cell(&mut tape, &store, &p, hv, x).unwrap();
    for (o, h) in tape.value(out).values().iter().zip(h.values()) {
        assert_close(*o, 0.5 * h, 1e-15, "0.5 h_prev");
    }

    let h0 = tape.constant(Tensor::zeros(&[2, 3]));
    let out = gru_cell(&mut tape, &store, &p, h0, x).unwrap();
    assert!(tape.value(out).values().iter().all(|v| *v == 0.0));

    let wrong = tape.constant(Tensor::zeros(&[2, 4]));
    assert!(matches!(gru_cell(&mut tape, &store, &p, h0, wrong), Err(Error::Dimension { .. })));
}

/// Independent scalar-loop GRU for one row.
fn gru_oracle(store: &ParamStore, p: &GruParams, h: &[f64], x: &[f64]) -> Vec<f64> {
    let d = h.len();
    let lin = |w: slotrte::autodiff::ParamId, v: &[f64], j: usize| -> f64 {
        let m = &store.get(w).value;
        (0..d).map(|i| v[i] * m.get(i, j)).sum()
    };
    let b = |id: slotrte::autodiff::ParamId, j: usize| store.get(id).value.values()[j];
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let z: Vec<f64> = (0..d).map(|j| sig(lin(p.w_z, x, j) + lin(p.u_z, h, j) + b(p.b_z, j))).collect();
    let r: Vec<f64> = (0..d).map(|j| sig(lin(p.w_r, x, j) + lin(p.u_r, h, j) + b(p.b_r, j))).collect();
    let rh: Vec<f64> = (0..d).map(|j| r[j] * h[j]).collect();
    (0..d)
        .map(|j| {
            let cand = (lin(p.w_h, x, j) + lin(p.u_h, &rh, j) + b(p.b_h, j)).tanh();
            (1.0 - z[j]) * h[j] + z[j] * cand
        })
        .collect()
}

#[test]
fn gru_matches_scalar_oracle() {
    let mut r = rng(3);
    let mut store = ParamStore::new();
    let p = GruParams::init(&mut store, "gru", 4, ParamGroup::Decoder, &mut r).unwrap();
    for id in [p.b_z, p.b_r, p.b_h] {
        store.get_mut(id).value = uniform(&mut r, &[4], -0.5, 0.5);
    }
    let h = uniform(&mut r, &[3, 4], -1.0, 1.0);
    let x = uniform(&mut r, &[3, 4], -1.0, 1.0);
    let mut tape = Tape::new();
    let (hv, xv) = (tape.constant(h.clone()), tape.constant(x.clone()));
    let out = gru_cell(&mut tape, &store, &p, hv, xv).unwrap();
    for i in 0..3 {
        let want = gru_oracle(&store, &p, h.row(i), x.row(i));
        for (a, b) in tape.value(out).row(i).iter().zip(&want) {
            assert_close(*a, *b, 1e-12, "gru row");
        }
    }
}

#[test]
fn gru_gradients_all_blocks() {
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let mut store = ParamStore::new();
        let p = GruParams::init(&mut store, "gru", 3, ParamGroup::Decoder, &mut r).unwrap();
        for id in [p.b_z, p.b_r, p.b_h] {
            store.get_mut(id).value = uniform(&mut r, &[3], -0.5, 0.5);
        }
        let h = uniform(&mut r, &[2, 3], -1.0, 1.0);
        let x = uniform(&mut r, &[2, 3], -1.0, 1.0);
        let w = uniform(&mut r, &[2, 3], -1.0, 1.0);
        let ids = p.ids();
        let rep = check_param_gradients(&mut store, &ids, GradCheckOptions::default(), |tape, s| {
            let (hv, xv) = (tape.constant(h.clone()), tape.constant(x.clone()));
            let out = gru_cell(tape, s, &p, hv, xv)?;
            weighted_sum(tape, out, &w)
        })
        .unwrap();
        assert!(rep.max_rel_error < TOL, "seed {seed}: {rep:?}");
        assert_eq!(rep.checked, 6 * 9 + 3 * 3);
    }
}

#[test]
fn backward_examples() {
    let mut r = rng(4);
    let w = uniform(&mut r, &[3, 2], -1.0, 1.0);
    let mut store = ParamStore::new();
    let id = store.add("w", ParamGroup::Encoder, w.clone()).unwrap();

    let mut tape = Tape::new();
    let wv = tape.param(&store, id);
    let s = tape.sum(wv);
    tape.backward(s, &mut store).unwrap();
    assert!(store.get(id).grad.iter().all(|g| *g == 1.0));

    store.zero_grad();
    let mut tape = Tape::new();
    let wv = tape.param(&store, id);
    let sq = tape.mul(wv, wv).unwrap();
    let s = tape.sum(sq);
    let half = tape.scale(s, 0.5);
    tape.backward(half, &mut store).unwrap();
    for (g, v) in store.get(id).grad.iter().zip(w.values()) {
        assert_close(*g, *v, 1e-15, "grad of W⊙W/2");
    }

    assert!(matches!(tape.backward(sq, &mut store), Err(Error::Contract(_))));
}

#[test]
fn backward_accumulates_until_reset() {
    let mut r = rng(5);
    let mut store = ParamStore::new();
    let id = store.add("w", ParamGroup::Decoder, uniform(&mut r, &[2, 3], -1.0, 1.0)).unwrap();
    let x = uniform(&mut r, &[3, 2], -1.0, 1.0);
    let run = |store: &mut ParamStore| {
        let mut tape = Tape::new();
        let wv = tape.param(store, id);
        let xv = tape.constant(x.clone());
        let y = tape.matmul(wv, xv).unwrap();
        let y = tape.tanh(y);
        let s = tape.sum(y);
        tape.backward(s, store).unwrap();
    };
    run(&mut store);
    let once = store.get(id).grad.clone();
    run(&mut store);
    for (a, b) in store.get(id).grad.iter().zip(&once) {
        assert_close(*a, 2.0 * b, 1e-15, "accumulated");
    }
    store.zero_grad();
    run(&mut store);
    assert_eq!(store.get(id).grad, once, "reset then backward is bitwise identical");
}

#[test]
fn every_op_passes_gradcheck_over_100_seeds() {
    for (name, err) in run_op_sweep(SEEDS) {
        assert!(err < TOL, "{name}: max relative error {err}");
    }
}

#[test]
fn parameter_checkpoint_round_trip() {
    let mut r = rng(6);
    let mut store = ParamStore::new();
    store.add_uniform("a", ParamGroup::Encoder, &[2, 3], 0.5, &mut r).unwrap();
    store.add_uniform("b", ParamGroup::Decoder, &[4], 0.5, &mut r).unwrap();
    let json = serde_json::to_string(&store.to_named()).unwrap();
    let mut other = ParamStore::new();
    other.add_zeros("a", ParamGroup::Encoder, &[2, 3]).unwrap();
    other.add_zeros("b", ParamGroup::Decoder, &[4]).unwrap();
    other.load_named(&serde_json::from_str(&json).unwrap()).unwrap();
    for (x, y) in store.iter().zip(other.iter()) {
        assert_eq!(x.value, y.value);
    }
    let mut wrong = ParamStore::new();
    wrong.add_zeros("a", ParamGroup::Encoder, &[3, 2]).unwrap();
    assert!(wrong.load_named(&store.to_named()).is_err());
}

#[test]
fn tensor_rejects_bad_shapes() {
    assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    assert!(!Tensor::new(vec![2], vec![1.0, f64::INFINITY]).unwrap().all_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..9, seed in any::<u64>(), spread in 0.1f64..50.0) {
        let mut r = rng(seed);
        let x = uniform(&mut r, &[rows, cols], -spread, spread);
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let s = tape.softmax_rows(v).unwrap();
        for i in 0..rows {
            let row = tape.value(s).row(i);
            prop_assert!(row.iter().all(|p| *p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_standardizes(cols in 2usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = uniform(&mut r, &[3, cols], -5.0, 5.0);
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let y = tape.layer_norm_rows(v).unwrap();
        for i in 0..3 {
            let row = tape.value(y).row(i);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / cols as f64;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn matmul_matches_triple_loop(m in 1usize..5, p in 1usize..5, q in 1usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = uniform(&mut r, &[m, p], -1.0, 1.0);
        let b = uniform(&mut r, &[p, q], -1.0, 1.0);
        let mut tape = Tape::new();
        let (av, bv) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let c = tape.matmul(av, bv).unwrap();
        for i in 0..m {
            for j in 0..q {
                let want: f64 = (0..p).map(|l| a.get(i, l) * b.get(l, j)).sum();
                prop_assert!((tape.value(c).get(i, j) - want).abs() < 1e-12);
            }
        }
    }
}
