#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{check_gradients, GeometryMode, Graph, ParamStore, Tensor};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_lstm(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> LstmParams {
    let mut p = LstmParams::zeros(input, hidden);
    for t in [
        &mut p.w_f, &mut p.w_i, &mut p.w_o, &mut p.w_c, &mut p.u_f, &mut p.u_i, &mut p.u_o, &mut p.u_c, &mut p.b_f,
        &mut p.b_i, &mut p.b_o, &mut p.b_c,
    ] {
        *t = random(rng, t.shape());
    }
    p
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

// Scalar-loop LSTM, one gate and one unit at a time.
fn oracle_step(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let pre = |w: &Tensor, u: &Tensor, b: &Tensor, r: usize| {
        let mut s = b.data()[r];
        for (k, xk) in x.iter().enumerate() {
            s += w.at(&[r, k]) * xk;
        }
        for (k, hk) in h.iter().enumerate() {
            s += u.at(&[r, k]) * hk;
        }
        s
    };
    let n = h.len();
    let (mut h2, mut c2) = (vec![0.0; n], vec![0.0; n]);
    for r in 0..n {
        let f = sig(pre(&p.w_f, &p.u_f, &p.b_f, r));
        let i = sig(pre(&p.w_i, &p.u_i, &p.b_i, r));
        let o = sig(pre(&p.w_o, &p.u_o, &p.b_o, r));
        let cand = pre(&p.w_c, &p.u_c, &p.b_c, r).tanh();
        c2[r] = f * c[r] + i * cand;
        h2[r] = o * c2[r].tanh();
    }
    (h2, c2)
}

fn oracle_sequence(p: &LstmParams, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = p.hidden_size();
    let (mut h, mut c) = (vec![0.0; n], vec![0.0; n]);
    xs.iter()
        .map(|x| {
            (h, c) = oracle_step(p, x, &h, &c);
            h.clone()
        })
        .collect()
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.iter_rows().map(<[f64]>::to_vec).collect()
}

#[test]
fn lstm_zero_params() {
    let p = LstmParams::zeros(2, 3);
    let (h, c) = lstm_step(&p, &Tensor::vector(vec![0.7, -2.0]).unwrap(), &Tensor::zeros(&[3]), &Tensor::zeros(&[3])).unwrap();
    assert!(h.data().iter().chain(c.data()).all(|&v| v == 0.0));
    let seq = lstm_sequence(&p, &Tensor::full(&[4, 2], 0.3), &Tensor::zeros(&[3]), &Tensor::zeros(&[3])).unwrap();
    assert!(seq.data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_saturated_forget_gate_keeps_cell() {
    let mut p = LstmParams::zeros(1, 2);
    p.b_f = Tensor::full(&[2], 50.0);
    let c = Tensor::vector(vec![0.4, -0.8]).unwrap();
    let (_, c2) = lstm_step(&p, &Tensor::vector(vec![1.0]).unwrap(), &Tensor::zeros(&[2]), &c).unwrap();
    assert!(close(c2.data(), c.data(), 1e-12));
}

#[test]
fn lstm_step_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_lstm(&mut rng, 2, 3);
    let (x, h, c) = (random(&mut rng, &[2]), random(&mut rng, &[3]), random(&mut rng, &[3]));
    let (h2, c2) = lstm_step(&p, &x, &h, &c).unwrap();
    let (oh, oc) = oracle_step(&p, x.data(), h.data(), c.data());
    assert!(close(h2.data(), &oh, 1e-12) && close(c2.data(), &oc, 1e-12));
}

#[test]
fn lstm_sequence_matches_oracle_and_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = random_lstm(&mut rng, 2, 3);
    let xs = random(&mut rng, &[4, 2]);
    let z = Tensor::zeros(&[3]);
    let seq = lstm_sequence(&p, &xs, &z, &z).unwrap();
    for (got, want) in rows(&seq).iter().zip(oracle_sequence(&p, &rows(&xs))) {
        assert!(close(got, &want, 1e-12));
    }
    let one = lstm_sequence(&p, &xs.row(0).to_vec().pipe_row(), &z, &z).unwrap();
    let (h, _) = lstm_step(&p, &Tensor::vector(xs.row(0).to_vec()).unwrap(), &z, &z).unwrap();
    assert_eq!(one.data(), h.data());
}

trait PipeRow {
    fn pipe_row(self) -> Tensor;
}

impl PipeRow for Vec<f64> {
    fn pipe_row(self) -> Tensor {
        let n = self.len();
        Tensor::new(vec![1, n], self).unwrap()
    }
}

#[test]
fn lstm_packing_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_lstm(&mut rng, 3, 2);
    let mut store = ParamStore::new();
    let cell = p.register(&mut store, "c").unwrap();
    assert_eq!(cell.params(&store), p);
}

#[test]
fn bilstm_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = random_lstm(&mut rng, 1, 3);
    let pal = Tensor::new(vec![5, 1], vec![0.1, -0.4, 0.9, -0.4, 0.1]).unwrap();
    let out = bilstm_sequence(&p, &p, &pal).unwrap();
    for t in 0..5 {
        assert!(close(out.row(t), out.row(4 - t), 1e-12));
    }

    let xs = random(&mut rng, &[6, 1]);
    let zero = LstmParams::zeros(1, 3);
    let z = Tensor::zeros(&[3]);
    assert!(close(
        bilstm_sequence(&p, &zero, &xs).unwrap().data(),
        lstm_sequence(&p, &xs, &z, &z).unwrap().data(),
        1e-15
    ));
    assert!(bilstm_final_state(&zero, &zero, &xs).unwrap().data().iter().all(|&v| v == 0.0));
    assert!(bilstm_sequence(&p, &LstmParams::zeros(1, 2), &xs).is_err());
}

#[test]
fn bilstm_matches_compositional_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (f, b) = (random_lstm(&mut rng, 2, 3), random_lstm(&mut rng, 2, 3));
    let xs = random(&mut rng, &[5, 2]);
    let fwd = oracle_sequence(&f, &rows(&xs));
    let rev: Vec<Vec<f64>> = rows(&xs).into_iter().rev().collect();
    let bwd = oracle_sequence(&b, &rev);
    let got = bilstm_sequence(&f, &b, &xs).unwrap();
    for t in 0..5 {
        let want: Vec<f64> = fwd[t].iter().zip(&bwd[4 - t]).map(|(p, q)| p + q).collect();
        assert!(close(got.row(t), &want, 1e-12));
    }
    let fin = bilstm_final_state(&f, &b, &xs).unwrap();
    let want: Vec<f64> = fwd[4].iter().zip(&bwd[4]).map(|(p, q)| p + q).collect();
    assert!(close(fin.data(), &want, 1e-12));

    let x1 = xs.row(0).to_vec();
    let z = vec![0.0; 3];
    let (hf, _) = oracle_step(&f, &x1, &z, &z);
    let (hb, _) = oracle_step(&b, &x1, &z, &z);
    let one = bilstm_final_state(&f, &b, &x1.pipe_row()).unwrap();
    let want: Vec<f64> = hf.iter().zip(&hb).map(|(p, q)| p + q).collect();
    assert!(close(one.data(), &want, 1e-12));
}

// Direct cross-correlation with explicit zero padding.
fn oracle_conv(p: &Conv1dParams, x: &Tensor) -> Vec<Vec<f64>> {
    let (cin, w) = (x.shape()[0], x.shape()[1]);
    let (maps, k) = (p.maps(), p.kernel());
    let wout = p.output_len(w).unwrap();
    let mut out = vec![vec![0.0; wout]; maps];
    for f in 0..maps {
        for t in 0..wout {
            let mut s = p.bias.data()[f];
            for c in 0..cin {
                for j in 0..k {
                    let pos = (t * p.stride + j) as isize - p.padding as isize;
                    if pos >= 0 && (pos as usize) < w {
                        s += p.filters.at(&[f, c, j]) * x.at(&[c, pos as usize]);
                    }
                }
            }
            out[f][t] = s;
        }
    }
    out
}

#[test]
fn conv_examples() {
    let delta = Conv1dParams::new(
        Tensor::new(vec![1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap(),
        Tensor::zeros(&[1]),
        1,
        0,
        GeometryMode::Exact,
    )
    .unwrap();
    let x = Tensor::new(vec![1, 6], vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0]).unwrap();
    assert_eq!(conv1d(&delta, &x).unwrap().data(), &[1.0, 4.0, 1.0, 5.0]);
    assert_eq!(delta.output_len(40).unwrap(), 38);
    let padded = Conv1dParams { padding: 1, ..delta.clone() };
    assert_eq!(padded.output_len(187).unwrap(), 187);
    let strided = Conv1dParams { stride: 4, ..delta.clone() };
    assert!(matches!(strided.output_len(40), Err(crate::Error::Geometry { width: 40, .. })));
    assert!(Conv1dParams::new(Tensor::zeros(&[1, 1, 4]), Tensor::zeros(&[1]), 1, 0, GeometryMode::Exact).is_err());
}

#[test]
fn conv_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (cin, maps, k, s, pad, w) in [(1, 3, 3, 1, 0, 12), (2, 2, 5, 2, 2, 11), (3, 1, 1, 1, 0, 4)] {
        let p = Conv1dParams::new(random(&mut rng, &[maps, cin, k]), random(&mut rng, &[maps]), s, pad, GeometryMode::Exact)
            .unwrap();
        let x = random(&mut rng, &[cin, w]);
        let got = conv1d(&p, &x).unwrap();
        for (f, want) in oracle_conv(&p, &x).iter().enumerate() {
            assert!(close(got.row(f), want, 1e-12));
        }
    }
}

#[test]
fn pool_examples() {
    let x = Tensor::new(vec![1, 4], vec![1.0, 3.0, 2.0, 5.0]).unwrap();
    assert_eq!(maxpool1d(&x, 3, 2).unwrap().data(), &[3.0]);
    assert!(maxpool1d(&Tensor::full(&[2, 9], 0.4), 3, 2).unwrap().data().iter().all(|&v| v == 0.4));
    assert_eq!(maxpool1d(&Tensor::zeros(&[10, 38]), 3, 2).unwrap().shape(), &[10, 18]);
    assert!(maxpool1d(&x, 5, 1).is_err());
}

// Triple loop over i, j, b with the L1 distance written out.
fn oracle_mbd(p: &MinibatchDiscriminationParams, f: &Tensor) -> Vec<Vec<f64>> {
    let (n, a) = (f.shape()[0], f.shape()[1]);
    let (b, c) = (p.outputs(), p.kernel_dim());
    let m = |i: usize, bb: usize, cc: usize| (0..a).map(|k| f.at(&[i, k]) * p.t.at(&[k, bb, cc])).sum::<f64>();
    let mut out = vec![vec![0.0; b]; n];
    for i in 0..n {
        for j in 0..n {
            for bb in 0..b {
                let l1: f64 = (0..c).map(|cc| (m(i, bb, cc) - m(j, bb, cc)).abs()).sum();
                out[i][bb] += (-l1).exp();
            }
        }
    }
    out
}

#[test]
fn minibatch_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = MinibatchDiscriminationParams::init(4, 2, 2, &mut rng);
    let same = Tensor::from_rows(&[[0.1, 0.2, 0.3, 0.4]; 5]).unwrap();
    assert!(minibatch_discrimination(&p, &same).unwrap().data().iter().all(|&v| v == 5.0));
    let one = random(&mut rng, &[1, 4]);
    assert!(minibatch_discrimination(&p, &one).unwrap().data().iter().all(|&v| v == 1.0));
    let f = random(&mut rng, &[3, 4]);
    let got = minibatch_discrimination(&p, &f).unwrap();
    for (i, want) in oracle_mbd(&p, &f).iter().enumerate() {
        assert!(close(got.row(i), want, 1e-12));
    }
}

#[test]
fn minibatch_init_is_standard_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = MinibatchDiscriminationParams::init(50, 10, 20, &mut rng);
    let n = p.t.len() as f64;
    let mean = p.t.data().iter().sum::<f64>() / n;
    let var = p.t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.05 && (var - 1.0).abs() < 0.06, "{mean} {var}");
}

#[test]
fn dense_examples() {
    let x = Tensor::vector(vec![0.5, -1.5, 2.0]).unwrap();
    let id = DenseParams::new(Tensor::identity(3), Tensor::zeros(&[3]), Activation::None).unwrap();
    assert_eq!(dense(&id, &x).unwrap(), x);
    let zero = DenseParams::new(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2]), Activation::Sigmoid).unwrap();
    assert_eq!(dense(&zero, &x).unwrap().data(), &[0.5, 0.5]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = DenseParams::new(random(&mut rng, &[4, 3]), random(&mut rng, &[4]), Activation::Tanh).unwrap();
    let got = dense(&p, &x).unwrap();
    for r in 0..4 {
        let s: f64 = (0..3).map(|c| p.w.at(&[r, c]) * x.data()[c]).sum::<f64>() + p.b.data()[r];
        assert!((got.data()[r] - s.tanh()).abs() < 1e-12);
    }
    assert!(dense(&p, &Tensor::zeros(&[2])).is_err());
}

#[test]
fn init_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = LstmParams::init(4, 9, &mut rng);
    assert!(p.w_f.data().iter().all(|v| v.abs() <= 0.5));
    assert!(p.u_c.data().iter().all(|v| v.abs() <= 1.0 / 3.0));
    assert!(p.b_o.data().iter().all(|&v| v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_shift_equivariance(x in prop::collection::vec(-1.0f64..1.0, 10..20), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Conv1dParams::new(random(&mut rng, &[2, 1, 3]), random(&mut rng, &[2]), 1, 0, GeometryMode::Exact).unwrap();
        let n = x.len();
        let a = conv1d(&p, &Tensor::new(vec![1, n - 1], x[..n - 1].to_vec()).unwrap()).unwrap();
        let b = conv1d(&p, &Tensor::new(vec![1, n - 1], x[1..].to_vec()).unwrap()).unwrap();
        for f in 0..2 {
            prop_assert!(close(&a.row(f)[1..], &b.row(f)[..n - 4], 1e-12));
        }
    }

    #[test]
    fn pool_is_window_max(x in prop::collection::vec(-5.0f64..5.0, 6..30), window in 1usize..5, stride in 1usize..4) {
        let n = x.len();
        let y = maxpool1d(&Tensor::new(vec![1, n], x.clone()).unwrap(), window, stride).unwrap();
        prop_assert_eq!(y.len(), (n - window) / stride + 1);
        for (j, &v) in y.data().iter().enumerate() {
            let want = x[j * stride..j * stride + window].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(v, want);
        }
    }

    #[test]
    fn minibatch_bounds(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = MinibatchDiscriminationParams::init(3, 4, 2, &mut rng);
        let o = minibatch_discrimination(&p, &random(&mut rng, &[n, 3])).unwrap();
        prop_assert!(o.data().iter().all(|&v| (1.0..=n as f64 + 1e-12).contains(&v)));
    }

    #[test]
    fn layer_gradients(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let cell = random_lstm(&mut rng, 2, 3).register(&mut store, "lstm").unwrap();
        let bi = BiLstm::new(
            random_lstm(&mut rng, 2, 3).register(&mut store, "f").unwrap(),
            random_lstm(&mut rng, 2, 3).register(&mut store, "b").unwrap(),
        ).unwrap();
        let conv = Conv1dParams::new(random(&mut rng, &[2, 1, 3]), random(&mut rng, &[2]), 1, 1, GeometryMode::Exact)
            .unwrap()
            .register(&mut store, "conv");
        let mbd = MinibatchDiscriminationParams::init(3, 2, 2, &mut rng).register(&mut store, "mbd").unwrap();
        let head = DenseParams::new(random(&mut rng, &[1, 5]), random(&mut rng, &[1]), Activation::Sigmoid)
            .unwrap()
            .register(&mut store, "head");
        let xs: Vec<Tensor> = (0..3).map(|_| random(&mut rng, &[2, 2])).collect();
        let sig = random(&mut rng, &[2, 1, 6]);
        let report = check_gradients(
            &mut store,
            |g: &mut Graph, s: &ParamStore| {
                let steps: Vec<_> = xs.iter().map(|x| g.constant(x.clone())).collect();
                let (hs, _) = cell.sequence(g, s, &steps)?;
                let bs = bi.sequence(g, s, &hs[..1].iter().chain(&steps[1..]).copied().collect::<Vec<_>>())
                    .or_else(|_| bi.sequence(g, s, &steps))?;
                let x = g.constant(sig.clone());
                let c = conv.forward(g, s, x)?;
                let c = g.reshape(c, &[2, 12])?;
                let c = g.slice(c, 1, 0, 3)?;
                let f = g.add(c, bs[2])?;
                let f = g.slice(f, 1, 0, 3)?;
                let o = mbd.forward(g, s, f)?;
                let p = head.forward(g, s, o)?;
                g.sum(p)
            },
            1e-5,
            1e-3,
            1e-6,
        ).unwrap();
        prop_assert!(report.passed(), "{report:?}");
    }
}
