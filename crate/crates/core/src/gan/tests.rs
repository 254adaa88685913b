use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Graph, ParamStore, Tensor};
use crate::data::{generate_sine_corpus, SeriesBatch, SineCorpusConfig};
use crate::layers::{bilstm_final_state, bilstm_sequence, lstm_sequence, Dense};

fn zero_all(store: &mut ParamStore) {
    for p in store.params_mut() {
        p.value.data_mut().fill(0.0);
    }
}

fn small(kind: GeneratorKind, t: usize) -> GeneratorSpec {
    GeneratorSpec {
        kind,
        layers: 2,
        hidden: 4,
        length: t,
    }
}

// Dense head from the store, applied to one feature vector.
fn head_apply(head: &Dense, store: &ParamStore, h: &[f64]) -> Vec<f64> {
    let w = store.value(head.weight_id());
    let b = store.value(head.bias_id());
    (0..head.output)
        .map(|o| b.data()[o] + h.iter().enumerate().map(|(k, v)| v * w.at(&[k, o])).sum::<f64>())
        .collect()
}

fn oracle_generate(gen: &Generator, z: &Tensor) -> Vec<Vec<f64>> {
    let cells = gen.body_cells();
    let zero = Tensor::zeros(&[gen.spec.hidden]);
    z.iter_rows()
        .map(|row| {
            let mut xs = Tensor::new(vec![row.len(), 1], row.to_vec()).unwrap();
            match gen.spec.kind {
                GeneratorKind::Lstm => {
                    for (cell, _) in &cells {
                        xs = lstm_sequence(&cell.params(&gen.store), &xs, &zero, &zero).unwrap();
                    }
                    xs.iter_rows().map(|h| head_apply(gen.head(), &gen.store, h)[0]).collect()
                }
                GeneratorKind::Bilstm => {
                    let (last, inner) = cells.split_last().unwrap();
                    for (f, b) in inner {
                        xs = bilstm_sequence(&f.params(&gen.store), &b.unwrap().params(&gen.store), &xs).unwrap();
                    }
                    let s = bilstm_final_state(&last.0.params(&gen.store), &last.1.unwrap().params(&gen.store), &xs)
                        .unwrap();
                    head_apply(gen.head(), &gen.store, s.data())
                }
            }
        })
        .collect()
}

#[test]
fn noise_is_standard_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z = sample_noise(1000, 1000, &mut rng);
    let n = z.len() as f64;
    let mean = z.data().iter().sum::<f64>() / n;
    let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 5e-3 && (var - 1.0).abs() < 1e-2, "{mean} {var}");
}

#[test]
fn generator_shapes_and_zero_params() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in [GeneratorKind::Lstm, GeneratorKind::Bilstm] {
        let mut gen = Generator::new(GeneratorSpec::new(kind, 40), 3).unwrap();
        let z = sample_noise(3, 40, &mut rng);
        assert_eq!(gen.generate(&z).unwrap().shape(), &[3, 40]);
        assert!(gen.generate(&sample_noise(3, 39, &mut rng)).is_err());
        zero_all(&mut gen.store);
        assert!(gen.generate(&z).unwrap().data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn generator_matches_composed_layers() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in [GeneratorKind::Lstm, GeneratorKind::Bilstm] {
        let gen = Generator::new(small(kind, 8), 5).unwrap();
        let z = sample_noise(3, 8, &mut rng);
        let got = gen.generate(&z).unwrap();
        for (i, want) in oracle_generate(&gen, &z).iter().enumerate() {
            for (a, b) in got.row(i).iter().zip(want) {
                assert!((a - b).abs() < 1e-12, "{kind:?} {a} {b}");
            }
        }
    }
}

#[test]
fn zero_head_gives_one_half() {
    for preset in [Preset::LstmGan, Preset::TwoCnnGan, Preset::FourCnnGan] {
        let mut d = Discriminator::new(preset.spec(5).discriminator, 0).unwrap();
        for id in [d.head().weight_id(), d.head().bias_id()] {
            d.store.value_mut(id).data_mut().fill(0.0);
        }
        let x = sample_noise(4, preset.series_length(), &mut ChaCha8Rng::seed_from_u64(1));
        assert!(d.discriminate(&x).unwrap().iter().all(|&p| p == 0.5));
    }
}

#[test]
fn duplicate_rows_score_equally() {
    let d = Discriminator::new(Preset::OneCnnGan.spec(5).discriminator, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let row: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let other: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x = Tensor::from_rows(&[row.clone(), other, row]).unwrap();
    let p = d.discriminate(&x).unwrap();
    assert_eq!(p[0], p[2]);
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn permuting_the_batch_permutes_the_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = sample_noise(6, 40, &mut rng);
    let perm = [3, 0, 5, 1, 4, 2];
    let px = Tensor::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    for b in [0, 5] {
        for preset in [Preset::LstmGan, Preset::TwoCnnGan] {
            let d = Discriminator::new(preset.spec(b).discriminator, 1).unwrap();
            let (p, q) = (d.discriminate(&x).unwrap(), d.discriminate(&px).unwrap());
            for (k, &i) in perm.iter().enumerate() {
                assert!((q[k] - p[i]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn conv_stacks_trace_their_shapes() {
    let trace = |p: Preset| -> Vec<String> {
        let spec = p.spec(0).discriminator;
        let t = spec.shape_trace().unwrap();
        let d = Discriminator::new(spec, 0).unwrap();
        let real: Vec<(usize, usize)> = t[1..].iter().map(|s| (s.channels, s.length)).collect();
        assert_eq!(d.realised_trace().unwrap(), real);
        t.iter().map(ToString::to_string).collect()
    };
    assert_eq!(trace(Preset::OneCnnGan), ["1*40", "10*38", "10*18"]);
    assert_eq!(trace(Preset::TwoCnnGan), ["1*40", "10*38", "10*18", "5*16", "5*7"]);
    assert_eq!(
        trace(Preset::FourCnnGan),
        ["1*187", "3*185", "3*185", "5*181", "5*90", "8*44", "8*21", "12*8", "12*2"]
    );
    assert_eq!(ECG_STACK_CORRECTIONS.len(), 7);
}

#[test]
fn preset_table() {
    let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
    assert_eq!(
        names,
        ["lstm-gan", "1cnn-gan", "2cnn-gan", "1cnn-bilstm-gan", "2cnn-bilstm-gan", "4cnn-gan", "4cnn-bilstm-gan"]
    );
    for p in Preset::ALL {
        assert_eq!(Preset::from_name(p.name()), Some(p));
        let spec = p.spec(3);
        spec.validate().unwrap();
        assert_eq!(spec.generator.length, p.series_length());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, format!("\"{}\"", p.name()));
    }
    assert_eq!(Preset::from_name("3cnn-gan"), None);
    let s = TrainConfig::sine(0);
    let e = TrainConfig::ecg(0);
    assert_eq!((s.epochs, s.batch_size, e.epochs, e.batch_size), (120, 50, 60, 119));
    assert_eq!((s.learning_rate, s.d_steps), (2e-4, 2));
}

#[test]
fn loss_values() {
    let ln2 = std::f64::consts::LN_2;
    assert!((d_loss(&[0.5, 0.5], &[0.5]) - 2.0 * ln2).abs() < 1e-15);
    assert!((d_loss(&[1.0], &[0.0]) - 2e-7).abs() < 1e-12);
    assert!((g_loss(&[0.5; 3]) - ln2).abs() < 1e-15);
    assert!(g_loss(&[0.0]).is_finite() && d_loss(&[0.0], &[1.0]).is_finite());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pr: Vec<f64> = (0..7).map(|_| rng.random()).collect();
    let pf: Vec<f64> = (0..7).map(|_| rng.random()).collect();
    let mut g = Graph::new();
    let r = g.constant(Tensor::new(vec![7, 1], pr.clone()).unwrap());
    let f = g.constant(Tensor::new(vec![7, 1], pf.clone()).unwrap());
    let dl = d_loss_graph(&mut g, r, f).unwrap();
    let gl = g_loss_graph(&mut g, f).unwrap();
    let want_d = -pr.iter().map(|p| p.ln()).sum::<f64>() / 7.0 - pf.iter().map(|p| (1.0 - p).ln()).sum::<f64>() / 7.0;
    assert!((g.value(dl).item() - want_d).abs() < 1e-12);
    assert!((g.value(gl).item() - g_loss(&pf)).abs() < 1e-12);
}

fn scalar_store(x: f64) -> ParamStore {
    let mut s = ParamStore::new();
    s.add("x", Tensor::scalar(x));
    s
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let mut s = scalar_store(1.5);
    let mut st = AdamState::new(&s);
    for _ in 0..3 {
        adam_step(&mut s, &mut st, &AdamConfig::default());
    }
    assert_eq!(s.params()[0].value.item(), 1.5);
}

#[test]
fn adam_matches_scalar_recursion() {
    let cfg = AdamConfig::default();
    let grads = [0.3, -1.2, 0.05, 2.0, -0.7];
    let mut s = scalar_store(0.25);
    let mut st = AdamState::new(&s);
    let (mut x, mut m, mut v) = (0.25f64, 0.0f64, 0.0f64);
    for (k, &gr) in grads.iter().enumerate() {
        s.params_mut()[0].grad[0] = gr;
        let before = s.params()[0].value.item();
        adam_step(&mut s, &mut st, &cfg);
        let after = s.params()[0].value.item();
        assert!((after - before).abs() <= cfg.learning_rate * (1.0 + 1e-6) * if k == 0 { 1.0 } else { 3.2 });

        m = 0.9 * m + 0.1 * gr;
        v = 0.999 * v + 0.001 * gr * gr;
        let t = (k + 1) as i32;
        let mh = m / (1.0 - 0.9f64.powi(t));
        let vh = v / (1.0 - 0.999f64.powi(t));
        x -= 2e-4 * mh / (vh.sqrt() + 1e-8);
        assert!((after - x).abs() < 1e-15, "step {k}: {after} vs {x}");
    }
    assert_eq!(st.t, 5);
}

fn tiny_run(seed: u64, epochs: usize, batches: usize, d_steps: usize) -> (TrainOutcome, Gan) {
    let mut spec = Preset::OneCnnGan.spec(3);
    spec.generator.hidden = 6;
    let mut gan = Gan::new(spec, seed).unwrap();
    let data = SineCorpusConfig {
        n_train: 60,
        n_test: 0,
        ..Default::default()
    };
    let (train_set, _) = generate_sine_corpus(&data).unwrap();
    let cfg = TrainConfig {
        epochs,
        batch_size: 20,
        d_steps,
        max_batches: Some(batches),
        ..TrainConfig::sine(seed)
    };
    let mut seen = Vec::new();
    let out = train(&mut gan, &cfg, &train_set, |ctx| {
        seen.push(ctx.epoch);
        Ok(EpochEval {
            mmd2: ctx.g_loss,
            dtw_mean: 0.0,
            checkpoint_id: format!("e{}", ctx.epoch),
        })
    })
    .unwrap();
    assert_eq!(seen, (1..=epochs).collect::<Vec<_>>());
    (out, gan)
}

#[test]
fn single_batch_epoch_counts_updates() {
    let (out, _) = tiny_run(0, 1, 1, 1);
    assert_eq!((out.d_updates, out.g_updates), (1, 1));
    let (out, _) = tiny_run(0, 2, 3, 2);
    assert_eq!((out.d_updates, out.g_updates), (12, 6));
    assert!(!out.failed());
    assert_eq!(out.reports[1].checkpoint_id, "e2");
    assert!(out.reports.iter().all(|r| r.g_loss.is_finite() && r.d_loss > 0.0));
}

#[test]
fn training_is_deterministic() {
    let (a, ga) = tiny_run(7, 2, 2, 2);
    let (b, gb) = tiny_run(7, 2, 2, 2);
    assert_eq!(a.reports, b.reports);
    let values = |g: &Gan| g.generator.store.params().iter().map(|p| p.value.clone()).collect::<Vec<_>>();
    assert_eq!(values(&ga), values(&gb));
    let (c, _) = tiny_run(8, 2, 2, 2);
    assert_ne!(a.reports, c.reports);
}

#[test]
fn training_updates_both_players() {
    let mut spec = Preset::OneCnnGan.spec(3);
    spec.generator.hidden = 6;
    let before = Gan::new(spec, 1).unwrap();
    let (_, after) = tiny_run(1, 1, 1, 1);
    let differs = |a: &ParamStore, b: &ParamStore| a.params().iter().zip(b.params()).any(|(p, q)| p.value != q.value);
    assert!(differs(&before.generator.store, &after.generator.store));
    assert!(differs(&before.discriminator.store, &after.discriminator.store));
    assert!(after.discriminator.store.is_trainable());
}

#[test]
fn train_rejects_bad_input() {
    let mut gan = Gan::new(Preset::OneCnnGan.spec(0), 0).unwrap();
    let cfg = TrainConfig::sine(0);
    let hook = |_: &EpochContext<'_>| Ok(EpochEval::default());
    assert!(train(&mut gan, &cfg, &SeriesBatch::empty(40), hook).is_err());
    assert!(train(&mut gan, &cfg, &SeriesBatch::new(39, vec![0.0; 39 * 60]).unwrap(), hook).is_err());
    let bad = TrainConfig { d_steps: 0, ..cfg };
    assert!(train(&mut gan, &bad, &SeriesBatch::new(40, vec![0.0; 40 * 60]).unwrap(), hook).is_err());
}
