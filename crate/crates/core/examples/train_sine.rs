//! Train a small sine GAN and watch MMD² and DTW per epoch.
//!
//! cargo run --release --example train_sine -- 1cnn-bilstm-gan 5

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsgan::data::{generate_sine_corpus, SineCorpusConfig};
use tsgan::gan::{synthesize, train, EpochEval, Gan, Preset, TrainConfig};
use tsgan::metrics::{evaluate_epoch, EvalProtocol};

fn main() -> tsgan::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "1cnn-bilstm-gan".into());
    let preset = Preset::from_name(&preset).ok_or_else(|| tsgan::Error::config("preset", format!("unknown {preset}")))?;
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);

    let (train_set, test_set) = generate_sine_corpus(&SineCorpusConfig {
        n_train: 1000,
        n_test: 300,
        ..Default::default()
    })?;
    let mut gan = Gan::new(preset.spec(5), 0)?;
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::sine(0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let protocol = EvalProtocol::sine();
    let outcome = train(&mut gan, &cfg, &train_set, |ctx| {
        let synth = synthesize(&ctx.gan.generator, 300, &mut rng)?;
        let m = evaluate_epoch(&test_set, &synth, &protocol, &mut rng)?;
        println!(
            "epoch {:2}  g {:.3}  d {:.3}  mmd2 {:.3e}  dtw {:.3}",
            ctx.epoch, ctx.g_loss, ctx.d_loss, m.mmd2, m.dtw_mean
        );
        Ok(EpochEval {
            mmd2: m.mmd2,
            dtw_mean: m.dtw_mean,
            checkpoint_id: String::new(),
        })
    })?;
    println!("{} discriminator and {} generator updates", outcome.d_updates, outcome.g_updates);
    if let Some(f) = outcome.failure {
        println!("diverged: {f}");
    }
    Ok(())
}
