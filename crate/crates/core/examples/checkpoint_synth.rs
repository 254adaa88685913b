//! Save a checkpoint, reload it and synthesise from the restored generator.
//!
//! cargo run --release --example checkpoint_synth

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsgan::data::{generate_sine_corpus, SineCorpusConfig};
use tsgan::gan::{synthesize, train, Checkpoint, EpochEval, Gan, Preset, TrainConfig};

fn main() -> tsgan::Result<()> {
    let (train_set, _) = generate_sine_corpus(&SineCorpusConfig {
        n_train: 400,
        n_test: 0,
        ..Default::default()
    })?;
    let preset = Preset::OneCnnBilstmGan;
    let mut gan = Gan::new(preset.spec(0), 3)?;
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::sine(3)
    };
    train(&mut gan, &cfg, &train_set, |_| Ok(EpochEval::default()))?;

    let dir = std::env::temp_dir().join("tsgan-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| tsgan::Error::io(&dir, e))?;
    let path = dir.join("epoch-001.json");
    let id = Checkpoint::capture(&gan, Some(preset.name().into()), 1).save(&path)?;
    println!("saved {} (id {id})", path.display());

    let restored = Checkpoint::load(&path)?.restore()?;
    let a = synthesize(&gan.generator, 5, &mut ChaCha8Rng::seed_from_u64(9))?;
    let b = synthesize(&restored.generator, 5, &mut ChaCha8Rng::seed_from_u64(9))?;
    println!("restored generator reproduces output: {}", a == b);
    for row in b.iter().take(2) {
        let head: Vec<String> = row.iter().take(8).map(|v| format!("{v:+.3}")).collect();
        println!("  {} ...", head.join(" "));
    }
    Ok(())
}
