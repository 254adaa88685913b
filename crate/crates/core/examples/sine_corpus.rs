//! Generate a seeded sine corpus and write it as CSV.
//!
//! cargo run --release --example sine_corpus -- /tmp/sines

use std::path::PathBuf;

use tsgan::data::{dominant_bin, generate_sine_corpus, SineCorpusConfig};

fn main() -> tsgan::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sine-corpus".into()));
    std::fs::create_dir_all(&out).map_err(|e| tsgan::Error::io(&out, e))?;

    let cfg = SineCorpusConfig {
        n_train: 1000,
        n_test: 300,
        seed: 7,
        ..Default::default()
    };
    let (train, test) = generate_sine_corpus(&cfg)?;
    train.write_csv(&out.join("train.csv"), 0)?;
    test.write_csv(&out.join("test.csv"), 0)?;

    let mut bins = [0usize; 21];
    for w in train.iter() {
        bins[dominant_bin(w)] += 1;
    }
    println!("{} train / {} test waves of length {}", train.len(), test.len(), train.length());
    for (k, n) in bins.iter().enumerate().filter(|(_, n)| **n > 0) {
        println!("  dominant bin {k:2}: {n}");
    }
    Ok(())
}
