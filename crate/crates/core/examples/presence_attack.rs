//! Presence-disclosure audit against a leaky and an independent synthetic set.
//!
//! cargo run --release --example presence_attack

use tsgan::data::{generate_sine_corpus, SineCorpusConfig};
use tsgan::privacy::{presence_disclosure, AttackConfig};

fn main() -> tsgan::Result<()> {
    let corpus = |seed| {
        generate_sine_corpus(&SineCorpusConfig {
            n_train: 2000,
            n_test: 600,
            seed,
            ..Default::default()
        })
    };
    let (train, test) = corpus(0)?;
    let (independent, _) = corpus(1)?;
    let grid = AttackConfig {
        r_values: vec![100, 400],
        epsilon_fractions: vec![0.1, 0.3],
        ..AttackConfig::sine(0)
    };
    for (name, synth) in [("copy of train", &train), ("independent", &independent)] {
        let report = presence_disclosure(&train, &test, synth, &grid)?;
        println!("{name}: mean pairwise distance {:.4}", report.mean_distance);
        for c in &report.cells {
            let precision = c.precision.map_or("n/a".to_string(), |p| format!("{p:.3}"));
            println!("  r {:4}  eps {:.2}  precision {precision}  recall {:.3}", c.r, c.eps_fraction, c.recall);
        }
    }
    Ok(())
}
