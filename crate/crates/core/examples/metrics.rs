//! MMD² and DTW on hand-made samples.
//!
//! cargo run --release --example metrics

use tsgan::data::{sine_wave, SeriesBatch, SineParams};
use tsgan::metrics::{dtw_exact, fastdtw, mmd2_unbiased, KernelConfig, DEFAULT_RADIUS};

fn family(frequency: f64) -> tsgan::Result<SeriesBatch> {
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|i| {
            sine_wave(
                SineParams {
                    amplitude: 0.5,
                    frequency,
                    phase: i as f64 * 0.12 - 3.0,
                },
                40,
            )
        })
        .collect();
    SeriesBatch::from_rows(40, &rows)
}

fn main() -> tsgan::Result<()> {
    let (slow, fast) = (family(2.0)?, family(5.0)?);
    let kernel = KernelConfig::default();
    let even: Vec<usize> = (0..50).step_by(2).collect();
    let odd: Vec<usize> = (1..50).step_by(2).collect();
    println!("mmd2(slow even, slow odd) = {:.4e}", mmd2_unbiased(&slow.select(&even), &slow.select(&odd), &kernel)?);
    println!("mmd2(slow, fast) = {:.4e}", mmd2_unbiased(&slow, &fast, &kernel)?);

    let (a, b) = (slow.row(0), slow.row(5));
    println!("dtw exact {:.4}, fastdtw {:.4}", dtw_exact(a, b)?, fastdtw(a, b, DEFAULT_RADIUS)?);
    let (a, b) = (slow.row(0), fast.row(0));
    println!("dtw exact {:.4}, fastdtw {:.4}", dtw_exact(a, b)?, fastdtw(a, b, DEFAULT_RADIUS)?);
    Ok(())
}
