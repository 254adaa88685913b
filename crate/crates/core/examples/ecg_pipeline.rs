//! Turn single-beat ECG records into two-beat series, and cut beats out of
//! a raw signal.
//!
//! cargo run --release --example ecg_pipeline

use std::path::Path;

use tsgan::data::{
    detect_r_peaks, load_ecg_csv, preprocess_raw_windows, two_peak_corpus, RawSignalConfig, TwoPeakConfig,
    R_PEAK_THRESHOLD,
};

fn main() -> tsgan::Result<()> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ecg_fixture.csv");
    let records = load_ecg_csv(&fixture)?;
    let (corpus, skipped) = two_peak_corpus(&records, &TwoPeakConfig::default());
    println!("{} records -> {} two-beat series ({skipped} skipped)", records.len(), corpus.len());
    if let Some(first) = corpus.iter().next() {
        println!("first series: {} samples, peaks at {:?}", first.len(), detect_r_peaks(first, R_PEAK_THRESHOLD));
    }

    // A synthetic 360 Hz trace with a beat every 0.8 s.
    let signal: Vec<f64> = (0..360 * 20)
        .map(|i| {
            let phase = i % 288;
            if phase < 5 {
                1.0
            } else {
                0.1 * (i as f64 / 30.0).sin()
            }
        })
        .collect();
    let windows = preprocess_raw_windows(&signal, &RawSignalConfig::default())?;
    let beats: usize = windows.iter().map(|w| w.beats.len()).sum();
    println!("raw trace of {} samples -> {} windows, {beats} beats", signal.len(), windows.len());
    Ok(())
}
