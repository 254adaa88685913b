//! Corpus construction: sine waves, the two-beat ECG pipeline, CSV I/O and
//! seeded batching.

mod ecg;
mod io;
mod series;
mod sine;

pub use ecg::{
    detect_r_peaks, load_ecg_csv, make_two_peak, preprocess_raw_windows, resample_linear, resample_rate,
    two_peak_corpus, EcgRecord, EcgWindow, RawSignalConfig, TwoPeakConfig, ECG_LENGTH, NORMAL_LABEL,
    R_PEAK_THRESHOLD,
};
pub use io::{read_labelled_csv, read_series_csv, LabelledRows};
pub use series::{batch_indices, batch_iterator, format_value, SeriesBatch};
pub use sine::{dominant_bin, generate_sine_corpus, sample_sines, sine_wave, SineCorpusConfig, SineParams};
