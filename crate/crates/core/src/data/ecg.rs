use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::read_labelled_csv;
use super::SeriesBatch;
use crate::error::{Error, Result};

pub const ECG_LENGTH: usize = 187;
pub const R_PEAK_THRESHOLD: f64 = 0.9;
pub const NORMAL_LABEL: i64 = 0;

/// One heartbeat series of length [`ECG_LENGTH`] with its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct EcgRecord {
    pub samples: Vec<f64>,
    pub label: i64,
}

impl EcgRecord {
    pub fn new(samples: Vec<f64>, label: i64) -> Result<Self> {
        if samples.len() != ECG_LENGTH {
            return Err(Error::ShapeMismatch {
                op: "ecg record",
                lhs: vec![ECG_LENGTH],
                rhs: vec![samples.len()],
            });
        }
        Ok(EcgRecord { samples, label })
    }
}

/// Loads a Kachuee-format CSV: 187 samples then a label on every row.
pub fn load_ecg_csv(path: &Path) -> Result<Vec<EcgRecord>> {
    let rows = read_labelled_csv(path, Some(ECG_LENGTH + 1))?;
    Ok(rows
        .rows
        .into_iter()
        .zip(rows.labels)
        .map(|(samples, label)| EcgRecord { samples, label })
        .collect())
}

/// Linear interpolation of `x` onto `n` evenly spaced points spanning the
/// same interval; the endpoints are kept.
pub fn resample_linear(x: &[f64], n: usize) -> Vec<f64> {
    match (x.len(), n) {
        (_, 0) | (0, _) => Vec::new(),
        (1, _) => vec![x[0]; n],
        (_, 1) => vec![x[0]],
        (len, _) => {
            let scale = (len - 1) as f64 / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    let p = i as f64 * scale;
                    let k = (p.floor() as usize).min(len - 2);
                    let f = p - k as f64;
                    x[k] * (1.0 - f) + x[k + 1] * f
                })
                .collect()
        }
    }
}

/// Indices of local maxima above `threshold`.
///
/// A maximum is a run of equal values whose neighbours on both sides are
/// strictly lower; a run touching an end of the series only needs its inner
/// neighbour to be lower. Runs report their first index, and a series that is
/// one flat run has no maxima.
pub fn detect_r_peaks(series: &[f64], threshold: f64) -> Vec<usize> {
    let n = series.len();
    let mut peaks = Vec::new();
    let mut s = 0;
    while s < n {
        let v = series[s];
        let mut e = s;
        while e + 1 < n && series[e + 1] == v {
            e += 1;
        }
        let left = s == 0 || series[s - 1] < v;
        let right = e == n - 1 || series[e + 1] < v;
        if v > threshold && left && right && !(s == 0 && e == n - 1) {
            peaks.push(s);
        }
        s = e + 1;
    }
    peaks
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoPeakConfig {
    pub target_length: usize,
    /// Shortest mean-valued block placed between the two copies.
    pub min_pad: usize,
}

impl Default for TwoPeakConfig {
    fn default() -> Self {
        TwoPeakConfig {
            target_length: ECG_LENGTH,
            min_pad: 4,
        }
    }
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Affine map of `x` onto `[lo, hi]`; constant input is left alone.
fn rescale(x: &mut [f64], lo: f64, hi: f64) {
    let (a, b) = min_max(x);
    if b > a {
        x.iter_mut().for_each(|v| *v = lo + (*v - a) / (b - a) * (hi - lo));
    }
}

/// Two beats from one: `[core, pad, core]` at the target length.
///
/// The trailing zero run is trimmed to leave the core, and the pad is the
/// core's mean repeated `max(min_pad, trimmed zeros)` times. The three blocks
/// are resampled separately in proportion to their lengths, and each resampled
/// core is mapped back onto the original core's range, so both copies keep
/// the original peak height.
pub fn make_two_peak(rec: &EcgRecord, cfg: &TwoPeakConfig) -> Result<EcgRecord> {
    let end = rec
        .samples
        .iter()
        .rposition(|&v| v != 0.0)
        .ok_or_else(|| Error::InsufficientData("record is all zeros".into()))?
        + 1;
    let core = &rec.samples[..end];
    let pad_len = (rec.samples.len() - end).max(cfg.min_pad);
    let total = (2 * end + pad_len) as f64;
    let t = cfg.target_length;
    if t < 3 {
        return Err(Error::config("two_peak.target_length", "must be at least 3"));
    }
    let a = ((t as f64 * end as f64 / total).round() as usize).clamp(1, (t - 1) / 2);
    let b = t - 2 * a;
    let mean = core.iter().sum::<f64>() / end as f64;
    let (lo, hi) = min_max(core);
    let mut half = resample_linear(core, a);
    rescale(&mut half, lo, hi);
    let mut out = Vec::with_capacity(t);
    out.extend_from_slice(&half);
    out.extend(std::iter::repeat_n(mean, b));
    out.extend_from_slice(&half);
    Ok(EcgRecord {
        samples: out,
        label: rec.label,
    })
}

/// Normal-class records turned into two-beat series; all-zero records are
/// skipped and counted.
pub fn two_peak_corpus(records: &[EcgRecord], cfg: &TwoPeakConfig) -> (SeriesBatch, usize) {
    let mut out = SeriesBatch::empty(cfg.target_length);
    let mut skipped = 0;
    for r in records.iter().filter(|r| r.label == NORMAL_LABEL) {
        match make_two_peak(r, cfg) {
            Ok(t) => out.push(&t.samples).expect("target length"),
            Err(_) => skipped += 1,
        }
    }
    (out, skipped)
}

/// Raw-signal ingestion settings. The sidecar JSON carries `source_hz` and
/// `gain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSignalConfig {
    #[serde(default = "default_source_hz")]
    pub source_hz: f64,
    #[serde(default = "default_target_hz")]
    pub target_hz: f64,
    #[serde(default = "default_window_s")]
    pub window_s: f64,
    /// ADC units per millivolt.
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_source_hz() -> f64 {
    360.0
}
fn default_target_hz() -> f64 {
    125.0
}
fn default_window_s() -> f64 {
    10.0
}
fn default_gain() -> f64 {
    200.0
}

impl Default for RawSignalConfig {
    fn default() -> Self {
        RawSignalConfig {
            source_hz: default_source_hz(),
            target_hz: default_target_hz(),
            window_s: default_window_s(),
            gain: default_gain(),
        }
    }
}

impl RawSignalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("source_hz", self.source_hz),
            ("target_hz", self.target_hz),
            ("window_s", self.window_s),
            ("gain", self.gain),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("raw.{name}"), "must be positive and finite"));
            }
        }
        if (self.target_hz * self.window_s).round() < 2.0 {
            return Err(Error::config("raw.window_s", "window must hold at least two samples"));
        }
        Ok(())
    }
}

/// A normalised window of the resampled signal and the beats cut from it.
#[derive(Clone, Debug, PartialEq)]
pub struct EcgWindow {
    pub values: Vec<f64>,
    pub peaks: Vec<usize>,
    /// Median R-R gap in samples.
    pub period: f64,
    pub beats: Vec<Vec<f64>>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Resamples `signal` between rates by linear interpolation on the time axis.
pub fn resample_rate(signal: &[f64], source_hz: f64, target_hz: f64) -> Vec<f64> {
    if signal.is_empty() {
        return Vec::new();
    }
    let duration = (signal.len() - 1) as f64 / source_hz;
    let n = (duration * target_hz).floor() as usize + 1;
    (0..n)
        .map(|k| {
            let p = k as f64 * source_hz / target_hz;
            let i = (p.floor() as usize).min(signal.len().saturating_sub(2));
            let f = p - i as f64;
            match signal.get(i + 1) {
                Some(&next) => signal[i] * (1.0 - f) + next * f,
                None => signal[i],
            }
        })
        .collect()
}

/// Raw single-lead signal to beats.
///
/// Removes the gain, resamples to the target rate, cuts non-overlapping
/// windows, min-max normalises each one and finds R-peaks. Windows with fewer
/// than two peaks are dropped. Every peak then starts a slice of
/// `ceil(1.2 T)` samples, `T` being the median R-R gap, cut short at the
/// window end and zero-padded or truncated to [`ECG_LENGTH`].
pub fn preprocess_raw_windows(signal: &[f64], cfg: &RawSignalConfig) -> Result<Vec<EcgWindow>> {
    cfg.validate()?;
    let scaled: Vec<f64> = signal.iter().map(|v| v / cfg.gain).collect();
    let resampled = resample_rate(&scaled, cfg.source_hz, cfg.target_hz);
    let width = (cfg.target_hz * cfg.window_s).round() as usize;
    let mut out = Vec::new();
    for chunk in resampled.chunks_exact(width) {
        let (lo, hi) = min_max(chunk);
        if hi <= lo {
            continue;
        }
        let values: Vec<f64> = chunk.iter().map(|v| (v - lo) / (hi - lo)).collect();
        let peaks = detect_r_peaks(&values, R_PEAK_THRESHOLD);
        if peaks.len() < 2 {
            continue;
        }
        let period = median(peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect());
        let span = (1.2 * period).ceil() as usize;
        let beats = peaks
            .iter()
            .map(|&p| {
                let mut beat = values[p..(p + span).min(width)].to_vec();
                beat.resize(ECG_LENGTH, 0.0);
                beat
            })
            .collect();
        out.push(EcgWindow {
            values,
            peaks,
            period,
            beats,
        });
    }
    Ok(out)
}
