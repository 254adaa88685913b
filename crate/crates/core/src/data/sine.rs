use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SeriesBatch;
use crate::error::{Error, Result};

/// Parameters of a random sine-wave corpus.
///
/// Each wave is `w[t] = A sin(ω t Δ + φ)` with `Δ = 2π / length`, so an
/// angular frequency `ω` gives `ω` full cycles over the window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SineCorpusConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub length: usize,
    pub amplitude: (f64, f64),
    pub frequency: (f64, f64),
    pub phase: (f64, f64),
    pub seed: u64,
}

impl Default for SineCorpusConfig {
    fn default() -> Self {
        SineCorpusConfig {
            n_train: 10_000,
            n_test: 3_000,
            length: 40,
            amplitude: (0.1, 0.9),
            frequency: (2.0, 6.0),
            phase: (-PI, PI),
            seed: 0,
        }
    }
}

impl SineCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::config("length", "must be at least 1"));
        }
        let ranges = [
            ("amplitude", self.amplitude),
            ("frequency", self.frequency),
            ("phase", self.phase),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::config(name, format!("range [{lo}, {hi}] must be finite with low <= high")));
            }
        }
        if self.amplitude.0 < 0.0 {
            return Err(Error::config("amplitude", "must be non-negative"));
        }
        Ok(())
    }

    /// Time step `Δ` between consecutive samples.
    pub fn step(&self) -> f64 {
        2.0 * PI / self.length as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineParams {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

pub fn sine_wave(p: SineParams, length: usize) -> Vec<f64> {
    let step = 2.0 * PI / length as f64;
    (0..length)
        .map(|t| p.amplitude * (p.frequency * t as f64 * step + p.phase).sin())
        .collect()
}

/// Draws `n` waves with their generating parameters.
pub fn sample_sines<R: Rng + ?Sized>(cfg: &SineCorpusConfig, n: usize, rng: &mut R) -> (SeriesBatch, Vec<SineParams>) {
    let mut batch = SeriesBatch::empty(cfg.length);
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let p = SineParams {
            amplitude: uniform(rng, cfg.amplitude),
            frequency: uniform(rng, cfg.frequency),
            phase: uniform(rng, cfg.phase),
        };
        batch.push(&sine_wave(p, cfg.length)).expect("length matches");
        params.push(p);
    }
    (batch, params)
}

/// Index of the largest-magnitude non-constant DFT bin, in `1..=len/2`.
///
/// For a wave from [`sine_wave`] this is the angular frequency rounded to a
/// neighbouring integer, since `ω` counts cycles per window.
pub fn dominant_bin(x: &[f64]) -> usize {
    let n = x.len();
    let mut best = (0, f64::NEG_INFINITY);
    for k in 1..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &v) in x.iter().enumerate() {
            let a = 2.0 * PI * (k * t) as f64 / n as f64;
            re += v * a.cos();
            im -= v * a.sin();
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (k, p);
        }
    }
    best.0
}

/// Seeded train/test sine corpora.
pub fn generate_sine_corpus(cfg: &SineCorpusConfig) -> Result<(SeriesBatch, SeriesBatch)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train, _) = sample_sines(cfg, cfg.n_train, &mut rng);
    let (test, _) = sample_sines(cfg, cfg.n_test, &mut rng);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Recovers (A, ω, φ) from x[t+1] + x[t-1] = 2 cos(ωΔ) x[t], then a
    // two-column least-squares fit for the sine and cosine weights.
    fn fit(x: &[f64], step: f64) -> (SineParams, f64) {
        let (mut num, mut den) = (0.0, 0.0);
        for t in 1..x.len() - 1 {
            num += x[t] * (x[t + 1] + x[t - 1]);
            den += 2.0 * x[t] * x[t];
        }
        let w = (num / den).clamp(-1.0, 1.0).acos() / step;
        let (mut ss, mut sc, mut cc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, &v) in x.iter().enumerate() {
            let (s, c) = (w * t as f64 * step).sin_cos();
            ss += s * s;
            sc += s * c;
            cc += c * c;
            xs += v * s;
            xc += v * c;
        }
        let det = ss * cc - sc * sc;
        let a = (xs * cc - xc * sc) / det;
        let b = (xc * ss - xs * sc) / det;
        let p = SineParams {
            amplitude: a.hypot(b),
            frequency: w,
            phase: b.atan2(a),
        };
        let resid = sine_wave(p, x.len())
            .iter()
            .zip(x)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max);
        (p, resid)
    }

    #[test]
    fn corpus_sizes_and_bounds() {
        let cfg = SineCorpusConfig::default();
        let (train, test) = generate_sine_corpus(&cfg).unwrap();
        assert_eq!((train.len(), test.len(), train.length()), (10_000, 3_000, 40));
        assert!(train.values().iter().chain(test.values()).all(|v| v.abs() <= 0.9));
    }

    #[test]
    fn every_wave_refits_inside_the_ranges() {
        let cfg = SineCorpusConfig {
            n_train: 500,
            n_test: 0,
            ..Default::default()
        };
        let (train, _) = generate_sine_corpus(&cfg).unwrap();
        for w in train.iter() {
            let (p, resid) = fit(w, cfg.step());
            assert!(resid < 1e-9, "{resid}");
            assert!((0.1 - 1e-9..=0.9 + 1e-9).contains(&p.amplitude), "{p:?}");
            assert!((2.0 - 1e-9..=6.0 + 1e-9).contains(&p.frequency), "{p:?}");
            let b = dominant_bin(w);
            assert!((2..=6).contains(&b), "bin {b} for {p:?}");
        }
    }

    #[test]
    fn seeded_corpus_repeats() {
        let cfg = SineCorpusConfig {
            n_train: 20,
            n_test: 5,
            seed: 42,
            ..Default::default()
        };
        assert_eq!(generate_sine_corpus(&cfg).unwrap(), generate_sine_corpus(&cfg).unwrap());
    }

    #[test]
    fn inverted_range_is_rejected() {
        let cfg = SineCorpusConfig {
            amplitude: (0.9, 0.1),
            ..Default::default()
        };
        let e = generate_sine_corpus(&cfg).unwrap_err();
        assert!(e.to_string().contains("amplitude"), "{e}");
    }

    #[test]
    fn integer_frequency_lands_on_its_bin() {
        for k in 1..=20 {
            let p = SineParams {
                amplitude: 0.5,
                frequency: k as f64,
                phase: 0.3,
            };
            assert_eq!(dominant_bin(&sine_wave(p, 40)), k);
        }
    }

    proptest! {
        #[test]
        fn fitted_parameters_match(a in 0.1f64..0.9, w in 2.0f64..6.0, phi in -3.1f64..3.1) {
            let p = SineParams { amplitude: a, frequency: w, phase: phi };
            let (q, resid) = fit(&sine_wave(p, 40), 2.0 * PI / 40.0);
            prop_assert!(resid < 1e-9);
            prop_assert!((q.amplitude - a).abs() < 1e-9 && (q.frequency - w).abs() < 1e-9);
        }
    }
}
