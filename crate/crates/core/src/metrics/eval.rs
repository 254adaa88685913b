use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dtw::{fastdtw, DEFAULT_RADIUS};
use super::mmd::{mmd2_unbiased, KernelConfig};
use crate::data::SeriesBatch;
use crate::error::{Error, Result};

/// How DTW pairs test rows with synthetic rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Each side is subsampled independently and rows are paired by position.
    #[default]
    Shuffled,
    /// One index sample is applied to both sides, so row `i` meets row `i`.
    Aligned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub mmd_fraction: f64,
    pub dtw_fraction: f64,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default = "default_radius")]
    pub radius: usize,
    #[serde(default)]
    pub kernel: KernelConfig,
}

fn default_radius() -> usize {
    DEFAULT_RADIUS
}

impl EvalProtocol {
    /// MMD on everything, DTW on 13%.
    pub fn sine() -> Self {
        EvalProtocol {
            mmd_fraction: 1.0,
            dtw_fraction: 0.13,
            pairing: Pairing::Shuffled,
            radius: DEFAULT_RADIUS,
            kernel: KernelConfig::default(),
        }
    }

    /// MMD on 65%, DTW on 13%.
    pub fn ecg() -> Self {
        EvalProtocol {
            mmd_fraction: 0.65,
            ..Self::sine()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("mmd_fraction", self.mmd_fraction), ("dtw_fraction", self.dtw_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::config(name, format!("{f} is outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub mmd2: f64,
    pub dtw_mean: f64,
    pub mmd_fraction: f64,
    pub dtw_fraction: f64,
    pub mmd_rows: (usize, usize),
    pub dtw_pairs: usize,
}

fn count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n.max(1))
}

fn subsample<R: Rng + ?Sized>(b: &SeriesBatch, fraction: f64, rng: &mut R) -> SeriesBatch {
    b.select(&sample(rng, b.len(), count(b.len(), fraction)).into_vec())
}

/// Scores `synth` against `test` under `protocol`.
pub fn evaluate_epoch<R: Rng + ?Sized>(
    test: &SeriesBatch,
    synth: &SeriesBatch,
    protocol: &EvalProtocol,
    rng: &mut R,
) -> Result<MetricsRecord> {
    protocol.validate()?;
    if test.is_empty() || synth.is_empty() {
        return Err(Error::InsufficientData("evaluation needs non-empty test and synthetic sets".into()));
    }
    let (xt, xs) = (
        subsample(test, protocol.mmd_fraction, rng),
        subsample(synth, protocol.mmd_fraction, rng),
    );
    let mmd2 = mmd2_unbiased(&xt, &xs, &protocol.kernel)?;

    let (dt, ds) = match protocol.pairing {
        Pairing::Shuffled => (
            subsample(test, protocol.dtw_fraction, rng),
            subsample(synth, protocol.dtw_fraction, rng),
        ),
        Pairing::Aligned => {
            let n = test.len().min(synth.len());
            let idx = sample(rng, n, count(n, protocol.dtw_fraction)).into_vec();
            (test.select(&idx), synth.select(&idx))
        }
    };
    let pairs = dt.len().min(ds.len());
    let mut total = 0.0;
    for i in 0..pairs {
        total += fastdtw(dt.row(i), ds.row(i), protocol.radius)?;
    }
    Ok(MetricsRecord {
        mmd2,
        dtw_mean: total / pairs as f64,
        mmd_fraction: protocol.mmd_fraction,
        dtw_fraction: protocol.dtw_fraction,
        mmd_rows: (xt.len(), xs.len()),
        dtw_pairs: pairs,
    })
}
