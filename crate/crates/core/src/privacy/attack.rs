use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{format_value, SeriesBatch};
use crate::error::{Error, Result};
use crate::metrics::squared_distance;

pub const DEFAULT_MAX_PAIRS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Records drawn from each of the training and test sets.
    pub r_values: Vec<usize>,
    /// Thresholds as fractions of the mean pairwise distance, ascending.
    pub epsilon_fractions: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_max_pairs")]
    pub max_pairs: usize,
}

fn default_max_pairs() -> usize {
    DEFAULT_MAX_PAIRS
}

fn fractions() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05).collect()
}

impl AttackConfig {
    /// r = 250, 500, .., 3000.
    pub fn sine(seed: u64) -> Self {
        AttackConfig {
            r_values: (1..=12).map(|i| i * 250).collect(),
            epsilon_fractions: fractions(),
            seed,
            max_pairs: DEFAULT_MAX_PAIRS,
        }
    }

    /// r = 1000, 2000, .., 10000.
    pub fn ecg(seed: u64) -> Self {
        AttackConfig {
            r_values: (1..=10).map(|i| i * 1000).collect(),
            ..Self::sine(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() || self.r_values.contains(&0) {
            return Err(Error::config("attack.r_values", "needs at least one positive sample size"));
        }
        let f = &self.epsilon_fractions;
        if f.is_empty() || f.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::config("attack.epsilon_fractions", "each fraction must lie in (0, 1)"));
        }
        if f.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("attack.epsilon_fractions", "must be sorted ascending"));
        }
        if self.max_pairs == 0 {
            return Err(Error::config("attack.max_pairs", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackCell {
    pub r: usize,
    pub eps_fraction: f64,
    pub epsilon: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Absent when nothing was claimed.
    pub precision: Option<f64>,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub mean_distance: f64,
    pub max_pairs: usize,
    pub seed: u64,
    pub cells: Vec<AttackCell>,
}

impl AttackReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,eps_fraction,tp,fp,tn,fn,precision,recall\n");
        for c in &self.cells {
            let precision = c.precision.map(format_value).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.r,
                format_value(c.eps_fraction),
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                precision,
                format_value(c.recall)
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }
}

/// Mean Euclidean distance between records of the pooled sets.
///
/// Enumerates every pair when there are at most `max_pairs` of them and
/// otherwise averages `max_pairs` uniformly drawn pairs of distinct records.
pub fn mean_distance_baseline<R: Rng + ?Sized>(
    sets: &[&SeriesBatch],
    rng: &mut R,
    max_pairs: usize,
) -> Result<f64> {
    let rows: Vec<&[f64]> = sets.iter().flat_map(|s| s.iter()).collect();
    let n = rows.len();
    if sets.iter().any(|s| s.is_empty()) || n < 2 {
        return Err(Error::InsufficientData("mean distance needs non-empty sets and two records".into()));
    }
    let dist = |i: usize, j: usize| squared_distance(rows[i], rows[j]).sqrt();
    let all = n * (n - 1) / 2;
    if all <= max_pairs {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += dist(i, j);
            }
        }
        return Ok(s / all as f64);
    }
    let mut s = 0.0;
    for _ in 0..max_pairs {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        s += dist(i, j);
    }
    Ok(s / max_pairs as f64)
}

struct NearestCache<'a> {
    set: &'a SeriesBatch,
    synth: &'a SeriesBatch,
    dist: Vec<Option<f64>>,
}

impl<'a> NearestCache<'a> {
    fn new(set: &'a SeriesBatch, synth: &'a SeriesBatch) -> Self {
        NearestCache {
            set,
            synth,
            dist: vec![None; set.len()],
        }
    }

    fn get(&mut self, i: usize) -> f64 {
        *self.dist[i].get_or_insert_with(|| {
            let x = self.set.row(i);
            self.synth
                .iter()
                .map(|s| squared_distance(x, s))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
    }
}

/// Distance-threshold membership inference over an `(r, ε)` grid.
///
/// For each `r`, `r` records are drawn without replacement from each of
/// `train` and `test`. A record is claimed as a training member when some
/// synthetic record lies strictly closer than `ε = fraction · mean distance`.
pub fn presence_disclosure(
    train: &SeriesBatch,
    test: &SeriesBatch,
    synth: &SeriesBatch,
    cfg: &AttackConfig,
) -> Result<AttackReport> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() || synth.is_empty() {
        return Err(Error::InsufficientData("attack needs non-empty train, test and synthetic sets".into()));
    }
    if train.length() != synth.length() || test.length() != synth.length() {
        return Err(Error::ShapeMismatch {
            op: "presence disclosure",
            lhs: vec![train.length(), test.length()],
            rhs: vec![synth.length()],
        });
    }
    let limit = train.len().min(test.len());
    if let Some(&r) = cfg.r_values.iter().find(|&&r| r > limit) {
        return Err(Error::config(
            "attack.r_values",
            format!("r = {r} exceeds min(|train|, |test|) = {limit}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mean = mean_distance_baseline(&[train, test, synth], &mut rng, cfg.max_pairs)?;
    let mut near_train = NearestCache::new(train, synth);
    let mut near_test = NearestCache::new(test, synth);
    let mut cells = Vec::with_capacity(cfg.r_values.len() * cfg.epsilon_fractions.len());
    for &r in &cfg.r_values {
        let dt: Vec<f64> = sample(&mut rng, train.len(), r).into_iter().map(|i| near_train.get(i)).collect();
        let ds: Vec<f64> = sample(&mut rng, test.len(), r).into_iter().map(|i| near_test.get(i)).collect();
        for &eps_fraction in &cfg.epsilon_fractions {
            let epsilon = eps_fraction * mean;
            let tp = dt.iter().filter(|&&d| d < epsilon).count();
            let fp = ds.iter().filter(|&&d| d < epsilon).count();
            cells.push(AttackCell {
                r,
                eps_fraction,
                epsilon,
                tp,
                fp,
                tn: r - fp,
                fn_: r - tp,
                precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
                recall: tp as f64 / r as f64,
            });
        }
    }
    Ok(AttackReport {
        mean_distance: mean,
        max_pairs: cfg.max_pairs,
        seed: cfg.seed,
        cells,
    })
}
