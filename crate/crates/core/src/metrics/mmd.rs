use serde::{Deserialize, Serialize};

use crate::data::SeriesBatch;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    /// `α = 1 / (2 median²)` over all pairwise distances of the pooled sample.
    MedianHeuristic,
    Explicit(Vec<f64>),
}

/// Kernel `K(x, x') = Σ_j exp(-α_j ‖x - x'‖²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            bandwidth: Bandwidth::MedianHeuristic,
        }
    }
}

impl KernelConfig {
    pub fn explicit(alphas: Vec<f64>) -> Self {
        KernelConfig {
            bandwidth: Bandwidth::Explicit(alphas),
        }
    }

    /// The bandwidths used for `x` against `y`.
    pub fn alphas(&self, x: &SeriesBatch, y: &SeriesBatch) -> Result<Vec<f64>> {
        match &self.bandwidth {
            Bandwidth::Explicit(a) => {
                if a.is_empty() || a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::config("kernel.bandwidth", "needs at least one positive finite alpha"));
                }
                Ok(a.clone())
            }
            Bandwidth::MedianHeuristic => {
                let med = median_pairwise_distance(&x.concat(y)?)?;
                Ok(vec![1.0 / (2.0 * med * med)])
            }
        }
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of the Euclidean distances over all pairs `i < j`.
pub fn median_pairwise_distance(z: &SeriesBatch) -> Result<f64> {
    let n = z.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("median distance needs 2 rows, got {n}")));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(squared_distance(z.row(i), z.row(j)).sqrt());
        }
    }
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let med = if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if med <= 0.0 {
        return Err(Error::InsufficientData(
            "median pairwise distance is zero; bandwidth is undefined".into(),
        ));
    }
    Ok(med)
}

fn kernel(alphas: &[f64], d2: f64) -> f64 {
    alphas.iter().map(|a| (-a * d2).exp()).sum()
}

fn within_sum(x: &SeriesBatch, alphas: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            s += kernel(alphas, squared_distance(x.row(i), x.row(j)));
        }
    }
    2.0 * s
}

/// Unbiased MMD² between the rows of `x` and `y`.
///
/// Diagonal terms are excluded from the within-sample sums, so the estimate
/// can be slightly negative when both samples share a distribution.
pub fn mmd2_unbiased(x: &SeriesBatch, y: &SeriesBatch, k: &KernelConfig) -> Result<f64> {
    let (n, m) = (x.len(), y.len());
    if n < 2 || m < 2 {
        return Err(Error::InsufficientData(format!("MMD needs at least 2 rows per side, got {n} and {m}")));
    }
    if x.length() != y.length() {
        return Err(Error::ShapeMismatch {
            op: "mmd2",
            lhs: vec![n, x.length()],
            rhs: vec![m, y.length()],
        });
    }
    let alphas = k.alphas(x, y)?;
    let mut cross = 0.0;
    for a in x.iter() {
        for b in y.iter() {
            cross += kernel(&alphas, squared_distance(a, b));
        }
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok(within_sum(x, &alphas) / (nf * (nf - 1.0)) - 2.0 * cross / (nf * mf)
        + within_sum(y, &alphas) / (mf * (mf - 1.0)))
}
