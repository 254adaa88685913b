use crate::error::{Error, Result};

pub const DEFAULT_RADIUS: usize = 1;

fn cost(a: f64, b: f64) -> f64 {
    (a - b) * (a - b)
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InsufficientData("DTW needs non-empty series".into()));
    }
    Ok(())
}

/// Exact DTW with squared pointwise cost, `O(NM)` time and `O(M)` memory.
pub fn dtw_exact(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let m = y.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, &xi) in x.iter().enumerate() {
        for j in 0..m {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = cost(xi, y[j]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// Allowed column range `lo..=hi` for each row of the cost matrix.
type Window = Vec<(usize, usize)>;

/// DTW restricted to `window`; returns the cost and the optimal warp path.
fn windowed(x: &[f64], y: &[f64], window: &Window) -> (f64, Vec<(usize, usize)>) {
    let (n, m) = (x.len(), y.len());
    let mut d = vec![f64::INFINITY; n * m];
    for i in 0..n {
        let (lo, hi) = window[i];
        for j in lo..=hi {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { d[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { d[i * m + j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { d[(i - 1) * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            d[i * m + j] = cost(x[i], y[j]) + best;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let at = |a: usize, b: usize| d[a * m + b];
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = at(i - 1, j - 1);
            let up = at(i - 1, j);
            let left = at(i, j - 1);
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    (d[n * m - 1], path)
}

fn coarsen(x: &[f64]) -> Vec<f64> {
    x.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Projects a coarse warp path onto the finer grid, widened by `radius`.
fn project(path: &[(usize, usize)], n: usize, m: usize, radius: usize) -> Window {
    let mut window = vec![(usize::MAX, 0usize); n];
    for &(ci, cj) in path {
        let (i0, i1) = (ci.saturating_sub(radius), ci + radius);
        let (j0, j1) = (cj.saturating_sub(radius), cj + radius);
        for c in i0..=i1 {
            for i in [2 * c, 2 * c + 1] {
                if i < n {
                    let w = &mut window[i];
                    w.0 = w.0.min(2 * j0);
                    w.1 = w.1.max(2 * j1 + 1);
                }
            }
        }
    }
    // Rows and columns dropped by an odd-length coarsening.
    for i in 0..n {
        if window[i].0 == usize::MAX {
            window[i] = window[i - 1];
        }
        window[i].1 = window[i].1.min(m - 1);
    }
    window[n - 1].1 = m - 1;
    window
}

fn fast(x: &[f64], y: &[f64], radius: usize) -> (f64, Vec<(usize, usize)>) {
    let (n, m) = (x.len(), y.len());
    if n <= radius + 2 || m <= radius + 2 {
        return windowed(x, y, &vec![(0, m - 1); n]);
    }
    let (_, coarse) = fast(&coarsen(x), &coarsen(y), radius);
    windowed(x, y, &project(&coarse, n, m, radius))
}

/// FastDTW: multi-resolution approximation of [`dtw_exact`].
///
/// Both series are halved by pairwise averaging, solved recursively, and the
/// coarse warp path is projected back and widened by `radius` cells. Inputs
/// no longer than `radius + 2` are solved exactly. The result is never below
/// the exact cost since it minimises over a subset of warp paths.
pub fn fastdtw(x: &[f64], y: &[f64], radius: usize) -> Result<f64> {
    check(x, y)?;
    Ok(fast(x, y, radius).0)
}
