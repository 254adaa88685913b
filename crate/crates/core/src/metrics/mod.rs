//! Sample-quality metrics: unbiased MMD² with a Gaussian RBF kernel, exact
//! and approximate dynamic time warping, and the per-epoch protocol.

mod dtw;
mod eval;
mod mmd;

pub use dtw::{dtw_exact, fastdtw, DEFAULT_RADIUS};
pub use eval::{evaluate_epoch, EvalProtocol, MetricsRecord, Pairing};
pub use mmd::{median_pairwise_distance, mmd2_unbiased, squared_distance, Bandwidth, KernelConfig};
