//! Neural building blocks: LSTM and bidirectional LSTM, 1-D convolution,
//! max pooling, dense layers and minibatch discrimination.
//!
//! Each block comes in two forms: a plain parameter bundle (`*Params`) with a
//! single-sample evaluation function, and a registered handle whose weights
//! live in a [`ParamStore`] and which builds batched graph nodes.

mod conv;
mod dense;
mod lstm;
mod minibatch;

use rand::Rng;

use crate::autodiff::Tensor;

pub use conv::{conv1d, maxpool1d, Conv1d, Conv1dParams, ConvGeometry, PoolGeometry};
pub use dense::{dense, Activation, Dense, DenseParams};
pub use lstm::{bilstm_final_state, bilstm_sequence, lstm_sequence, lstm_step, BiLstm, Lstm, LstmParams};
pub use minibatch::{minibatch_discrimination, MinibatchDiscrimination, MinibatchDiscriminationParams};

/// Fills `t` with draws from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub(crate) fn init_uniform<R: Rng + ?Sized>(t: &mut Tensor, fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

#[cfg(test)]
mod tests;
