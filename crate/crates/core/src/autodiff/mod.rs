//! Dense tensors and a define-by-run reverse-mode graph.
//!
//! Broadcasting in elementwise ops is limited to a one-element operand or a
//! row vector matched against the last dimension of a matrix. Matrix products
//! take two rank-2 operands `[m, k] x [k, n]`.

mod check;
mod graph;
mod params;
mod tensor;

pub use check::{check_gradients, GradCheck};
pub use graph::{window_output_len, GeometryMode, Graph, Var};
pub use params::{zero_grads, Param, ParamId, ParamStore};
pub use tensor::Tensor;
