use std::collections::HashMap;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the two operands of an elementwise binary op line up.
///
/// Only a one-element operand or a row vector (`[n]` or `[1, n]`) matching
/// the last dimension of the other operand may be broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    LhsScalar,
    RhsScalar,
    LhsRow,
    RhsRow,
}

impl Broadcast {
    fn resolve(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Self, Vec<usize>)> {
        let n_a: usize = a.iter().product();
        let n_b: usize = b.iter().product();
        let is_row_of = |row: &[usize], full: &[usize]| {
            let last = *full.last().unwrap();
            full.len() >= 2 && (row == [last] || row == [1, last])
        };
        if a == b {
            Ok((Broadcast::Same, a.to_vec()))
        } else if n_b == 1 {
            Ok((Broadcast::RhsScalar, a.to_vec()))
        } else if n_a == 1 {
            Ok((Broadcast::LhsScalar, b.to_vec()))
        } else if is_row_of(b, a) {
            Ok((Broadcast::RhsRow, a.to_vec()))
        } else if is_row_of(a, b) {
            Ok((Broadcast::LhsRow, b.to_vec()))
        } else {
            Err(Error::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            })
        }
    }

    #[inline]
    fn lhs_index(self, i: usize, row: usize) -> usize {
        match self {
            Broadcast::LhsScalar => 0,
            Broadcast::LhsRow => i % row,
            _ => i,
        }
    }

    #[inline]
    fn rhs_index(self, i: usize, row: usize) -> usize {
        match self {
            Broadcast::RhsScalar => 0,
            Broadcast::RhsRow => i % row,
            _ => i,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum UnaryKind {
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Relu,
    Abs,
    Square,
}

/// Whether a sliding-window geometry that does not divide evenly is an error
/// or is truncated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryMode {
    #[default]
    Exact,
    Floor,
}

/// Output length `(W - K + 2P) / S + 1` of a sliding window.
pub fn window_output_len(
    width: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    mode: GeometryMode,
) -> Result<usize> {
    let err = |reason| Error::Geometry {
        width,
        kernel,
        stride,
        padding,
        reason,
    };
    if stride == 0 {
        return Err(err("stride must be at least 1"));
    }
    if kernel == 0 {
        return Err(err("kernel must be at least 1"));
    }
    let span = width + 2 * padding;
    if span < kernel {
        return Err(err("kernel larger than padded input"));
    }
    let room = span - kernel;
    if mode == GeometryMode::Exact && !room.is_multiple_of(stride) {
        return Err(err("(W - K + 2P) is not divisible by S"));
    }
    Ok(room / stride + 1)
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryKind, Broadcast, Var, Var),
    Unary(UnaryKind, Var),
    Scale(Var, f64),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    MaxLast { input: Var, argmax: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    Reshape(Var),
    Conv1d { x: Var, w: Var, b: Var, stride: usize, padding: usize },
    MaxPool1d { input: Var, argmax: Vec<usize> },
    PairwiseL1Similarity { input: Var, groups: usize, dim: usize },
    /// Gate activations `[f, i, o, tanh(cand)]` per row are cached.
    LstmCell { z: Var, c_prev: Var, acts: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run computation graph.
///
/// Nodes are appended in evaluation order, so insertion order is a valid
/// topological order and [`Graph::backward`] simply walks it in reverse.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: HashMap<(usize, ParamId), Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward root with respect to `v`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Inserts a constant (no gradient is tracked for it).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Inserts a leaf whose gradient is tracked but which is not a parameter.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Inserts (once per graph) the current value of a stored parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = (store.key(), id);
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, store.is_trainable());
        self.params.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            &mut out,
            0.0,
        );
        let t = Tensor::new(vec![m, n], out)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::MatMul(a, b), ng))
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        };
        let (bc, shape) = Broadcast::resolve(name, self.shape(a), self.shape(b))?;
        let row = *shape.last().unwrap();
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let n: usize = shape.iter().product();
        let f: fn(f64, f64) -> f64 = match kind {
            BinaryKind::Add => |x, y| x + y,
            BinaryKind::Sub => |x, y| x - y,
            BinaryKind::Mul => |x, y| x * y,
        };
        let mut out = Vec::with_capacity(n);
        match bc {
            Broadcast::Same => out.extend(va.iter().zip(vb).map(|(&x, &y)| f(x, y))),
            Broadcast::RhsScalar => out.extend(va.iter().map(|&x| f(x, vb[0]))),
            Broadcast::LhsScalar => out.extend(vb.iter().map(|&y| f(va[0], y))),
            Broadcast::RhsRow => {
                for chunk in va.chunks(row) {
                    out.extend(chunk.iter().zip(vb).map(|(&x, &y)| f(x, y)));
                }
            }
            Broadcast::LhsRow => {
                for chunk in vb.chunks(row) {
                    out.extend(va.iter().zip(chunk).map(|(&x, &y)| f(x, y)));
                }
            }
        }
        let t = Tensor::new(shape, out)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Binary(kind, bc, a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    fn unary(&mut self, kind: UnaryKind, a: Var) -> Result<Var> {
        let x = self.value(a);
        if kind == UnaryKind::Log {
            if let Some((index, &value)) = x.data().iter().enumerate().find(|(_, &v)| v <= 0.0) {
                return Err(Error::LogDomain { index, value });
            }
        }
        let t = x.map(match kind {
            UnaryKind::Exp => f64::exp,
            UnaryKind::Log => f64::ln,
            UnaryKind::Tanh => f64::tanh,
            UnaryKind::Sigmoid => sigmoid,
            UnaryKind::Relu => |v: f64| if v > 0.0 || v.is_nan() { v } else { 0.0 },
            UnaryKind::Abs => f64::abs,
            UnaryKind::Square => |v: f64| v * v,
        });
        let ng = self.ng(a);
        Ok(self.push(t, Op::Unary(kind, a), ng))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Log, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Sigmoid, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Abs, a)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryKind::Square, a)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let t = self.value(a).map(|v| v * factor);
        let ng = self.ng(a);
        Ok(self.push(t, Op::Scale(a, factor), ng))
    }

    /// Clamps into `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let t = self.value(a).map(|v| v.clamp(lo, hi));
        let ng = self.ng(a);
        Ok(self.push(t, Op::Clamp(a, lo, hi), ng))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        Ok(self.push(Tensor::scalar(s), Op::Sum(a), ng))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let s = x.data().iter().sum::<f64>() / x.len() as f64;
        let ng = self.ng(a);
        Ok(self.push(Tensor::scalar(s), Op::Mean(a), ng))
    }

    /// Maximum over the last axis, keeping it as a size-1 dimension.
    /// Ties send the gradient to the first maximal element.
    pub fn max(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let row = *x.shape().last().unwrap();
        let mut out = Vec::with_capacity(x.len() / row);
        let mut argmax = Vec::with_capacity(x.len() / row);
        for (r, chunk) in x.data().chunks(row).enumerate() {
            let mut best = 0;
            for (j, &v) in chunk.iter().enumerate() {
                if v > chunk[best] || (v.is_nan() && !chunk[best].is_nan()) {
                    best = j;
                }
            }
            out.push(chunk[best]);
            argmax.push(r * row + best);
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = 1;
        let t = Tensor::new(shape, out)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::MaxLast { input: a, argmax }, ng))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or(Error::InvalidShape {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::InvalidShape {
                op: "concat",
                msg: format!("axis {axis} out of range for {base:?}"),
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: base.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let block = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v).data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Tensor::new(shape, out)?;
        let ng = inputs.iter().any(|&v| self.ng(v));
        Ok(self.push(
            t,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            ng,
        ))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::InvalidShape {
                op: "slice",
                msg: format!("range {start}..{} on axis {axis} of {s:?}", start + len),
            });
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * s[axis] * inner + start * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let t = Tensor::new(shape, out)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Slice { input: a, axis, start }, ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape.to_vec())?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    /// Batched 1-D cross-correlation.
    ///
    /// `x` is `[batch, in_channels, width]`, `w` is `[maps, in_channels, K]`,
    /// `b` is `[maps]`. Borders are zero-padded by `padding` samples.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
        mode: GeometryMode,
    ) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] || sb != [sw[0]] {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        let (bs, cin, width) = (sx[0], sx[1], sx[2]);
        let (maps, k) = (sw[0], sw[2]);
        let wout = window_output_len(width, k, stride, padding, mode)?;
        let (xv, wv, bv) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let mut out = vec![0.0; bs * maps * wout];
        for n in 0..bs {
            for f in 0..maps {
                let o = &mut out[(n * maps + f) * wout..(n * maps + f + 1) * wout];
                o.iter_mut().for_each(|v| *v = bv[f]);
                for c in 0..cin {
                    let xrow = &xv[(n * cin + c) * width..(n * cin + c + 1) * width];
                    let wrow = &wv[(f * cin + c) * k..(f * cin + c + 1) * k];
                    for (t, ov) in o.iter_mut().enumerate() {
                        let origin = (t * stride) as isize - padding as isize;
                        for (j, &wj) in wrow.iter().enumerate() {
                            let pos = origin + j as isize;
                            if pos >= 0 && (pos as usize) < width {
                                *ov += wj * xrow[pos as usize];
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![bs, maps, wout], out)?;
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(
            t,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            },
            ng,
        ))
    }

    /// Max pooling over the last axis of a `[batch, channels, n]` tensor.
    /// Padded positions never win the maximum.
    pub fn maxpool1d(
        &mut self,
        x: Var,
        window: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(Error::InvalidShape {
                op: "maxpool1d",
                msg: format!("expected [batch, channels, n], got {s:?}"),
            });
        }
        if padding >= window {
            return Err(Error::Geometry {
                width: s[2],
                kernel: window,
                stride,
                padding,
                reason: "padding must be smaller than the pooling window",
            });
        }
        let n = s[2];
        let nout = window_output_len(n, window, stride, padding, GeometryMode::Floor)?;
        let xv = self.value(x).data();
        let rows = s[0] * s[1];
        let mut out = Vec::with_capacity(rows * nout);
        let mut argmax = Vec::with_capacity(rows * nout);
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            for j in 0..nout {
                let lo = (j * stride).saturating_sub(padding);
                let hi = (j * stride + window - padding).min(n);
                let mut best = lo;
                for i in lo..hi {
                    if row[i] > row[best] || (row[i].is_nan() && !row[best].is_nan()) {
                        best = i;
                    }
                }
                out.push(row[best]);
                argmax.push(r * n + best);
            }
        }
        let t = Tensor::new(vec![s[0], s[1], nout], out)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::MaxPool1d { input: x, argmax }, ng))
    }

    /// For `input` of shape `[n, groups * dim]` viewed as `n` matrices of
    /// `groups x dim`, returns `[n, groups]` with entry `(i, b)` equal to
    /// `sum_j exp(-||M_{i,b} - M_{j,b}||_1)`, including `j == i`.
    pub fn pairwise_l1_similarity(&mut self, input: Var, groups: usize, dim: usize) -> Result<Var> {
        let s = self.shape(input);
        if s.len() != 2 || s[1] != groups * dim || groups == 0 || dim == 0 {
            return Err(Error::InvalidShape {
                op: "pairwise_l1_similarity",
                msg: format!("expected [n, {groups}*{dim}], got {s:?}"),
            });
        }
        let n = s[0];
        let m = self.value(input).data();
        let mut out = vec![0.0; n * groups];
        for i in 0..n {
            out[i * groups..(i + 1) * groups].iter_mut().for_each(|v| *v = 1.0);
        }
        for i in 0..n {
            for j in i + 1..n {
                for b in 0..groups {
                    let ri = &m[i * groups * dim + b * dim..i * groups * dim + (b + 1) * dim];
                    let rj = &m[j * groups * dim + b * dim..j * groups * dim + (b + 1) * dim];
                    let l1: f64 = ri.iter().zip(rj).map(|(p, q)| (p - q).abs()).sum();
                    let e = (-l1).exp();
                    out[i * groups + b] += e;
                    out[j * groups + b] += e;
                }
            }
        }
        let t = Tensor::new(vec![n, groups], out)?;
        let ng = self.ng(input);
        Ok(self.push(t, Op::PairwiseL1Similarity { input, groups, dim }, ng))
    }

    /// Fused LSTM cell nonlinearity.
    ///
    /// `z` is the `[m, 4H]` gate pre-activation with blocks ordered forget,
    /// input, output, candidate; `c_prev` is `[m, H]`. Returns `[m, 2H]`
    /// holding `h_t` in the first `H` columns and `c_t` in the last `H`:
    /// `c_t = σ(z_f)∘c_prev + σ(z_i)∘tanh(z_c)`, `h_t = σ(z_o)∘tanh(c_t)`.
    pub fn lstm_cell(&mut self, z: Var, c_prev: Var) -> Result<Var> {
        let (sz, sc) = (self.shape(z), self.shape(c_prev));
        if sz.len() != 2 || sc.len() != 2 || sz[0] != sc[0] || sz[1] != 4 * sc[1] {
            return Err(Error::ShapeMismatch {
                op: "lstm_cell",
                lhs: sz.to_vec(),
                rhs: sc.to_vec(),
            });
        }
        let (m, h) = (sc[0], sc[1]);
        let zv = self.value(z).data();
        let cp = self.value(c_prev).data();
        let mut acts = vec![0.0; m * 4 * h];
        let mut out = vec![0.0; m * 2 * h];
        for r in 0..m {
            let zr = &zv[r * 4 * h..(r + 1) * 4 * h];
            let a = &mut acts[r * 4 * h..(r + 1) * 4 * h];
            for j in 0..3 * h {
                a[j] = sigmoid(zr[j]);
            }
            for j in 3 * h..4 * h {
                a[j] = zr[j].tanh();
            }
            for j in 0..h {
                let c = a[j] * cp[r * h + j] + a[h + j] * a[3 * h + j];
                out[r * 2 * h + h + j] = c;
                out[r * 2 * h + j] = a[2 * h + j] * c.tanh();
            }
        }
        let t = Tensor::new(vec![m, 2 * h], out)?;
        let ng = self.ng(z) || self.ng(c_prev);
        Ok(self.push(t, Op::LstmCell { z, c_prev, acts }, ng))
    }

    /// Reverse-mode pass from a one-element `root`.
    ///
    /// Node gradients from a previous call are discarded; parameter
    /// gradients are only touched by [`Graph::accumulate_param_grads`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rs = self.shape(root);
        if rs.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarRoot(rs.to_vec()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].needs_grad {
                let mut bw = Backward {
                    nodes: &self.nodes,
                    grads: &mut self.grads,
                };
                bw.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    /// Runs [`Graph::backward`] and adds the parameter gradients into each
    /// store, summed across every use of the parameter.
    pub fn backward_into(&mut self, root: Var, stores: &mut [&mut ParamStore]) -> Result<()> {
        self.backward(root)?;
        for s in stores.iter_mut() {
            self.accumulate_param_grads(s);
        }
        Ok(())
    }

    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        let key = store.key();
        for (&(k, id), &v) in &self.params {
            if k != key {
                continue;
            }
            if let Some(g) = self.grad(v) {
                let p = &mut store.params_mut()[id.index()];
                for (acc, gi) in p.grad.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
        }
    }
}

struct Backward<'a> {
    nodes: &'a [Node],
    grads: &'a mut [Option<Vec<f64>>],
}

impl Backward<'_> {
    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn acc(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let n = self.nodes[v.0].value.len();
        f(self.grads[v.0].get_or_insert_with(|| vec![0.0; n]));
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let nodes = self.nodes;
        let out = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                self.acc(a, |ga| gemm(m, n, k, g, (n, 1), bv, (1, n), ga, 1.0));
                self.acc(b, |gb| gemm(k, m, n, av, (1, k), g, (n, 1), gb, 1.0));
            }
            &Op::Binary(kind, bc, a, b) => {
                let row = *out.shape().last().unwrap();
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                self.acc(a, |ga| {
                    if bc == Broadcast::Same {
                        match kind {
                            BinaryKind::Mul => ga.iter_mut().zip(g).zip(vb).for_each(|((d, gj), y)| *d += gj * y),
                            _ => ga.iter_mut().zip(g).for_each(|(d, gj)| *d += gj),
                        }
                        return;
                    }
                    for (j, &gj) in g.iter().enumerate() {
                        let d = match kind {
                            BinaryKind::Mul => gj * vb[bc.rhs_index(j, row)],
                            _ => gj,
                        };
                        ga[bc.lhs_index(j, row)] += d;
                    }
                });
                self.acc(b, |gb| {
                    if bc == Broadcast::RhsRow && kind == BinaryKind::Add {
                        for chunk in g.chunks(row) {
                            gb.iter_mut().zip(chunk).for_each(|(d, s)| *d += s);
                        }
                        return;
                    }
                    if bc == Broadcast::Same && kind != BinaryKind::Mul {
                        let sign = if kind == BinaryKind::Sub { -1.0 } else { 1.0 };
                        gb.iter_mut().zip(g).for_each(|(d, s)| *d += sign * s);
                        return;
                    }
                    for (j, &gj) in g.iter().enumerate() {
                        let d = match kind {
                            BinaryKind::Add => gj,
                            BinaryKind::Sub => -gj,
                            BinaryKind::Mul => gj * va[bc.lhs_index(j, row)],
                        };
                        gb[bc.rhs_index(j, row)] += d;
                    }
                });
            }
            &Op::Unary(kind, a) => {
                let x = nodes[a.0].value.data();
                let y = out.data();
                self.acc(a, |ga| {
                    for j in 0..g.len() {
                        let d = match kind {
                            UnaryKind::Exp => y[j],
                            UnaryKind::Log => 1.0 / x[j],
                            UnaryKind::Tanh => 1.0 - y[j] * y[j],
                            UnaryKind::Sigmoid => y[j] * (1.0 - y[j]),
                            UnaryKind::Relu => {
                                if x[j] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            UnaryKind::Abs => {
                                if x[j] == 0.0 {
                                    0.0
                                } else {
                                    x[j].signum()
                                }
                            }
                            UnaryKind::Square => 2.0 * x[j],
                        };
                        ga[j] += g[j] * d;
                    }
                });
            }
            &Op::Scale(a, c) => self.acc(a, |ga| {
                for (x, gj) in ga.iter_mut().zip(g) {
                    *x += c * gj;
                }
            }),
            &Op::Clamp(a, lo, hi) => {
                let x = nodes[a.0].value.data();
                self.acc(a, |ga| {
                    for j in 0..g.len() {
                        if x[j] >= lo && x[j] <= hi {
                            ga[j] += g[j];
                        }
                    }
                });
            }
            &Op::Sum(a) => self.acc(a, |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            &Op::Mean(a) => {
                let n = nodes[a.0].value.len() as f64;
                self.acc(a, |ga| ga.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::MaxLast { input, argmax } | Op::MaxPool1d { input, argmax } => {
                self.acc(*input, |ga| {
                    for (&idx, gj) in argmax.iter().zip(g) {
                        ga[idx] += gj;
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let axis = *axis;
                let shape = out.shape();
                let outer: usize = shape[..axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[axis];
                let mut offset = 0;
                for &v in inputs {
                    let len = self.shape(v)[axis];
                    self.acc(v, |gv| {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                            let dst = &mut gv[o * len * inner..(o + 1) * len * inner];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    });
                    offset += len;
                }
            }
            &Op::Slice { input, axis, start } => {
                let s = self.shape(input).to_vec();
                let len = out.shape()[axis];
                let outer: usize = s[..axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                self.acc(input, |ga| {
                    for o in 0..outer {
                        let base = o * s[axis] * inner + start * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        for (d, s) in ga[base..base + len * inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                });
            }
            &Op::Reshape(a) => self.acc(a, |ga| {
                for (d, s) in ga.iter_mut().zip(g) {
                    *d += s;
                }
            }),
            &Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            } => self.conv1d_backward(out.shape()[2], g, x, w, b, stride, padding),
            &Op::PairwiseL1Similarity { input, groups, dim } => {
                let m = nodes[input.0].value.data();
                let n = self.shape(input)[0];
                let stride = groups * dim;
                self.acc(input, |gm| {
                    for a in 0..n {
                        for c in a + 1..n {
                            for b in 0..groups {
                                let ra = a * stride + b * dim;
                                let rc = c * stride + b * dim;
                                let l1: f64 = (0..dim).map(|d| (m[ra + d] - m[rc + d]).abs()).sum();
                                let coef = (g[a * groups + b] + g[c * groups + b]) * (-l1).exp();
                                for d in 0..dim {
                                    let diff = m[ra + d] - m[rc + d];
                                    if diff != 0.0 {
                                        let s = -coef * diff.signum();
                                        gm[ra + d] += s;
                                        gm[rc + d] -= s;
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::LstmCell { z, c_prev, acts } => {
                let (z, c_prev) = (*z, *c_prev);
                let h = out.shape()[1] / 2;
                let m = out.shape()[0];
                let cp = nodes[c_prev.0].value.data();
                let y = out.data();
                let mut dz = vec![0.0; m * 4 * h];
                let mut dcp = vec![0.0; m * h];
                for r in 0..m {
                    let a = &acts[r * 4 * h..(r + 1) * 4 * h];
                    for j in 0..h {
                        let (f, i, o, cand) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                        let c = y[r * 2 * h + h + j];
                        let tc = c.tanh();
                        let dh = g[r * 2 * h + j];
                        let dc = g[r * 2 * h + h + j] + dh * o * (1.0 - tc * tc);
                        let dzr = &mut dz[r * 4 * h..(r + 1) * 4 * h];
                        dzr[j] = dc * cp[r * h + j] * f * (1.0 - f);
                        dzr[h + j] = dc * cand * i * (1.0 - i);
                        dzr[2 * h + j] = dh * tc * o * (1.0 - o);
                        dzr[3 * h + j] = dc * i * (1.0 - cand * cand);
                        dcp[r * h + j] = dc * f;
                    }
                }
                self.acc(z, |gz| gz.iter_mut().zip(&dz).for_each(|(d, s)| *d += s));
                self.acc(c_prev, |gc| gc.iter_mut().zip(&dcp).for_each(|(d, s)| *d += s));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(
        &mut self,
        wout: usize,
        g: &[f64],
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
    ) {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let (bs, cin, width) = (sx[0], sx[1], sx[2]);
        let (maps, k) = (sw[0], sw[2]);
        let nodes = self.nodes;
        let xv = nodes[x.0].value.data();
        let wv = nodes[w.0].value.data();
        let each = |f: &mut dyn FnMut(usize, usize, usize, usize, usize, usize)| {
            for n in 0..bs {
                for fm in 0..maps {
                    for c in 0..cin {
                        for t in 0..wout {
                            let origin = (t * stride) as isize - padding as isize;
                            for j in 0..k {
                                let pos = origin + j as isize;
                                if pos >= 0 && (pos as usize) < width {
                                    f(n, fm, c, t, j, pos as usize);
                                }
                            }
                        }
                    }
                }
            }
        };
        if self.ng(x) {
            self.acc(x, |gx| {
                each(&mut |n, fm, c, t, j, pos| {
                    gx[(n * cin + c) * width + pos] += g[(n * maps + fm) * wout + t] * wv[(fm * cin + c) * k + j];
                })
            });
        }
        if self.ng(w) {
            self.acc(w, |gw| {
                each(&mut |n, fm, c, t, j, pos| {
                    gw[(fm * cin + c) * k + j] += g[(n * maps + fm) * wout + t] * xv[(n * cin + c) * width + pos];
                })
            });
        }
        self.acc(b, |gb| {
            for n in 0..bs {
                for fm in 0..maps {
                    gb[fm] += g[(n * maps + fm) * wout..(n * maps + fm + 1) * wout].iter().sum::<f64>();
                }
            }
        });
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `c = a * b + beta * c` for an `m x k` times `k x n` product with explicit
/// (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides describe in-bounds row-major views of `a` (m x k),
    // `b` (k x n) and `c` (m x n), checked by the callers' shape validation.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
