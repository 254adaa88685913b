use rand::Rng;

use super::init_uniform;
use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Gate weights of one LSTM cell, one matrix per gate.
///
/// `w_*` are `hidden x input`, `u_*` are `hidden x hidden`, `b_*` have
/// length `hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_o: Tensor,
    pub w_c: Tensor,
    pub u_f: Tensor,
    pub u_i: Tensor,
    pub u_o: Tensor,
    pub u_c: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_o: Tensor,
    pub b_c: Tensor,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, input]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        LstmParams {
            w_f: w(),
            w_i: w(),
            w_o: w(),
            w_c: w(),
            u_f: u(),
            u_i: u(),
            u_o: u(),
            u_c: u(),
            b_f: b(),
            b_i: b(),
            b_o: b(),
            b_c: b(),
        }
    }

    /// Weights uniform on `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden);
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_o, &mut p.w_c] {
            init_uniform(w, input, rng);
        }
        for u in [&mut p.u_f, &mut p.u_i, &mut p.u_o, &mut p.u_c] {
            init_uniform(u, hidden, rng);
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_f.shape()[1]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_f.shape()[0]
    }

    fn validate(&self) -> Result<()> {
        let (h, x) = (self.hidden_size(), self.input_size());
        let checks: [(&Tensor, &[usize]); 12] = [
            (&self.w_f, &[h, x]),
            (&self.w_i, &[h, x]),
            (&self.w_o, &[h, x]),
            (&self.w_c, &[h, x]),
            (&self.u_f, &[h, h]),
            (&self.u_i, &[h, h]),
            (&self.u_o, &[h, h]),
            (&self.u_c, &[h, h]),
            (&self.b_f, &[h]),
            (&self.b_i, &[h]),
            (&self.b_o, &[h]),
            (&self.b_c, &[h]),
        ];
        for (t, want) in checks {
            if t.shape() != want {
                return Err(Error::ShapeMismatch {
                    op: "lstm params",
                    lhs: want.to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Registers the cell in `store` with the gates packed column-wise in
    /// the order forget, input, output, candidate.
    pub fn register(&self, store: &mut ParamStore, name: &str) -> Result<Lstm> {
        self.validate()?;
        let (h, x) = (self.hidden_size(), self.input_size());
        let pack = |mats: [&Tensor; 4], rows: usize| {
            let mut out = Tensor::zeros(&[rows, 4 * h]);
            for (gate, m) in mats.iter().enumerate() {
                for r in 0..h {
                    for c in 0..rows {
                        out.set(&[c, gate * h + r], m.at(&[r, c]));
                    }
                }
            }
            out
        };
        let w_x = pack([&self.w_f, &self.w_i, &self.w_o, &self.w_c], x);
        let w_h = pack([&self.u_f, &self.u_i, &self.u_o, &self.u_c], h);
        let mut b = Vec::with_capacity(4 * h);
        for v in [&self.b_f, &self.b_i, &self.b_o, &self.b_c] {
            b.extend_from_slice(v.data());
        }
        Ok(Lstm {
            input: x,
            hidden: h,
            w_x: store.add(format!("{name}.w_x"), w_x),
            w_h: store.add(format!("{name}.w_h"), w_h),
            b: store.add(format!("{name}.b"), Tensor::vector(b)?),
        })
    }
}

/// An LSTM cell whose packed weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        LstmParams::init(input, hidden, rng)
            .register(store, name)
            .expect("freshly initialised params are consistent")
    }

    /// Unpacks the stored weights into per-gate matrices.
    pub fn params(&self, store: &ParamStore) -> LstmParams {
        let h = self.hidden;
        let unpack = |t: &Tensor, gate: usize| {
            let rows = t.shape()[0];
            let mut m = Tensor::zeros(&[h, rows]);
            for r in 0..h {
                for c in 0..rows {
                    m.set(&[r, c], t.at(&[c, gate * h + r]));
                }
            }
            m
        };
        let (wx, wh, b) = (store.value(self.w_x), store.value(self.w_h), store.value(self.b));
        let bias = |gate: usize| Tensor::vector(b.data()[gate * h..(gate + 1) * h].to_vec()).unwrap();
        LstmParams {
            w_f: unpack(wx, 0),
            w_i: unpack(wx, 1),
            w_o: unpack(wx, 2),
            w_c: unpack(wx, 3),
            u_f: unpack(wh, 0),
            u_i: unpack(wh, 1),
            u_o: unpack(wh, 2),
            u_c: unpack(wh, 3),
            b_f: bias(0),
            b_i: bias(1),
            b_o: bias(2),
            b_c: bias(3),
        }
    }

    /// One time step on a batch: `x` is `[m, input]`, `h` and `c` are
    /// `[m, hidden]`.
    ///
    /// ```text
    /// f = σ(W_f x + U_f h + b_f)    i = σ(W_i x + U_i h + b_i)
    /// o = σ(W_o x + U_o h + b_o)    c' = f∘c + i∘tanh(W_c x + U_c h + b_c)
    /// h' = o∘tanh(c')
    /// ```
    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hid = self.hidden;
        let (w_x, w_h, b) = (g.param(store, self.w_x), g.param(store, self.w_h), g.param(store, self.b));
        let zx = g.matmul(x, w_x)?;
        let zh = g.matmul(h, w_h)?;
        let z = g.add(zx, zh)?;
        let z = g.add(z, b)?;
        let hc = g.lstm_cell(z, c)?;
        let h_next = g.slice(hc, 1, 0, hid)?;
        let c_next = g.slice(hc, 1, hid, hid)?;
        Ok((h_next, c_next))
    }

    /// Unrolls the cell over `xs` from zero state; returns every `h_t`
    /// and the final cell state.
    pub fn sequence(&self, g: &mut Graph, store: &ParamStore, xs: &[Var]) -> Result<(Vec<Var>, Var)> {
        let m = first_rows(g, xs)?;
        let h0 = g.constant(Tensor::zeros(&[m, self.hidden]));
        let c0 = g.constant(Tensor::zeros(&[m, self.hidden]));
        self.sequence_from(g, store, xs, h0, c0)
    }

    pub fn sequence_from(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        xs: &[Var],
        h0: Var,
        c0: Var,
    ) -> Result<(Vec<Var>, Var)> {
        let (mut h, mut c) = (h0, c0);
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            (h, c) = self.step(g, store, x, h, c)?;
            out.push(h);
        }
        Ok((out, c))
    }
}

fn first_rows(g: &Graph, xs: &[Var]) -> Result<usize> {
    xs.first().map(|&x| g.shape(x)[0]).ok_or(Error::InvalidShape {
        op: "lstm sequence",
        msg: "sequence must have at least one step".into(),
    })
}

/// Bidirectional LSTM whose two directions are merged by summation.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new(forward: Lstm, backward: Lstm) -> Result<Self> {
        if forward.hidden != backward.hidden || forward.input != backward.input {
            return Err(Error::ShapeMismatch {
                op: "bilstm",
                lhs: vec![forward.input, forward.hidden],
                rhs: vec![backward.input, backward.hidden],
            });
        }
        Ok(BiLstm { forward, backward })
    }

    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let fwd = Lstm::new(store, &format!("{name}.fwd"), input, hidden, rng);
        let bwd = Lstm::new(store, &format!("{name}.bwd"), input, hidden, rng);
        BiLstm::new(fwd, bwd).expect("same geometry")
    }

    /// Runs both directions and returns `(merged, backward_final)` where
    /// `merged[t] = h_fwd[t] + h_bwd[t]` and the backward direction consumed
    /// the reversed sequence (its outputs are re-reversed before merging).
    fn run(&self, g: &mut Graph, store: &ParamStore, xs: &[Var]) -> Result<(Vec<Var>, Var, Var)> {
        let (hf, _) = self.forward.sequence(g, store, xs)?;
        let rev: Vec<Var> = xs.iter().rev().copied().collect();
        let (hb, _) = self.backward.sequence(g, store, &rev)?;
        let n = xs.len();
        let merged = (0..n)
            .map(|t| g.add(hf[t], hb[n - 1 - t]))
            .collect::<Result<Vec<_>>>()?;
        Ok((merged, hf[n - 1], hb[n - 1]))
    }

    pub fn sequence(&self, g: &mut Graph, store: &ParamStore, xs: &[Var]) -> Result<Vec<Var>> {
        Ok(self.run(g, store, xs)?.0)
    }

    /// `h_fwd[T-1] + h_bwd_final`, the backward state after its last step
    /// (which has consumed input position 0).
    pub fn final_state(&self, g: &mut Graph, store: &ParamStore, xs: &[Var]) -> Result<Var> {
        let (_, f, b) = self.run(g, store, xs)?;
        g.add(f, b)
    }

    /// Final state without materialising the merged sequence.
    pub fn final_state_only(&self, g: &mut Graph, store: &ParamStore, xs: &[Var]) -> Result<Var> {
        let (hf, _) = self.forward.sequence(g, store, xs)?;
        let rev: Vec<Var> = xs.iter().rev().copied().collect();
        let (hb, _) = self.backward.sequence(g, store, &rev)?;
        g.add(*hf.last().unwrap(), *hb.last().unwrap())
    }
}

fn scratch_lstm(p: &LstmParams, store: &mut ParamStore, name: &str) -> Result<Lstm> {
    p.register(store, name)
}

fn as_row(v: &Tensor) -> Result<Tensor> {
    v.clone().reshaped(vec![1, v.len()])
}

fn check_vec(op: &'static str, v: &Tensor, len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::ShapeMismatch {
            op,
            lhs: vec![len],
            rhs: v.shape().to_vec(),
        });
    }
    Ok(())
}

/// Single-sample LSTM step on plain tensors.
pub fn lstm_step(p: &LstmParams, x: &Tensor, h_prev: &Tensor, c_prev: &Tensor) -> Result<(Tensor, Tensor)> {
    check_vec("lstm_step", x, p.input_size())?;
    check_vec("lstm_step", h_prev, p.hidden_size())?;
    check_vec("lstm_step", c_prev, p.hidden_size())?;
    let mut store = ParamStore::new();
    let cell = scratch_lstm(p, &mut store, "cell")?;
    let mut g = Graph::new();
    let x = g.constant(as_row(x)?);
    let h = g.constant(as_row(h_prev)?);
    let c = g.constant(as_row(c_prev)?);
    let (h, c) = cell.step(&mut g, &store, x, h, c)?;
    let hid = p.hidden_size();
    Ok((
        g.value(h).clone().reshaped(vec![hid])?,
        g.value(c).clone().reshaped(vec![hid])?,
    ))
}

fn split_steps(g: &mut Graph, xs: &Tensor, input: usize) -> Result<Vec<Var>> {
    if xs.shape().len() != 2 || xs.shape()[1] != input || xs.shape()[0] == 0 {
        return Err(Error::ShapeMismatch {
            op: "lstm_sequence",
            lhs: vec![0, input],
            rhs: xs.shape().to_vec(),
        });
    }
    Ok(xs
        .iter_rows()
        .map(|r| g.constant(Tensor::new(vec![1, input], r.to_vec()).unwrap()))
        .collect())
}

fn stack(g: &Graph, hs: &[Var]) -> Result<Tensor> {
    let rows: Vec<&[f64]> = hs.iter().map(|&h| g.value(h).data()).collect();
    Tensor::from_rows(&rows)
}

/// Runs a single-sample sequence `xs` (`T x input`) from `(h0, c0)` and
/// returns the `T x hidden` matrix of hidden states.
pub fn lstm_sequence(p: &LstmParams, xs: &Tensor, h0: &Tensor, c0: &Tensor) -> Result<Tensor> {
    check_vec("lstm_sequence", h0, p.hidden_size())?;
    check_vec("lstm_sequence", c0, p.hidden_size())?;
    let mut store = ParamStore::new();
    let cell = scratch_lstm(p, &mut store, "cell")?;
    let mut g = Graph::new();
    let steps = split_steps(&mut g, xs, p.input_size())?;
    let h0 = g.constant(as_row(h0)?);
    let c0 = g.constant(as_row(c0)?);
    let (hs, _) = cell.sequence_from(&mut g, &store, &steps, h0, c0)?;
    stack(&g, &hs)
}

fn scratch_bilstm(fwd: &LstmParams, bwd: &LstmParams, store: &mut ParamStore) -> Result<BiLstm> {
    if fwd.hidden_size() != bwd.hidden_size() {
        return Err(Error::ShapeMismatch {
            op: "bilstm",
            lhs: vec![fwd.hidden_size()],
            rhs: vec![bwd.hidden_size()],
        });
    }
    BiLstm::new(fwd.register(store, "fwd")?, bwd.register(store, "bwd")?)
}

/// Summation-merged bidirectional sequence for a single sample.
pub fn bilstm_sequence(fwd: &LstmParams, bwd: &LstmParams, xs: &Tensor) -> Result<Tensor> {
    let mut store = ParamStore::new();
    let bi = scratch_bilstm(fwd, bwd, &mut store)?;
    let mut g = Graph::new();
    let steps = split_steps(&mut g, xs, fwd.input_size())?;
    let hs = bi.sequence(&mut g, &store, &steps)?;
    stack(&g, &hs)
}

/// Sum of the forward and backward final hidden states for a single sample.
pub fn bilstm_final_state(fwd: &LstmParams, bwd: &LstmParams, xs: &Tensor) -> Result<Tensor> {
    let mut store = ParamStore::new();
    let bi = scratch_bilstm(fwd, bwd, &mut store)?;
    let mut g = Graph::new();
    let steps = split_steps(&mut g, xs, fwd.input_size())?;
    let h = bi.final_state(&mut g, &store, &steps)?;
    g.value(h).clone().reshaped(vec![fwd.hidden_size()])
}
