use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init_uniform;
use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    None,
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, v: Var) -> Result<Var> {
        match self {
            Activation::None => Ok(v),
            Activation::Sigmoid => g.sigmoid(v),
            Activation::Relu => g.relu(v),
            Activation::Tanh => g.tanh(v),
        }
    }
}

/// Fully connected layer `activation(W x + b)` with `W` of shape `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    pub w: Tensor,
    pub b: Tensor,
    pub activation: Activation,
}

impl DenseParams {
    pub fn new(w: Tensor, b: Tensor, activation: Activation) -> Result<Self> {
        if w.shape().len() != 2 || b.shape() != [w.shape()[0]] {
            return Err(Error::ShapeMismatch {
                op: "dense params",
                lhs: w.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        Ok(DenseParams { w, b, activation })
    }

    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let mut w = Tensor::zeros(&[output, input]);
        init_uniform(&mut w, input, rng);
        DenseParams {
            w,
            b: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn register(&self, store: &mut ParamStore, name: &str) -> Dense {
        let (out, inp) = (self.w.shape()[0], self.w.shape()[1]);
        let mut wt = Tensor::zeros(&[inp, out]);
        for r in 0..out {
            for c in 0..inp {
                wt.set(&[c, r], self.w.at(&[r, c]));
            }
        }
        Dense {
            input: inp,
            output: out,
            w: store.add(format!("{name}.w"), wt),
            b: store.add(format!("{name}.b"), self.b.clone()),
            activation: self.activation,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    w: ParamId,
    b: ParamId,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        DenseParams::init(input, output, activation, rng).register(store, name)
    }

    /// `x` is `[m, input]`; returns `[m, output]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w)?;
        let y = g.add(y, b)?;
        self.activation.apply(g, y)
    }

    pub fn weight_id(&self) -> ParamId {
        self.w
    }

    pub fn bias_id(&self) -> ParamId {
        self.b
    }
}

/// Single-vector evaluation of a dense layer.
pub fn dense(p: &DenseParams, x: &Tensor) -> Result<Tensor> {
    if x.len() != p.w.shape()[1] {
        return Err(Error::ShapeMismatch {
            op: "dense",
            lhs: p.w.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    let mut store = ParamStore::new();
    let layer = p.register(&mut store, "dense");
    let mut g = Graph::new();
    let xv = g.constant(x.clone().reshaped(vec![1, x.len()])?);
    let y = layer.forward(&mut g, &store, xv)?;
    g.value(y).clone().reshaped(vec![layer.output])
}
