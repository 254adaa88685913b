use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Projection tensor `T` of shape `A x B x C` (features, outputs, kernel dim).
#[derive(Clone, Debug, PartialEq)]
pub struct MinibatchDiscriminationParams {
    pub t: Tensor,
}

impl MinibatchDiscriminationParams {
    /// Entries drawn i.i.d. from N(0, 1).
    pub fn init<R: Rng + ?Sized>(features: usize, outputs: usize, kernel_dim: usize, rng: &mut R) -> Self {
        let data = (0..features * outputs * kernel_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        MinibatchDiscriminationParams {
            t: Tensor::new(vec![features, outputs, kernel_dim], data).expect("positive dims"),
        }
    }

    pub fn features(&self) -> usize {
        self.t.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.t.shape()[1]
    }

    pub fn kernel_dim(&self) -> usize {
        self.t.shape()[2]
    }

    pub fn register(&self, store: &mut ParamStore, name: &str) -> Result<MinibatchDiscrimination> {
        if self.t.shape().len() != 3 {
            return Err(Error::InvalidShape {
                op: "minibatch discrimination",
                msg: format!("T must be A x B x C, got {:?}", self.t.shape()),
            });
        }
        let (a, b, c) = (self.features(), self.outputs(), self.kernel_dim());
        let flat = self.t.clone().reshaped(vec![a, b * c])?;
        Ok(MinibatchDiscrimination {
            features: a,
            outputs: b,
            kernel_dim: c,
            t: store.add(format!("{name}.t"), flat),
        })
    }
}

#[derive(Clone, Debug)]
pub struct MinibatchDiscrimination {
    pub features: usize,
    pub outputs: usize,
    pub kernel_dim: usize,
    t: ParamId,
}

impl MinibatchDiscrimination {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        features: usize,
        outputs: usize,
        kernel_dim: usize,
        rng: &mut R,
    ) -> Self {
        MinibatchDiscriminationParams::init(features, outputs, kernel_dim, rng)
            .register(store, name)
            .expect("rank-3 tensor")
    }

    /// Cross-sample similarity features `o` of shape `[n, B]` for a feature
    /// matrix `f` of shape `[n, A]`.
    pub fn similarity(&self, g: &mut Graph, store: &ParamStore, f: Var) -> Result<Var> {
        let t = g.param(store, self.t);
        let m = g.matmul(f, t)?;
        g.pairwise_l1_similarity(m, self.outputs, self.kernel_dim)
    }

    /// `[f, o(f)]` concatenated along the feature axis, shape `[n, A + B]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, f: Var) -> Result<Var> {
        let o = self.similarity(g, store, f)?;
        g.concat(&[f, o], 1)
    }
}

/// `o(x_i)_b = sum_j exp(-||M_{i,b} - M_{j,b}||_1)` for a plain `n x A`
/// feature matrix.
pub fn minibatch_discrimination(p: &MinibatchDiscriminationParams, f: &Tensor) -> Result<Tensor> {
    let mut store = ParamStore::new();
    let layer = p.register(&mut store, "mbd")?;
    let mut g = Graph::new();
    let fv = g.constant(f.clone());
    let o = layer.similarity(&mut g, &store, fv)?;
    Ok(g.value(o).clone())
}
