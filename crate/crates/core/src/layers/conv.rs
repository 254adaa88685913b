use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init_uniform;
use crate::autodiff::{window_output_len, GeometryMode, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Filter bank of a 1-D convolution. `filters` is `[maps, in_channels, K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1dParams {
    pub filters: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub mode: GeometryMode,
}

impl Conv1dParams {
    pub fn new(filters: Tensor, bias: Tensor, stride: usize, padding: usize, mode: GeometryMode) -> Result<Self> {
        let s = filters.shape();
        if s.len() != 3 || bias.shape() != [s[0]] {
            return Err(Error::ShapeMismatch {
                op: "conv1d params",
                lhs: s.to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        if s[2].is_multiple_of(2) || stride == 0 {
            return Err(Error::Geometry {
                width: 0,
                kernel: s[2],
                stride,
                padding,
                reason: "kernel must be odd and stride at least 1",
            });
        }
        Ok(Conv1dParams {
            filters,
            bias,
            stride,
            padding,
            mode,
        })
    }

    pub fn init<R: Rng + ?Sized>(geom: &ConvGeometry, in_channels: usize, rng: &mut R) -> Result<Self> {
        let mut filters = Tensor::zeros(&[geom.maps, in_channels, geom.kernel]);
        init_uniform(&mut filters, in_channels * geom.kernel, rng);
        Self::new(filters, Tensor::zeros(&[geom.maps]), geom.stride, geom.padding, geom.mode)
    }

    pub fn maps(&self) -> usize {
        self.filters.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.filters.shape()[2]
    }

    pub fn output_len(&self, width: usize) -> Result<usize> {
        window_output_len(width, self.kernel(), self.stride, self.padding, self.mode)
    }

    pub fn register(&self, store: &mut ParamStore, name: &str) -> Conv1d {
        Conv1d {
            filters: store.add(format!("{name}.filters"), self.filters.clone()),
            bias: store.add(format!("{name}.bias"), self.bias.clone()),
            stride: self.stride,
            padding: self.padding,
            mode: self.mode,
        }
    }
}

/// Hyperparameters of one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub maps: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    #[serde(default)]
    pub mode: GeometryMode,
}

/// Hyperparameters of one max-pooling layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolGeometry {
    pub window: usize,
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
}

impl PoolGeometry {
    pub fn output_len(&self, width: usize) -> Result<usize> {
        if self.padding >= self.window {
            return Err(Error::Geometry {
                width,
                kernel: self.window,
                stride: self.stride,
                padding: self.padding,
                reason: "padding must be smaller than the pooling window",
            });
        }
        window_output_len(width, self.window, self.stride, self.padding, GeometryMode::Floor)
    }
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    filters: ParamId,
    bias: ParamId,
    pub stride: usize,
    pub padding: usize,
    pub mode: GeometryMode,
}

impl Conv1d {
    /// `x` is `[batch, in_channels, width]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.filters);
        let b = g.param(store, self.bias);
        g.conv1d(x, w, b, self.stride, self.padding, self.mode)
    }
}

/// Single-sample convolution: `x` is `in_channels x W`.
///
/// Cross-correlation convention (the kernel is not flipped); no activation.
pub fn conv1d(p: &Conv1dParams, x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 2 {
        return Err(Error::InvalidShape {
            op: "conv1d",
            msg: format!("expected [channels, width], got {:?}", x.shape()),
        });
    }
    let mut g = Graph::new();
    let xv = g.constant(x.clone().reshaped(vec![1, x.shape()[0], x.shape()[1]])?);
    let w = g.constant(p.filters.clone());
    let b = g.constant(p.bias.clone());
    let y = g.conv1d(xv, w, b, p.stride, p.padding, p.mode)?;
    let s = g.shape(y).to_vec();
    g.value(y).clone().reshaped(vec![s[1], s[2]])
}

/// Single-sample max pooling of `channels x n` with window `a`, stride `b`.
pub fn maxpool1d(x: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    if x.shape().len() != 2 {
        return Err(Error::InvalidShape {
            op: "maxpool1d",
            msg: format!("expected [channels, n], got {:?}", x.shape()),
        });
    }
    let (c, n) = (x.shape()[0], x.shape()[1]);
    if n < window {
        return Err(Error::Geometry {
            width: n,
            kernel: window,
            stride,
            padding: 0,
            reason: "pooling window larger than signal",
        });
    }
    let mut g = Graph::new();
    let xv = g.constant(x.clone().reshaped(vec![1, c, n])?);
    let y = g.maxpool1d(xv, window, stride, 0)?;
    let s = g.shape(y).to_vec();
    g.value(y).clone().reshaped(vec![s[1], s[2]])
}
