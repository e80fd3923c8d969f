//! Minimal deterministic tensor/autodiff engine: the layers and optimizer the
//! half-brain model needs, nothing more. Layers own their parameters and the
//! context saved by the last forward pass; `backward` consumes that context,
//! accumulates parameter gradients, and returns the input gradient.

mod activation;
mod adam;
mod batchnorm;
mod conv;
pub mod gradcheck;
mod init;
mod linear;
mod loss;
mod pool;
mod upsample;

pub use activation::LeakyRelu;
pub use adam::{Adam, AdamConfig, CosineSchedule};
pub use batchnorm::BatchNorm2d;
pub use conv::{conv2d_backward, conv2d_forward, conv_output_dim, Conv2d, ConvSpec};
pub use init::{kaiming_conv, kaiming_linear};
pub use linear::Linear;
pub use loss::{mse_loss, softmax_cross_entropy, softmax_rows};
pub use pool::AvgPool2d;
pub use upsample::Upsample2x;

use crate::tensor::Tensor;

/// Forward-pass mode; batch norm is the only layer that cares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

/// Layer descriptors; conv and pool carry the paper's defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm2d {
        channels: usize,
    },
    LeakyRelu,
    AvgPool2d {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    FullyConnected {
        in_dim: usize,
        out_dim: usize,
    },
}

impl LayerSpec {
    /// 3x3 convolution, stride 1, padding 1.
    pub fn conv2d(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }

    /// 2x2 average pool, stride 2, no padding.
    pub fn avgpool2d() -> Self {
        LayerSpec::AvgPool2d {
            kernel: 2,
            stride: 2,
            padding: 0,
        }
    }
}
