//! Convolution layers registered in a [`ParameterStore`].

use ldm_tensor::{conv2d, conv_transpose2d, ParameterStore, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kind {
    Conv,
    Transpose,
}

#[derive(Clone)]
pub(crate) struct Conv {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    pad: usize,
    kind: Kind,
}

/// Shape and placement of one convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub kind: Kind,
}

impl ConvSpec {
    pub fn conv(in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize) -> Self {
        ConvSpec {
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            kind: Kind::Conv,
        }
    }

    pub fn transpose(in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize) -> Self {
        ConvSpec {
            kind: Kind::Transpose,
            ..ConvSpec::conv(in_ch, out_ch, k, stride, pad)
        }
    }
}

impl Conv {
    /// Kaiming-uniform weights scaled for a leaky-relu of slope `slope`, zero bias.
    pub fn new(
        store: &mut ParameterStore,
        name: &str,
        spec: ConvSpec,
        slope: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Conv> {
        let ConvSpec { in_ch, out_ch, k, .. } = spec;
        let fan_in = (in_ch * k * k) as f64;
        let bound = (6.0 / ((1.0 + slope * slope) * fan_in)).sqrt();
        let shape = match spec.kind {
            Kind::Conv => [out_ch, in_ch, k, k],
            Kind::Transpose => [in_ch, out_ch, k, k],
        };
        let n = shape.iter().product();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        let weight = store.add(format!("{name}.weight"), w, &shape)?;
        let bias = store.add(format!("{name}.bias"), vec![0.0; out_ch], &[out_ch])?;
        Ok(Conv {
            weight,
            bias,
            stride: spec.stride,
            pad: spec.pad,
            kind: spec.kind,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = match self.kind {
            Kind::Conv => conv2d(x, &self.weight, self.stride, self.pad)?,
            Kind::Transpose => conv_transpose2d(x, &self.weight, self.stride, self.pad)?,
        };
        Ok(y.add_channel_bias(&self.bias)?)
    }
}
