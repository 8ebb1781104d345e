use rand::Rng;

use crate::autograd::{conv2d, conv_transpose2d, linear, relu, Var};
use crate::error::Result;
use crate::param::Parameter;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    pub(crate) fn apply(self, x: Var) -> Var {
        match self {
            Activation::Relu => relu(&x),
            Activation::None => x,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    ConvT,
    Fc,
}

/// One row of an architecture description.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub outputs: usize,
    pub stride: Option<usize>,
    pub activation: Activation,
}

fn he_normal<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    Tensor::randn(shape, (2.0 / fan_in as f64).sqrt(), rng)
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Parameter,
    pub bias: Parameter,
    stride: usize,
    activation: Activation,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let k = 3;
        let w = he_normal(&[out_channels, in_channels, k, k], in_channels * k * k, rng);
        Conv2d {
            weight: Parameter::new(format!("{name}.weight"), w),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_channels])),
            stride,
            activation,
        }
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let y = conv2d(x, &self.weight.var(), &self.bias.var(), self.stride)?;
        Ok(self.activation.apply(y))
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Conv,
            outputs: self.weight.value().shape()[0],
            stride: Some(self.stride),
            activation: self.activation,
        }
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: Parameter,
    pub bias: Parameter,
    stride: usize,
    activation: Activation,
}

impl ConvTranspose2d {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let k = 3;
        // Each output pixel gathers about in*k*k/stride^2 products.
        let fan_in = (in_channels * k * k / (stride * stride)).max(1);
        let w = he_normal(&[in_channels, out_channels, k, k], fan_in, rng);
        ConvTranspose2d {
            weight: Parameter::new(format!("{name}.weight"), w),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_channels])),
            stride,
            activation,
        }
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let y = conv_transpose2d(x, &self.weight.var(), &self.bias.var(), self.stride)?;
        Ok(self.activation.apply(y))
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::ConvT,
            outputs: self.weight.value().shape()[1],
            stride: Some(self.stride),
            activation: self.activation,
        }
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Linear {
            weight: Parameter::new(
                format!("{name}.weight"),
                he_normal(&[inputs, outputs], inputs, rng),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[outputs])),
        }
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        linear(x, &self.weight.var(), &self.bias.var())
    }

    pub fn inputs(&self) -> usize {
        self.weight.value().shape()[0]
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Fc,
            outputs: self.weight.value().shape()[1],
            stride: None,
            activation: Activation::None,
        }
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.weight, &mut self.bias]
    }
}
