use rand::Rng;

use super::layers::{Activation, Conv2d, ConvTranspose2d, LayerSpec, Linear};
use super::{check_spatial, record_autoencoder_activity, DOWNSAMPLE};
use crate::autograd::{reshape, select_row, Var};
use crate::error::{Result, TcnnError};
use crate::param::{Module, Parameter};

pub const ENCODING_DIM: usize = 1024;

/// `(filters, stride)` of the eight encoder convolutions.
const ENCODER_STACK: [(usize, usize); 8] = [
    (16, 2),
    (16, 1),
    (32, 2),
    (32, 1),
    (64, 2),
    (64, 1),
    (64, 2),
    (64, 1),
];

/// Shape-space vectors, one `ENCODING_DIM` row per batch item.
#[derive(Clone, Debug)]
pub struct Encoding(Var);

impl Encoding {
    pub fn new(var: Var) -> Result<Self> {
        match *var.shape() {
            [_, ENCODING_DIM] => Ok(Encoding(var)),
            _ => Err(TcnnError::invalid(format!(
                "encoding must be [N, {ENCODING_DIM}], got {:?}",
                var.shape()
            ))),
        }
    }

    pub fn var(&self) -> &Var {
        &self.0
    }

    pub fn batch(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn dim(&self) -> usize {
        ENCODING_DIM
    }

    /// Encoding of batch item `i` as a rank-1 var.
    pub fn item(&self, i: usize) -> Result<Var> {
        select_row(&self.0, i)
    }
}

#[derive(Clone, Debug)]
enum DecoderLayer {
    Up(ConvTranspose2d),
    Same(Conv2d),
}

/// Mask autoencoder. The encoder is eight 3x3 convolutions followed by a
/// fully connected layer to `ENCODING_DIM`; the decoder mirrors it with a
/// fully connected layer back to the pre-bottleneck feature count and four
/// upsampling stages.
#[derive(Clone, Debug)]
pub struct Autoencoder {
    num_classes: usize,
    input_hw: (usize, usize),
    encoder: Vec<Conv2d>,
    enc_fc: Linear,
    dec_fc: Linear,
    decoder: Vec<DecoderLayer>,
}

impl Autoencoder {
    pub fn new<R: Rng + ?Sized>(
        num_classes: usize,
        input_hw: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        check_spatial(input_hw.0, input_hw.1)?;
        if num_classes < 2 {
            return Err(TcnnError::invalid("autoencoder needs at least 2 classes"));
        }
        record_autoencoder_activity();
        let relu = Activation::Relu;
        let mut encoder = Vec::with_capacity(ENCODER_STACK.len());
        let mut channels = num_classes;
        for (i, &(filters, stride)) in ENCODER_STACK.iter().enumerate() {
            let name = format!("ae.enc.conv{}", i + 1);
            encoder.push(Conv2d::new(&name, channels, filters, stride, relu, rng));
            channels = filters;
        }
        let pre_fc = Self::pre_fc_features(input_hw);
        let enc_fc = Linear::new("ae.enc.fc", pre_fc, ENCODING_DIM, rng);
        let dec_fc = Linear::new("ae.dec.fc", ENCODING_DIM, pre_fc, rng);

        // Every decoder pair is ConvT(stride 2) then Conv(stride 1); the last
        // pair narrows to 32 filters before the class head.
        let mut decoder = Vec::new();
        for (i, filters) in [64, 64, 64, 32].into_iter().enumerate() {
            decoder.push(DecoderLayer::Up(ConvTranspose2d::new(
                &format!("ae.dec.convt{}", i + 1),
                channels,
                filters,
                2,
                relu,
                rng,
            )));
            decoder.push(DecoderLayer::Same(Conv2d::new(
                &format!("ae.dec.conv{}", i + 1),
                filters,
                filters,
                1,
                relu,
                rng,
            )));
            channels = filters;
        }
        decoder.push(DecoderLayer::Same(Conv2d::new(
            "ae.dec.head",
            channels,
            num_classes,
            1,
            Activation::None,
            rng,
        )));

        Ok(Autoencoder {
            num_classes,
            input_hw,
            encoder,
            enc_fc,
            dec_fc,
            decoder,
        })
    }

    /// Features entering the first fully connected layer.
    pub fn pre_fc_features(input_hw: (usize, usize)) -> usize {
        64 * (input_hw.0 / DOWNSAMPLE) * (input_hw.1 / DOWNSAMPLE)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_hw(&self) -> (usize, usize) {
        self.input_hw
    }

    /// Maps `[N, C, H, W]` one-hot masks or class probabilities into the
    /// shape space. Differentiable with respect to the input.
    pub fn encode(&self, input: &Var) -> Result<Encoding> {
        let (n, c, h, w) = input.value().dims4()?;
        check_spatial(h, w)?;
        if c != self.num_classes {
            return Err(TcnnError::invalid(format!(
                "encoder expects {} channels, got {c}",
                self.num_classes
            )));
        }
        if (h, w) != self.input_hw {
            return Err(TcnnError::invalid(format!(
                "encoder built for {:?}, got {h}x{w}",
                self.input_hw
            )));
        }
        record_autoencoder_activity();
        let mut x = input.clone();
        for layer in &self.encoder {
            x = layer.forward(&x)?;
        }
        let flat = reshape(&x, &[n, self.enc_fc.inputs()])?;
        Encoding::new(self.enc_fc.forward(&flat)?)
    }

    /// Per-pixel class logits reconstructed from an encoding.
    pub fn decode(&self, encoding: &Encoding, target_hw: (usize, usize)) -> Result<Var> {
        check_spatial(target_hw.0, target_hw.1)?;
        if target_hw != self.input_hw {
            return Err(TcnnError::invalid(format!(
                "decoder restores {:?}, asked for {target_hw:?}",
                self.input_hw
            )));
        }
        record_autoencoder_activity();
        let n = encoding.batch();
        let flat = self.dec_fc.forward(encoding.var())?;
        let mut x = reshape(
            &flat,
            &[n, 64, target_hw.0 / DOWNSAMPLE, target_hw.1 / DOWNSAMPLE],
        )?;
        for layer in &self.decoder {
            x = match layer {
                DecoderLayer::Up(l) => l.forward(&x)?,
                DecoderLayer::Same(l) => l.forward(&x)?,
            };
        }
        Ok(x)
    }

    pub fn reconstruct(&self, input: &Var) -> Result<Var> {
        let enc = self.encode(input)?;
        self.decode(&enc, self.input_hw)
    }

    /// Encoder rows followed by decoder rows, in execution order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let mut specs: Vec<LayerSpec> = self.encoder.iter().map(Conv2d::spec).collect();
        specs.push(self.enc_fc.spec());
        specs.push(self.dec_fc.spec());
        specs.extend(self.decoder.iter().map(|l| match l {
            DecoderLayer::Up(l) => l.spec(),
            DecoderLayer::Same(l) => l.spec(),
        }));
        specs
    }
}

impl Module for Autoencoder {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut ps: Vec<&Parameter> = self.encoder.iter().flat_map(Conv2d::params).collect();
        ps.extend(self.enc_fc.params());
        ps.extend(self.dec_fc.params());
        for l in &self.decoder {
            match l {
                DecoderLayer::Up(l) => ps.extend(l.params()),
                DecoderLayer::Same(l) => ps.extend(l.params()),
            }
        }
        ps
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut ps: Vec<&mut Parameter> =
            self.encoder.iter_mut().flat_map(Conv2d::params_mut).collect();
        ps.extend(self.enc_fc.params_mut());
        ps.extend(self.dec_fc.params_mut());
        for l in &mut self.decoder {
            match l {
                DecoderLayer::Up(l) => ps.extend(l.params_mut()),
                DecoderLayer::Same(l) => ps.extend(l.params_mut()),
            }
        }
        ps
    }
}
