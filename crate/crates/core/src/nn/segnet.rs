use rand::Rng;

use super::check_spatial;
use super::convlstm::ConvLstmCell;
use super::layers::{Activation, Conv2d, ConvTranspose2d};
use crate::autograd::{add, Var};
use crate::error::{Result, TcnnError};
use crate::param::{Module, Parameter};

const ENCODER_FILTERS: [usize; 4] = [16, 32, 64, 64];
const DECODER_FILTERS: [usize; 4] = [64, 32, 16, 16];

/// Compact encoder-decoder segmentation network with an optional ConvLSTM
/// at the bottleneck whose hidden state is added to the encoder features.
#[derive(Clone, Debug)]
pub struct SegNet {
    in_channels: usize,
    num_classes: usize,
    encoder: Vec<Conv2d>,
    temporal: Option<ConvLstmCell>,
    decoder: Vec<ConvTranspose2d>,
    head: Conv2d,
}

impl SegNet {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        num_classes: usize,
        temporal: bool,
        rng: &mut R,
    ) -> Self {
        let relu = Activation::Relu;
        let mut channels = in_channels;
        let mut encoder = Vec::new();
        for (i, &f) in ENCODER_FILTERS.iter().enumerate() {
            encoder.push(Conv2d::new(&format!("seg.enc{}", i + 1), channels, f, 2, relu, rng));
            channels = f;
        }
        let temporal = temporal.then(|| ConvLstmCell::new("seg.temporal", channels, channels, rng));
        let mut decoder = Vec::new();
        for (i, &f) in DECODER_FILTERS.iter().enumerate() {
            decoder.push(ConvTranspose2d::new(
                &format!("seg.dec{}", i + 1),
                channels,
                f,
                2,
                relu,
                rng,
            ));
            channels = f;
        }
        let head = Conv2d::new("seg.head", channels, num_classes, 1, Activation::None, rng);
        SegNet {
            in_channels,
            num_classes,
            encoder,
            temporal,
            decoder,
            head,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn has_temporal_module(&self) -> bool {
        self.temporal.is_some()
    }

    pub fn temporal_module_mut(&mut self) -> Option<&mut ConvLstmCell> {
        self.temporal.as_mut()
    }

    fn check_input(&self, x: &Var) -> Result<(usize, usize, usize)> {
        let (n, c, h, w) = x.value().dims4()?;
        check_spatial(h, w)?;
        if c != self.in_channels {
            return Err(TcnnError::invalid(format!(
                "segnet expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        Ok((n, h, w))
    }

    fn encode(&self, x: &Var) -> Result<Var> {
        let mut x = x.clone();
        for l in &self.encoder {
            x = l.forward(&x)?;
        }
        Ok(x)
    }

    fn decode(&self, features: &Var) -> Result<Var> {
        let mut x = features.clone();
        for l in &self.decoder {
            x = l.forward(&x)?;
        }
        self.head.forward(&x)
    }

    /// Logits for a clip of frames, each `[N, C, H, W]`. The temporal state
    /// starts at zero and threads through the frames in order; nothing is
    /// carried over between calls.
    pub fn forward_sequence(&self, frames: &[Var]) -> Result<Vec<Var>> {
        let first = frames
            .first()
            .ok_or_else(|| TcnnError::invalid("empty frame sequence"))?;
        let (n, h, w) = self.check_input(first)?;
        for f in frames {
            if self.check_input(f)? != (n, h, w) {
                return Err(TcnnError::invalid("frames in a sequence differ in shape"));
            }
        }
        let mut state = self
            .temporal
            .as_ref()
            .map(|t| t.zero_state(n, h / 16, w / 16));
        let mut out = Vec::with_capacity(frames.len());
        for f in frames {
            let feats = self.encode(f)?;
            let feats = match (&self.temporal, state.as_mut()) {
                (Some(cell), Some(s)) => {
                    *s = cell.step(&feats, s)?;
                    add(&feats, &s.hidden)?
                }
                _ => feats,
            };
            out.push(self.decode(&feats)?);
        }
        Ok(out)
    }

    /// Logits for a single frame with a fresh temporal state.
    pub fn forward(&self, frame: &Var) -> Result<Var> {
        Ok(self
            .forward_sequence(std::slice::from_ref(frame))?
            .pop()
            .expect("one frame in, one out"))
    }
}

impl Module for SegNet {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut ps: Vec<&Parameter> = self.encoder.iter().flat_map(Conv2d::params).collect();
        if let Some(t) = &self.temporal {
            ps.extend(t.params());
        }
        ps.extend(self.decoder.iter().flat_map(ConvTranspose2d::params));
        ps.extend(self.head.params());
        ps
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut ps: Vec<&mut Parameter> =
            self.encoder.iter_mut().flat_map(Conv2d::params_mut).collect();
        if let Some(t) = &mut self.temporal {
            ps.extend(t.params_mut());
        }
        ps.extend(self.decoder.iter_mut().flat_map(ConvTranspose2d::params_mut));
        ps.extend(self.head.params_mut());
        ps
    }
}
