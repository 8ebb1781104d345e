//! Pixel-wise, global (shape-space) and temporal-consistency losses.

use crate::autograd::{add, cross_entropy_channels, l2_distance, mse, relu, scale, sub, Var};
use crate::error::{Result, TcnnError};
use crate::mask::{one_hot, SegMask};
use crate::nn::{Autoencoder, Encoding};
use crate::param::Module;
use crate::tensor::Tensor;

/// Weights of the global and consistency terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    lambda_g: f64,
    lambda_c: f64,
}

impl LossWeights {
    /// Laparoscopic-video setting; the default profile.
    pub const ENDOSCAPES: LossWeights = LossWeights {
        lambda_g: 1.5,
        lambda_c: 0.01,
    };
    /// Cataract-video setting.
    pub const CADIS: LossWeights = LossWeights {
        lambda_g: 1.5,
        lambda_c: 0.001,
    };
    pub const NONE: LossWeights = LossWeights {
        lambda_g: 0.0,
        lambda_c: 0.0,
    };

    pub fn new(lambda_g: f64, lambda_c: f64) -> Result<Self> {
        for (name, v) in [("lambda_g", lambda_g), ("lambda_c", lambda_c)] {
            if !v.is_finite() || v < 0.0 {
                return Err(TcnnError::invalid(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(LossWeights { lambda_g, lambda_c })
    }

    pub fn lambda_g(&self) -> f64 {
        self.lambda_g
    }

    pub fn lambda_c(&self) -> f64 {
        self.lambda_c
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::ENDOSCAPES
    }
}

/// Mean per-pixel cross-entropy of `[N, C, H, W]` logits against `N` masks,
/// skipping pixels whose ground-truth class is ignored.
pub fn seg_loss(logits: &Var, targets: &[SegMask], ignore_classes: &[u8]) -> Result<Var> {
    let (n, c, h, w) = logits.value().dims4()?;
    if targets.len() != n {
        return Err(TcnnError::invalid(format!(
            "seg_loss: {n} logit maps but {} masks",
            targets.len()
        )));
    }
    let mut classes = Vec::with_capacity(n * h * w);
    let mut valid = Vec::with_capacity(n * h * w);
    for m in targets {
        if (m.height(), m.width()) != (h, w) || m.num_classes() != c {
            return Err(TcnnError::invalid(format!(
                "seg_loss: mask {}x{} with {} classes vs logits {:?}",
                m.height(),
                m.width(),
                m.num_classes(),
                logits.shape()
            )));
        }
        for &v in m.grid() {
            classes.push(v as usize);
            valid.push(!ignore_classes.contains(&v));
        }
    }
    cross_entropy_channels(logits, &classes, &valid)
}

/// Mean squared distance between two batches of encodings.
pub fn encoding_distance(pred: &Encoding, target: &Encoding) -> Result<Var> {
    mse(pred.var(), target.var())
}

/// Encodings of ground-truth masks. No gradient is recorded.
pub fn encode_masks(encoder: &Autoencoder, masks: &[SegMask]) -> Result<Encoding> {
    let oh = one_hot(masks, encoder.num_classes())?;
    encoder.encode(&Var::constant(oh))
}

fn require_frozen(encoder: &Autoencoder) -> Result<()> {
    if !encoder.is_frozen() {
        return Err(TcnnError::state(
            "the shape encoder must be frozen while training the segmentation network",
        ));
    }
    Ok(())
}

/// Shape-space distance between predicted class probabilities and the
/// ground-truth masks. Gradients reach `pred_probs` only.
pub fn global_loss(pred_probs: &Var, gt: &[SegMask], encoder: &Autoencoder) -> Result<Var> {
    require_frozen(encoder)?;
    let pred = encoder.encode(pred_probs)?;
    let target = encode_masks(encoder, gt)?;
    encoding_distance(&pred, &target)
}

/// Same as [`global_loss`] for callers that already hold both encodings.
pub fn global_loss_encoded(
    pred: &Encoding,
    target: &Encoding,
    encoder: &Autoencoder,
) -> Result<Var> {
    require_frozen(encoder)?;
    encoding_distance(pred, target)
}

/// Triplet penalty `max(0, |a - p| - |a - n| + margin)` on single encodings.
pub fn consistency_loss(anchor: &Var, positive: &Var, negative: &Var, margin: f64) -> Result<Var> {
    let d_ap = l2_distance(anchor, positive)?;
    let d_an = l2_distance(anchor, negative)?;
    let gap = sub(&d_ap, &d_an)?;
    let gap = if margin == 0.0 {
        gap
    } else {
        add(&gap, &Var::constant(Tensor::scalar(margin)))?
    };
    Ok(relu(&gap))
}

/// Consistency over a clip: the triplet penalty applied to every run of three
/// consecutive encodings, averaged.
pub fn sequence_consistency(encodings: &[Var], margin: f64) -> Result<Var> {
    if encodings.len() < 3 {
        return Err(TcnnError::invalid(format!(
            "consistency needs at least 3 frames, got {}",
            encodings.len()
        )));
    }
    let mut total: Option<Var> = None;
    let triples = encodings.len() - 2;
    for t in encodings.windows(3) {
        let term = consistency_loss(&t[0], &t[1], &t[2], margin)?;
        total = Some(match total {
            Some(acc) => add(&acc, &term)?,
            None => term,
        });
    }
    Ok(scale(&total.expect("at least one triple"), 1.0 / triples as f64))
}

/// `seg + lambda_g * global + lambda_c * consistency`.
pub fn combined_loss(
    seg: &Var,
    global: &Var,
    consistency: &Var,
    weights: LossWeights,
) -> Result<Var> {
    for (name, v) in [("seg", seg), ("global", global), ("consistency", consistency)] {
        if !v.value().is_scalar() || !v.value().all_finite() {
            return Err(TcnnError::invalid(format!(
                "{name} term must be a finite scalar"
            )));
        }
    }
    let with_global = add(seg, &scale(global, weights.lambda_g))?;
    add(&with_global, &scale(consistency, weights.lambda_c))
}
