//! Loading trained networks, per-pixel prediction and evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Var;
use crate::checkpoint::Checkpoint;
use crate::data::{stack_images, Image, SequenceWindow, WINDOW_LEN};
use crate::error::{Result, TcnnError};
use crate::mask::{ClassTable, SegMask};
use crate::metrics::ConfusionMatrix;
use crate::nn::{Autoencoder, SegNet};
use crate::param::Module;
use crate::tensor::Tensor;

const TEMPORAL_PREFIX: &str = "seg.temporal.";
const EVAL_BATCH: usize = 8;

/// Network input for a batch of frames: `[N, 3, H, W]`, centred on zero.
pub fn frame_input(images: &[&Image]) -> Result<Var> {
    let mut t = stack_images(images)?;
    t.data_mut().iter_mut().for_each(|v| *v -= 0.5);
    Ok(Var::constant(t))
}

/// Per-pixel argmax of `[N, C, H, W]` logits; ties go to the lower class id.
pub fn argmax_masks(logits: &Tensor, classes: &ClassTable) -> Result<Vec<SegMask>> {
    let (n, c, h, w) = logits.dims4()?;
    if c != classes.len() {
        return Err(TcnnError::invalid(format!(
            "{c} logit channels for {} classes",
            classes.len()
        )));
    }
    let plane = h * w;
    let data = logits.data();
    (0..n)
        .map(|b| {
            let grid = (0..plane)
                .map(|px| {
                    let mut best = 0;
                    for k in 1..c {
                        if data[(b * c + k) * plane + px] > data[(b * c + best) * plane + px] {
                            best = k;
                        }
                    }
                    best as u8
                })
                .collect();
            SegMask::new(h, w, grid, classes.clone())
        })
        .collect()
}

fn record_shape<'a>(ckpt: &'a Checkpoint, name: &str) -> Result<&'a [usize]> {
    ckpt.get(name)
        .map(Tensor::shape)
        .ok_or_else(|| TcnnError::Validation(format!("checkpoint lacks {name}")))
}

/// Checks that the checkpoint's parameter records under `prefix` are
/// exactly the module's parameters.
fn check_record_set(ckpt: &Checkpoint, module: &impl Module, prefix: &str) -> Result<()> {
    let mut stored: Vec<&str> = ckpt
        .names()
        .filter(|n| n.starts_with(prefix) && !n.ends_with(".velocity"))
        .collect();
    let mut wanted: Vec<&str> = module.parameters().iter().map(|p| p.name()).collect();
    stored.sort_unstable();
    wanted.sort_unstable();
    if stored != wanted {
        return Err(TcnnError::Validation(format!(
            "checkpoint holds {} `{prefix}` parameters, the architecture has {}",
            stored.len(),
            wanted.len()
        )));
    }
    Ok(())
}

/// Rebuilds a segmentation network from a checkpoint. Whether it carries a
/// temporal module and how many classes it predicts are read from the
/// stored shapes.
pub fn load_segnet(ckpt: &Checkpoint) -> Result<SegNet> {
    let enc = record_shape(ckpt, "seg.enc1.weight")?;
    let head = record_shape(ckpt, "seg.head.weight")?;
    if enc.len() != 4 || head.len() != 4 {
        return Err(TcnnError::Validation("segmentation weights must be rank 4".into()));
    }
    let temporal = ckpt.has_prefix(TEMPORAL_PREFIX);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = SegNet::new(enc[1], head[0], temporal, &mut rng);
    check_record_set(ckpt, &net, "seg.")?;
    ckpt.load_module(&mut net)?;
    Ok(net)
}

/// Rebuilds the autoencoder for `num_classes` masks of size `input_hw` and
/// freezes it. Any architectural mismatch is a validation error.
pub fn load_autoencoder(
    ckpt: &Checkpoint,
    num_classes: usize,
    input_hw: (usize, usize),
) -> Result<Autoencoder> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ae = Autoencoder::new(num_classes, input_hw, &mut rng)?;
    check_record_set(ckpt, &ae, "ae.")?;
    ckpt.load_module(&mut ae)?;
    ae.freeze();
    Ok(ae)
}

/// Masks for a sequence of frames. Temporal networks see the frames in
/// consecutive chunks of four, with the recurrent state reset per chunk.
pub fn predict_frames(net: &SegNet, frames: &[Image], classes: &ClassTable) -> Result<Vec<SegMask>> {
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(WINDOW_LEN) {
        let inputs = chunk
            .iter()
            .map(|f| frame_input(&[f]))
            .collect::<Result<Vec<_>>>()?;
        for logits in net.forward_sequence(&inputs)? {
            out.extend(argmax_masks(logits.value(), classes)?);
        }
    }
    Ok(out)
}

/// Loads the segmentation network and predicts every frame. The
/// autoencoder plays no part.
pub fn infer(seg_checkpoint: &Checkpoint, frames: &[Image], classes: &ClassTable) -> Result<Vec<SegMask>> {
    let net = load_segnet(seg_checkpoint)?;
    if net.num_classes() != classes.len() {
        return Err(TcnnError::Validation(format!(
            "network predicts {} classes, the class table has {}",
            net.num_classes(),
            classes.len()
        )));
    }
    predict_frames(&net, frames, classes)
}

/// Logits for the labeled frame of each window: temporal networks read the
/// whole window, others only the labeled frame.
pub fn window_logits(net: &SegNet, windows: &[&SequenceWindow]) -> Result<Var> {
    if net.has_temporal_module() {
        let inputs = (0..WINDOW_LEN)
            .map(|k| frame_input(&windows.iter().map(|w| &w.frames()[k]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        Ok(net.forward_sequence(&inputs)?.pop().expect("four frames"))
    } else {
        let input = frame_input(&windows.iter().map(|w| w.labeled_frame()).collect::<Vec<_>>())?;
        net.forward(&input)
    }
}

/// Pooled confusion matrix of the network over the labeled frames of
/// `windows`.
pub fn evaluate_windows(
    net: &SegNet,
    windows: &[SequenceWindow],
    classes: &ClassTable,
    ignore_classes: &[u8],
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(classes.len(), ignore_classes)?;
    let refs: Vec<&SequenceWindow> = windows.iter().collect();
    for batch in refs.chunks(EVAL_BATCH) {
        let logits = window_logits(net, batch)?;
        let preds = argmax_masks(logits.value(), classes)?;
        for (pred, w) in preds.iter().zip(batch) {
            cm.accumulate(pred, w.gt_mask())?;
        }
    }
    Ok(cm)
}

/// Per-class probabilities from logits.
pub(crate) fn probabilities(logits: &Var) -> Result<Var> {
    crate::autograd::softmax_channels(logits)
}
