//! Stage two: the segmentation network, supervised by the frozen encoder.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::infer::{evaluate_windows, frame_input, probabilities};
use super::schedule::poly_lr;
use crate::autograd::{add, backward, scale, Var};
use crate::checkpoint::Checkpoint;
use crate::data::{sample_windows, SequenceWindow, Video, WINDOW_LEN};
use crate::error::{Result, TcnnError};
use crate::losses::{combined_loss, encode_masks, global_loss_encoded, seg_loss, sequence_consistency};
use crate::mask::ClassTable;
use crate::nn::{Autoencoder, Encoding, SegNet};
use crate::optim::sgd_momentum_step;
use crate::param::Module;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_miou: f64,
}

/// Outcome of [`train_segmentation`]. `net` holds the best weights.
#[derive(Debug)]
pub struct SegTraining {
    pub net: SegNet,
    pub checkpoint: Checkpoint,
    pub best_val_miou: f64,
    pub history: Vec<EpochLog>,
    pub steps: u64,
}

/// Loss terms of one batch, before weighting.
#[derive(Debug)]
pub struct BatchLosses {
    pub seg: Var,
    pub global: Option<Var>,
    pub consistency: Option<Var>,
    pub total: Var,
}

pub fn windows_of(videos: &[Video], fps_stride: usize) -> Result<Vec<SequenceWindow>> {
    let mut out = Vec::new();
    for v in videos {
        out.extend(sample_windows(v, fps_stride)?);
    }
    Ok(out)
}

/// Forward pass and loss for a batch of windows. Only the labeled frame
/// reaches the pixel-wise and global terms; the unlabeled frames are read
/// when the network is temporal or the consistency term is on.
pub fn batch_losses(
    net: &SegNet,
    ae: Option<&Autoencoder>,
    windows: &[&SequenceWindow],
    cfg: &TrainConfig,
) -> Result<BatchLosses> {
    let weights = cfg.weights;
    let use_global = weights.lambda_g() > 0.0;
    let use_consistency = weights.lambda_c() > 0.0;
    let ae = match (use_global || use_consistency, ae) {
        (false, _) => None,
        (true, Some(ae)) if ae.is_frozen() => Some(ae),
        (true, Some(_)) => {
            return Err(TcnnError::state("the autoencoder must be frozen during stage two"))
        }
        (true, None) => {
            return Err(TcnnError::invalid(
                "global and consistency terms need an autoencoder",
            ))
        }
    };

    let logits: Vec<Var> = if net.has_temporal_module() || use_consistency {
        let inputs = (0..WINDOW_LEN)
            .map(|k| frame_input(&windows.iter().map(|w| &w.frames()[k]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        net.forward_sequence(&inputs)?
    } else {
        let input = frame_input(&windows.iter().map(|w| w.labeled_frame()).collect::<Vec<_>>())?;
        vec![net.forward(&input)?]
    };
    let labeled = logits.last().expect("at least one frame");
    let gts: Vec<_> = windows.iter().map(|w| w.gt_mask().clone()).collect();
    let seg = seg_loss(labeled, &gts, &cfg.ignore_classes)?;

    let mut global = None;
    let mut consistency = None;
    if let Some(ae) = ae {
        let encodings: Vec<Encoding> = if use_consistency {
            logits
                .iter()
                .map(|l| ae.encode(&probabilities(l)?))
                .collect::<Result<_>>()?
        } else {
            vec![ae.encode(&probabilities(labeled)?)?]
        };
        if use_global {
            let target = encode_masks(ae, &gts)?;
            global = Some(global_loss_encoded(
                encodings.last().expect("labeled encoding"),
                &target,
                ae,
            )?);
        }
        if use_consistency {
            let mut sum: Option<Var> = None;
            for b in 0..windows.len() {
                let seq = encodings
                    .iter()
                    .map(|e| e.item(b))
                    .collect::<Result<Vec<_>>>()?;
                let term = sequence_consistency(&seq, cfg.margin)?;
                sum = Some(match sum {
                    Some(acc) => add(&acc, &term)?,
                    None => term,
                });
            }
            consistency = Some(scale(&sum.expect("non-empty batch"), 1.0 / windows.len() as f64));
        }
    }

    let zero = Var::constant(Tensor::scalar(0.0));
    let total = combined_loss(
        &seg,
        global.as_ref().unwrap_or(&zero),
        consistency.as_ref().unwrap_or(&zero),
        weights,
    )?;
    Ok(BatchLosses {
        seg,
        global,
        consistency,
        total,
    })
}

/// Trains the segmentation network on the training windows and keeps the
/// weights with the best validation mean IoU. `ae` must be frozen; it may
/// be omitted when both extra loss weights are zero.
pub fn train_segmentation(
    cfg: &TrainConfig,
    train_videos: &[Video],
    val_videos: &[Video],
    classes: &ClassTable,
    ae: Option<&Autoencoder>,
) -> Result<SegTraining> {
    cfg.validate()?;
    if let Some(ae) = ae {
        if !ae.is_frozen() {
            return Err(TcnnError::state("the autoencoder must be frozen during stage two"));
        }
        if ae.num_classes() != classes.len() {
            return Err(TcnnError::Validation(format!(
                "autoencoder encodes {} classes, the data has {}",
                ae.num_classes(),
                classes.len()
            )));
        }
    }
    let train = windows_of(train_videos, cfg.fps_stride)?;
    let val = windows_of(val_videos, cfg.fps_stride)?;
    if train.is_empty() || val.is_empty() {
        return Err(TcnnError::Degenerate("no complete training or validation windows".into()));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(10);
    let mut net = SegNet::new(3, classes.len(), cfg.temporal_module, &mut init_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(11);

    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total = (cfg.epochs * steps_per_epoch) as u64;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let windows: Vec<&SequenceWindow> = batch.iter().map(|&i| &train[i]).collect();
            let losses = batch_losses(&net, ae, &windows, cfg)?;
            let grads = backward(&losses.total)?;
            net.accumulate_grads(&grads);
            let lr = poly_lr(step, total, &cfg.schedule)?;
            sgd_momentum_step(&mut net.parameters_mut(), lr, cfg.momentum)?;
            loss_sum += losses.total.item();
            step += 1;
        }
        let report = evaluate_windows(&net, &val, classes, &cfg.ignore_classes)?.report()?;
        let mean_loss = loss_sum / steps_per_epoch as f64;
        log::info!(
            "seg epoch {epoch}: loss {mean_loss:.4}, val mIoU {:.4}",
            report.mean_iou
        );
        history.push(EpochLog {
            epoch,
            mean_loss,
            val_miou: report.mean_iou,
        });
        if best.as_ref().is_none_or(|(b, _)| report.mean_iou > *b) {
            best = Some((report.mean_iou, Checkpoint::from_module(&net, step)));
        }
    }

    let (best_val_miou, checkpoint) = best.expect("at least one epoch");
    checkpoint.load_module(&mut net)?;
    Ok(SegTraining {
        net,
        checkpoint,
        best_val_miou,
        history,
        steps: step,
    })
}
