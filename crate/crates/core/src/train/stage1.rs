//! Stage one: the mask autoencoder.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::schedule::poly_lr;
use crate::autograd::{backward, cross_entropy_channels, Var};
use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::error::{Result, TcnnError};
use crate::mask::{one_hot, SegMask};
use crate::nn::Autoencoder;
use crate::optim::sgd_momentum_step;
use crate::param::Module;

const EVAL_BATCH: usize = 8;

/// Outcome of [`train_autoencoder`]. `autoencoder` holds the best weights.
#[derive(Debug)]
pub struct AeTraining {
    pub autoencoder: Autoencoder,
    pub checkpoint: Checkpoint,
    pub best_val_accuracy: f64,
    /// Training loss of every optimizer step.
    pub losses: Vec<f64>,
    /// Validation accuracy after every epoch.
    pub val_accuracy: Vec<f64>,
    pub steps: u64,
}

fn pixel_targets(masks: &[SegMask]) -> (Vec<usize>, Vec<bool>) {
    let targets: Vec<usize> = masks
        .iter()
        .flat_map(|m| m.grid().iter().map(|&v| v as usize))
        .collect();
    let valid = vec![true; targets.len()];
    (targets, valid)
}

/// Fraction of pixels whose reconstructed class matches the input mask.
pub fn reconstruction_accuracy(ae: &Autoencoder, masks: &[SegMask]) -> Result<f64> {
    if masks.is_empty() {
        return Err(TcnnError::Degenerate("no masks to evaluate".into()));
    }
    let classes = masks[0].classes();
    let (mut hit, mut total) = (0usize, 0usize);
    for batch in masks.chunks(EVAL_BATCH) {
        let input = Var::constant(one_hot(batch, ae.num_classes())?);
        let logits = ae.reconstruct(&input)?;
        let preds = super::infer::argmax_masks(logits.value(), classes)?;
        for (p, m) in preds.iter().zip(batch) {
            hit += p.grid().iter().zip(m.grid()).filter(|(a, b)| a == b).count();
            total += m.grid().len();
        }
    }
    Ok(hit as f64 / total as f64)
}

/// Labeled masks of a set of videos, in video then frame order.
pub fn labeled_masks(videos: &[crate::data::Video]) -> Vec<SegMask> {
    videos
        .iter()
        .flat_map(|v| v.labeled_indices().into_iter().map(move |i| v.mask(i).expect("labeled").clone()))
        .collect()
}

/// Trains on the labeled training masks with online augmentation and keeps
/// the weights with the best validation reconstruction accuracy.
pub fn train_autoencoder(cfg: &TrainConfig, data: &Dataset) -> Result<AeTraining> {
    train_autoencoder_on(cfg, &labeled_masks(&data.train), &labeled_masks(&data.val))
}

pub fn train_autoencoder_on(
    cfg: &TrainConfig,
    train: &[SegMask],
    val: &[SegMask],
) -> Result<AeTraining> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TcnnError::Degenerate(
            "autoencoder training needs labeled training and validation masks".into(),
        ));
    }
    let num_classes = train[0].num_classes();
    let hw = (train[0].height(), train[0].width());
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ae = Autoencoder::new(num_classes, hw, &mut init_rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let steps_per_epoch = train.len().div_ceil(cfg.ae_batch_size);
    let total = (cfg.ae_epochs * steps_per_epoch) as u64;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;
    let mut losses = Vec::with_capacity(total as usize);
    let mut val_accuracy = Vec::with_capacity(cfg.ae_epochs);
    let mut best: Option<(f64, Checkpoint)> = None;

    for epoch in 0..cfg.ae_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.ae_batch_size) {
            let mut inputs = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &i in batch {
                let (input, target) = cfg.augmentation.training_pair(&train[i], &mut rng)?;
                inputs.push(input);
                targets.push(target);
            }
            let input = Var::constant(one_hot(&inputs, num_classes)?);
            let logits = ae.reconstruct(&input)?;
            let (t, valid) = pixel_targets(&targets);
            let loss = cross_entropy_channels(&logits, &t, &valid)?;
            let grads = backward(&loss)?;
            ae.accumulate_grads(&grads);
            let lr = poly_lr(step, total, &cfg.ae_schedule)?;
            sgd_momentum_step(&mut ae.parameters_mut(), lr, cfg.momentum)?;
            losses.push(loss.item());
            step += 1;
        }
        let acc = reconstruction_accuracy(&ae, val)?;
        log::info!("ae epoch {epoch}: loss {:.4}, val accuracy {acc:.4}", losses.last().copied().unwrap_or(f64::NAN));
        val_accuracy.push(acc);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, Checkpoint::from_module(&ae, step)));
        }
    }

    let (best_val_accuracy, checkpoint) = best.expect("at least one epoch");
    checkpoint.load_module(&mut ae)?;
    Ok(AeTraining {
        autoencoder: ae,
        checkpoint,
        best_val_accuracy,
        losses,
        val_accuracy,
        steps: step,
    })
}
