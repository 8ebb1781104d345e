//! Two-stage training, model selection, inference and the ablation harness.

mod ablation;
mod config;
mod infer;
mod schedule;
mod stage1;
mod stage2;

pub use ablation::{run_ablation, AblationRow, AblationTable, Variant, VARIANTS};
pub use config::TrainConfig;
pub use infer::{
    argmax_masks, evaluate_windows, frame_input, infer, load_autoencoder, load_segnet,
    predict_frames, window_logits,
};
pub use schedule::{poly_lr, PolySchedule};
pub use stage1::{labeled_masks, reconstruction_accuracy, train_autoencoder, train_autoencoder_on, AeTraining};
pub use stage2::{batch_losses, train_segmentation, windows_of, BatchLosses, EpochLog, SegTraining};
