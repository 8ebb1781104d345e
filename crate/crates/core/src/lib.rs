//! Temporally constrained video segmentation at desk scale.
//!
//! A mask autoencoder defines a compact shape space; a segmentation network
//! is then trained with pixel-wise cross-entropy plus two shape-space
//! penalties: distance to the ground-truth encoding on labeled frames, and a
//! triplet ordering constraint across consecutive unlabeled frames.

pub mod augment;
pub mod autograd;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod param;
pub mod tensor;
pub mod train;

pub use error::{Result, TcnnError};
pub use tensor::Tensor;
