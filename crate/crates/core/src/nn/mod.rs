//! Network architectures: the mask autoencoder, the segmentation network and
//! its convolutional LSTM temporal module.

mod autoencoder;
mod convlstm;
mod layers;
mod segnet;

pub use autoencoder::{Autoencoder, Encoding, ENCODING_DIM};
pub use convlstm::{ConvLstmCell, LstmState};
pub use layers::{Activation, Conv2d, ConvTranspose2d, LayerKind, LayerSpec, Linear};
pub use segnet::SegNet;

use std::cell::Cell;

/// Total downsampling of both encoders.
pub const DOWNSAMPLE: usize = 16;

thread_local! {
    static AE_ACTIVITY: Cell<u64> = const { Cell::new(0) };
}

/// Number of autoencoder constructions and evaluations on this thread.
pub fn autoencoder_activity() -> u64 {
    AE_ACTIVITY.with(Cell::get)
}

pub(crate) fn record_autoencoder_activity() {
    AE_ACTIVITY.with(|c| c.set(c.get() + 1));
}

pub(crate) fn check_spatial(h: usize, w: usize) -> crate::Result<()> {
    if h % DOWNSAMPLE != 0 || w % DOWNSAMPLE != 0 {
        return Err(crate::TcnnError::invalid(format!(
            "spatial size {h}x{w} is not divisible by {DOWNSAMPLE}"
        )));
    }
    Ok(())
}
