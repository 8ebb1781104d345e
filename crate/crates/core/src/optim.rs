//! Heavy-ball SGD with momentum.

use crate::error::{Result, TcnnError};
use crate::param::Parameter;

/// One update `v <- momentum * v + grad; p <- p - lr * v` on every trainable
/// parameter, after which gradients are cleared. Frozen parameters are
/// skipped entirely and keep their velocity. Nothing is modified when a
/// trainable parameter lacks a gradient.
pub fn sgd_momentum_step(params: &mut [&mut Parameter], lr: f64, momentum: f64) -> Result<()> {
    if !lr.is_finite() || !momentum.is_finite() || lr < 0.0 || momentum < 0.0 {
        return Err(TcnnError::invalid(format!(
            "learning rate {lr} and momentum {momentum} must be finite and non-negative"
        )));
    }
    if let Some(p) = params.iter().find(|p| !p.is_frozen() && p.grad().is_none()) {
        return Err(TcnnError::state(format!(
            "trainable parameter {} has no gradient",
            p.name()
        )));
    }
    for p in params.iter_mut() {
        if p.is_frozen() {
            p.zero_grad();
        } else {
            p.apply_update(lr, momentum);
        }
    }
    Ok(())
}
