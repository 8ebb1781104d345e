use crate::error::{Result, TcnnError};

/// Polynomial decay from `initial_lr` to `final_lr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolySchedule {
    pub initial_lr: f64,
    pub final_lr: f64,
    pub power: f64,
}

impl Default for PolySchedule {
    fn default() -> Self {
        PolySchedule {
            initial_lr: 7e-3,
            final_lr: 1e-6,
            power: 0.9,
        }
    }
}

impl PolySchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > self.final_lr && self.final_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(TcnnError::invalid(format!(
                "learning rates must satisfy initial > final > 0, got {} and {}",
                self.initial_lr, self.final_lr
            )));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(TcnnError::invalid(format!("poly power must be positive, got {}", self.power)));
        }
        Ok(())
    }
}

/// `final + (initial - final) * (1 - step / total)^power`.
pub fn poly_lr(step: u64, total_steps: u64, schedule: &PolySchedule) -> Result<f64> {
    if total_steps == 0 {
        return Err(TcnnError::invalid("total_steps must be positive"));
    }
    if step > total_steps {
        return Err(TcnnError::invalid(format!("step {step} beyond total {total_steps}")));
    }
    let remaining = 1.0 - step as f64 / total_steps as f64;
    Ok(schedule.final_lr + (schedule.initial_lr - schedule.final_lr) * remaining.powf(schedule.power))
}
