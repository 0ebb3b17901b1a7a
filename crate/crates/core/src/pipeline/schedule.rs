use crate::error::{validation, Result};

/// Linear warmup followed by step decay.
///
/// `lr(e)` rises linearly from `warmup_start_lr` at epoch 0 to `base_lr` at
/// `warmup_epochs`, then is divided by `1 / decay_factor` once for every decay
/// epoch `<= e`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub warmup_start_lr: f64,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub decay_factor: f64,
    pub decay_epochs: Vec<usize>,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(
        warmup_start_lr: f64,
        base_lr: f64,
        warmup_epochs: usize,
        decay_factor: f64,
        decay_epochs: Vec<usize>,
        total_epochs: usize,
    ) -> Result<Self> {
        if total_epochs == 0 {
            return Err(validation!("total_epochs must be >= 1"));
        }
        for lr in [warmup_start_lr, base_lr] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(validation!("learning rates must be finite and > 0, got {lr}"));
            }
        }
        if !(decay_factor > 0.0 && decay_factor.is_finite()) {
            return Err(validation!("lr_decay_factor must be finite and > 0"));
        }
        if decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(validation!("lr_decay_epochs must be strictly increasing: {decay_epochs:?}"));
        }
        if decay_epochs.last().is_some_and(|&e| e >= total_epochs) {
            return Err(validation!("lr_decay_epochs must be < total_epochs = {total_epochs}"));
        }
        Ok(Self { warmup_start_lr, base_lr, warmup_epochs, decay_factor, decay_epochs, total_epochs })
    }

    /// A fixed learning rate for `total_epochs` epochs.
    pub fn constant(lr: f64, total_epochs: usize) -> Result<Self> {
        Self::new(lr, lr, 0, 1.0, Vec::new(), total_epochs)
    }

    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.total_epochs {
            return Err(validation!("epoch {epoch} outside 0..{}", self.total_epochs));
        }
        if epoch < self.warmup_epochs {
            let t = epoch as f64 / self.warmup_epochs as f64;
            return Ok(self.warmup_start_lr + (self.base_lr - self.warmup_start_lr) * t);
        }
        // dividing by the reciprocal keeps 3.5e-4 * 0.1 == 3.5e-5 exact
        let divisor = self.decay_factor.recip();
        let steps = self.decay_epochs.iter().filter(|&&d| d <= epoch).count();
        Ok((0..steps).fold(self.base_lr, |lr, _| lr / divisor))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_schedule() -> LrSchedule {
        LrSchedule::new(3.5e-5, 3.5e-4, 10, 0.1, vec![40, 70], 120).unwrap()
    }

    #[test]
    fn anchor_values_are_exact() {
        let s = default_schedule();
        assert_eq!(s.lr_at(0).unwrap(), 3.5e-5);
        assert_eq!(s.lr_at(10).unwrap(), 3.5e-4);
        assert_eq!(s.lr_at(40).unwrap(), 3.5e-5);
    }

    #[test]
    fn piecewise_shape() {
        let s = default_schedule();
        let lrs: Vec<f64> = (0..120).map(|e| s.lr_at(e).unwrap()).collect();
        assert!(lrs[..=10].windows(2).all(|w| w[0] < w[1]));
        assert!((lrs[5] - (3.5e-5 + 0.5 * (3.5e-4 - 3.5e-5))).abs() < 1e-18);
        assert!(lrs[10..40].iter().all(|&v| v == 3.5e-4));
        assert!(lrs[40..70].iter().all(|&v| v == 3.5e-5));
        assert!((lrs[70] - 3.5e-6).abs() < 1e-20);
        assert!(s.lr_at(120).is_err());
    }

    #[test]
    fn invalid_schedules() {
        assert!(LrSchedule::new(1e-3, 1e-3, 0, 0.1, vec![5, 5], 10).is_err());
        assert!(LrSchedule::new(1e-3, 1e-3, 0, 0.1, vec![10], 10).is_err());
        assert!(LrSchedule::new(0.0, 1e-3, 0, 0.1, vec![], 10).is_err());
        assert!(LrSchedule::constant(1e-2, 0).is_err());
    }
}
