use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Linear warmup to `peak_lr` followed by cosine decay to zero.
///
/// `steps_per_epoch` depends on the dataset size and batch size, so training
/// fills it in; configuration files may leave it out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub warmup_epochs: u64,
    pub total_epochs: u64,
    #[serde(default = "one")]
    pub steps_per_epoch: u64,
}

fn one() -> u64 {
    1
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            peak_lr: 1.5e-4,
            warmup_epochs: 40,
            total_epochs: 500,
            steps_per_epoch: 1,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config(format!(
                "peak_lr {} must be positive",
                self.peak_lr
            )));
        }
        if !(0 < self.warmup_epochs && self.warmup_epochs < self.total_epochs) {
            return Err(Error::Config(format!(
                "need 0 < warmup_epochs ({}) < total_epochs ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::Config("steps_per_epoch must be positive".into()));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> u64 {
        self.warmup_epochs * self.steps_per_epoch
    }

    pub fn total_steps(&self) -> u64 {
        self.total_epochs * self.steps_per_epoch
    }
}

/// Learning rate at `step`, where step 0 is the start of training and
/// `total_steps()` is the end. Steps past the end give 0.
///
/// ```
/// use morphgen::optim::{lr_at, ScheduleConfig};
/// let cfg = ScheduleConfig { steps_per_epoch: 10, ..Default::default() };
/// assert_eq!(lr_at(&cfg, 0), 0.0);
/// assert_eq!(lr_at(&cfg, cfg.warmup_steps()), 1.5e-4);
/// assert_eq!(lr_at(&cfg, cfg.total_steps()), 0.0);
/// ```
pub fn lr_at(cfg: &ScheduleConfig, step: u64) -> f64 {
    let warmup = cfg.warmup_steps();
    let total = cfg.total_steps();
    if step > total {
        0.0
    } else if step <= warmup {
        cfg.peak_lr * step as f64 / warmup as f64
    } else {
        let tau = (step - warmup) as f64 / (total - warmup) as f64;
        cfg.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * tau).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn long_run() -> ScheduleConfig {
        ScheduleConfig {
            steps_per_epoch: 7,
            ..Default::default()
        }
    }

    #[test]
    fn endpoints() {
        let cfg = long_run();
        let w = cfg.warmup_steps();
        let t = cfg.total_steps();
        assert_eq!(lr_at(&cfg, 0), 0.0);
        assert_eq!(lr_at(&cfg, w), 1.5e-4);
        assert_eq!(lr_at(&cfg, w + (t - w) / 2), 7.5e-5);
        assert_eq!(lr_at(&cfg, t), 0.0);
        assert_eq!(lr_at(&cfg, t + 1), 0.0);
    }

    #[test]
    fn continuous_at_boundary_and_monotone() {
        let cfg = long_run();
        let w = cfg.warmup_steps();
        let increment = cfg.peak_lr / w as f64;
        assert_eq!(lr_at(&cfg, w), cfg.peak_lr);
        assert!((lr_at(&cfg, w) - lr_at(&cfg, w + 1)).abs() < increment * 1e-3);
        for s in 1..=w {
            assert!(lr_at(&cfg, s) > lr_at(&cfg, s - 1));
        }
        for s in w + 1..=cfg.total_steps() {
            assert!(lr_at(&cfg, s) < lr_at(&cfg, s - 1));
        }
    }

    #[test]
    fn validation() {
        assert!(long_run().validate().is_ok());
        let bad = ScheduleConfig {
            warmup_epochs: 500,
            ..long_run()
        };
        assert!(bad.validate().is_err());
        let bad = ScheduleConfig {
            warmup_epochs: 0,
            ..long_run()
        };
        assert!(bad.validate().is_err());
    }
}
