use crate::{Error, Result};

/// Running average of weight snapshots.
///
/// Each update applies `w_swa ← (w_swa · n + w) / (n + 1)`, evaluated in the
/// incremental form `w_swa + (w − w_swa) / (n + 1)` so that repeated identical
/// snapshots stay bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SwaState {
    w_swa: Option<Vec<f64>>,
    n_models: u64,
    /// First 1-based epoch whose end-of-epoch weights are averaged.
    pub start_epoch: u64,
}

impl Default for SwaState {
    fn default() -> Self {
        Self::new(25)
    }
}

impl SwaState {
    pub fn new(start_epoch: u64) -> Self {
        Self {
            w_swa: None,
            n_models: 0,
            start_epoch,
        }
    }

    /// Rebuild from a stored average; `w_swa` must be present iff `n_models > 0`.
    pub fn restore(w_swa: Option<Vec<f64>>, n_models: u64, start_epoch: u64) -> Result<Self> {
        if w_swa.is_some() != (n_models > 0) {
            return Err(Error::Config(format!(
                "SWA average presence disagrees with n_models = {n_models}"
            )));
        }
        Ok(Self {
            w_swa,
            n_models,
            start_epoch,
        })
    }

    pub fn n_models(&self) -> u64 {
        self.n_models
    }

    /// The current average, if any snapshot has been taken.
    pub fn average(&self) -> Option<&[f64]> {
        self.w_swa.as_deref()
    }

    /// Whether weights at the end of `epoch` (1-based) should be averaged.
    pub fn should_snapshot(&self, epoch: u64) -> bool {
        epoch >= self.start_epoch
    }

    pub fn update(&mut self, w: &[f64]) -> Result<()> {
        match &mut self.w_swa {
            None => self.w_swa = Some(w.to_vec()),
            Some(avg) => {
                if avg.len() != w.len() {
                    return Err(Error::Shape(format!(
                        "snapshot has {} entries, average has {}",
                        w.len(),
                        avg.len()
                    )));
                }
                let k = (self.n_models + 1) as f64;
                for (a, &x) in avg.iter_mut().zip(w) {
                    *a += (x - *a) / k;
                }
            }
        }
        self.n_models += 1;
        Ok(())
    }

    /// Averaged weights for evaluation.
    pub fn finalize(&self) -> Result<Vec<f64>> {
        self.w_swa.clone().ok_or(Error::EmptyAverage("SWA average"))
    }
}
