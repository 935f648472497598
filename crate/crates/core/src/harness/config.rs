use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::BaselineKind;
use crate::losses::ContrastiveConfig;
use crate::model::ArchConfig;
use crate::optim::{AdamWConfig, ScheduleConfig};
use crate::robustness::DEFAULT_EPSILONS;
use crate::synthdata::{standard_domains, AugmentConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Alignment loss plus dual BCE on augmented views and masks.
    Morphgen,
    /// BCE on raw images only.
    Erm,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Morphgen => "morphgen",
            Objective::Erm => "erm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub resolution: usize,
    /// Samples rendered in the training domain, before the validation split.
    pub train_samples: usize,
    pub eval_samples_per_domain: usize,
    pub val_fraction: f64,
    pub count_range: (usize, usize),
    pub num_domains: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            resolution: 64,
            train_samples: 400,
            eval_samples_per_domain: 200,
            val_fraction: 0.2,
            count_range: (6, 12),
            num_domains: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { batch_size: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwaConfig {
    pub enabled: bool,
    pub start_epoch: u64,
}

impl Default for SwaConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            start_epoch: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    pub enabled: bool,
    /// Held-out test samples of the training domain used for corruptions and
    /// attacks (at most this many).
    pub samples: usize,
    pub severities: Vec<u8>,
    pub corruption_seeds: Vec<u64>,
    pub epsilons: Vec<f64>,
    pub pgd_steps: u32,
    pub attack_seed: u64,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            samples: 200,
            severities: vec![0, 1, 2, 3],
            corruption_seeds: vec![0],
            epsilons: DEFAULT_EPSILONS.to_vec(),
            pgd_steps: 20,
            attack_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionConfig {
    /// Samples per seed; 0 disables attribution.
    pub samples: usize,
    pub steps: usize,
    pub baseline: BaselineKind,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            samples: 4,
            steps: 256,
            baseline: BaselineKind::Zeros,
        }
    }
}

/// Everything needed to reproduce a run. Serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub objective: Objective,
    pub seeds: Vec<u64>,
    pub train_domain: u8,
    pub eval_domains: Vec<u8>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub arch: ArchConfig,
    #[serde(default)]
    pub contrastive: ContrastiveConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    #[serde(default)]
    pub swa: SwaConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
    #[serde(default)]
    pub attribution: AttributionConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Training samples after the validation split.
    pub fn train_count(&self) -> usize {
        self.dataset.train_samples - self.val_count()
    }

    pub fn val_count(&self) -> usize {
        // even, so both classes stay balanced
        let v = (self.dataset.train_samples as f64 * self.dataset.val_fraction).round() as usize;
        v - v % 2
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.train_count().div_ceil(self.training.batch_size) as u64
    }

    /// The schedule with `steps_per_epoch` derived from the dataset size.
    pub fn resolved_schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            steps_per_epoch: self.steps_per_epoch(),
            ..self.schedule.clone()
        }
    }

    /// Whether the SWA average is kept for this run.
    pub fn uses_swa(&self) -> bool {
        self.swa.enabled
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.num_domains == 0 || d.num_domains > standard_domains().len() {
            return Err(Error::Config(format!(
                "num_domains must be in 1..={}",
                standard_domains().len()
            )));
        }
        let n = d.num_domains as u8;
        if self.train_domain >= n || self.eval_domains.iter().any(|&e| e >= n) {
            return Err(Error::Config("domain index out of range".into()));
        }
        if self.eval_domains.contains(&self.train_domain) {
            return Err(Error::Config(format!(
                "train domain {} must not be an evaluation domain",
                self.train_domain
            )));
        }
        if self.eval_domains.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "need at least one seed and one evaluation domain".into(),
            ));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if d.train_samples < 4 || d.train_samples % 2 != 0 || d.eval_samples_per_domain % 2 != 0 {
            return Err(Error::Config(
                "sample counts must be even and train_samples ≥ 4".into(),
            ));
        }
        if !(0.0..0.9).contains(&d.val_fraction) || self.val_count() == 0 {
            return Err(Error::Config(format!(
                "val_fraction {} leaves no validation set",
                d.val_fraction
            )));
        }
        if d.resolution != self.arch.resolution {
            return Err(Error::Config(format!(
                "dataset resolution {} differs from architecture resolution {}",
                d.resolution, self.arch.resolution
            )));
        }
        if self.training.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.swa.enabled && !(1..=self.schedule.total_epochs).contains(&self.swa.start_epoch) {
            return Err(Error::Config(
                "swa.start_epoch must fall within training".into(),
            ));
        }
        if self
            .robustness
            .severities
            .iter()
            .any(|&s| s > crate::robustness::MAX_SEVERITY)
        {
            return Err(Error::Config("corruption severity above 3".into()));
        }
        if self.robustness.epsilons.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::Config("attack budgets must be ≥ 0".into()));
        }
        self.arch.validate()?;
        self.contrastive.validate()?;
        self.resolved_schedule().validate()?;
        self.optimizer.validate()?;
        self.augment.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            objective: Objective::Morphgen,
            seeds: vec![1, 2, 3],
            train_domain: 0,
            eval_domains: vec![1, 2, 3, 4],
            dataset: DatasetConfig::default(),
            arch: ArchConfig::default(),
            contrastive: ContrastiveConfig::default(),
            schedule: ScheduleConfig::default(),
            optimizer: AdamWConfig::default(),
            swa: SwaConfig::default(),
            training: TrainingConfig::default(),
            augment: AugmentConfig::default(),
            robustness: RobustnessConfig::default(),
            attribution: AttributionConfig::default(),
        }
    }

    #[test]
    fn round_trip() {
        let cfg = sample();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.hash().unwrap().len(), 64);
    }

    #[test]
    fn derived_counts() {
        let cfg = sample();
        assert_eq!(cfg.val_count(), 80);
        assert_eq!(cfg.train_count(), 320);
        assert_eq!(cfg.steps_per_epoch(), 3);
    }

    #[test]
    fn rejects_in_domain_evaluation() {
        let mut cfg = sample();
        cfg.eval_domains.push(0);
        assert!(cfg.validate().is_err());
        let mut cfg = sample();
        cfg.seeds = vec![1, 1];
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml("objective = \"sgd\"").is_err());
    }
}
