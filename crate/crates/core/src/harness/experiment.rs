use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Objective};
use super::eval::{accuracy_of, predict, write_predictions};
use super::train::{train, LogRow, TrainData, TrainOptions};
use crate::attribution::attribution_report;
use crate::model::ModelParams;
use crate::robustness::{
    eval_under_attack, eval_under_corruption, write_attack_csv, write_corruption_csv, AttackRow,
    CorruptionKind, CorruptionRow,
};
use crate::synthdata::{
    load_images, load_split, make_dataset_with_counts, standard_domains, write_dataset, ImageSet,
};
use crate::{seed, stats, Error, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;
pub const METRICS_FILE: &str = "metrics.json";
pub const DATA_DIR: &str = "data";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: stats::mean(xs),
            sd: stats::sample_sd(xs),
            n: xs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    /// Accuracy per domain with the evaluated weights (SWA when enabled).
    pub accuracy: BTreeMap<u8, f64>,
    /// Accuracy per domain with the final weights.
    pub final_accuracy: BTreeMap<u8, f64>,
    /// Mean over the evaluation domains.
    pub ood_mean: f64,
    pub log: Vec<LogRow>,
    pub corruption: Vec<CorruptionRow>,
    pub attack: Vec<AttackRow>,
    pub attribution_max_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSummary {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub accuracy: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub epsilon: f64,
    pub accuracy: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Over seeds, per domain.
    pub per_domain: BTreeMap<u8, MeanSd>,
    pub final_per_domain: BTreeMap<u8, MeanSd>,
    /// Over seeds of the per-seed OOD mean.
    pub ood_mean: MeanSd,
    /// Sample sd across evaluation domains of the seed-averaged accuracies.
    pub cross_domain_sd: f64,
    pub corruption: Vec<CorruptionSummary>,
    pub attack: Vec<AttackSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub name: String,
    pub objective: Objective,
    pub config_hash: String,
    /// `"swa"` or `"final"`.
    pub weights: String,
    pub train_domain: u8,
    pub eval_domains: Vec<u8>,
    pub seeds: Vec<SeedMetrics>,
    pub aggregate: Aggregate,
}

impl MetricsReport {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != METRICS_SCHEMA_VERSION {
            return Err(Error::Schema {
                expected: METRICS_SCHEMA_VERSION,
                found,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Builds the aggregate block from per-seed entries.
pub fn aggregate(seeds: &[SeedMetrics], eval_domains: &[u8]) -> Aggregate {
    let domains: Vec<u8> = seeds
        .first()
        .map(|s| s.accuracy.keys().copied().collect())
        .unwrap_or_default();
    let over = |pick: &dyn Fn(&SeedMetrics) -> f64| {
        MeanSd::of(&seeds.iter().map(pick).collect::<Vec<_>>())
    };
    let per_domain: BTreeMap<u8, MeanSd> = domains
        .iter()
        .map(|&d| (d, over(&|s| s.accuracy[&d])))
        .collect();
    let final_per_domain = domains
        .iter()
        .map(|&d| (d, over(&|s| s.final_accuracy[&d])))
        .collect();
    let domain_means: Vec<f64> = eval_domains.iter().map(|d| per_domain[d].mean).collect();

    let mut corruption: BTreeMap<(CorruptionKind, u8), Vec<f64>> = BTreeMap::new();
    for row in seeds.iter().flat_map(|s| &s.corruption) {
        corruption
            .entry((row.kind, row.severity))
            .or_default()
            .push(row.accuracy);
    }
    let mut attack: Vec<(f64, Vec<f64>)> = Vec::new();
    for row in seeds.iter().flat_map(|s| &s.attack) {
        match attack.iter_mut().find(|(e, _)| *e == row.epsilon) {
            Some((_, v)) => v.push(row.accuracy),
            None => attack.push((row.epsilon, vec![row.accuracy])),
        }
    }
    Aggregate {
        per_domain,
        final_per_domain,
        ood_mean: over(&|s| s.ood_mean),
        cross_domain_sd: stats::sample_sd(&domain_means),
        corruption: corruption
            .into_iter()
            .map(|((kind, severity), v)| CorruptionSummary {
                kind,
                severity,
                accuracy: MeanSd::of(&v),
            })
            .collect(),
        attack: attack
            .into_iter()
            .map(|(epsilon, v)| AttackSummary {
                epsilon,
                accuracy: MeanSd::of(&v),
            })
            .collect(),
    }
}

/// Renders the dataset for `cfg` into `dir`: `train` and `val` splits from the
/// training domain, and a `test` split with every domain.
pub fn generate_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    let d = &cfg.dataset;
    let domains: Vec<_> = standard_domains().into_iter().take(d.num_domains).collect();
    let train_domain = [domains[cfg.train_domain as usize].clone()];
    let train_seed = seed::derive_path(d.seed, &[seed::stream::SPLIT, 0]);
    let test_seed = seed::derive_path(d.seed, &[seed::stream::SPLIT, 1]);
    let train_all = make_dataset_with_counts(
        d.train_samples / 2,
        &train_domain,
        d.resolution,
        train_seed,
        d.count_range,
    )?;
    let test = make_dataset_with_counts(
        d.eval_samples_per_domain / 2,
        &domains,
        d.resolution,
        test_seed,
        d.count_range,
    )?;
    let (train, val) = train_all.split_at(cfg.train_count());
    let seeds = BTreeMap::from([
        ("base".to_string(), d.seed),
        ("test".to_string(), test_seed),
        ("train".to_string(), train_seed),
    ]);
    write_dataset(
        dir,
        d.resolution,
        d.count_range,
        &domains,
        seeds,
        &[("train", train), ("val", val), ("test", &test)],
    )?;
    Ok(())
}

/// Loads the training data of a generated dataset.
pub fn load_train_data(dir: &Path) -> Result<TrainData> {
    Ok(TrainData {
        train: load_split(dir, "train")?,
        val: load_images(dir, "val")?,
    })
}

fn domain_accuracies(
    params: &ModelParams,
    test: &ImageSet,
    domains: &[u8],
) -> Result<BTreeMap<u8, f64>> {
    domains
        .iter()
        .map(|&d| Ok((d, accuracy_of(&predict(params, &test.domain(d)?)?)?)))
        .collect()
}

/// Trains and evaluates every seed of `cfg` under `out_dir`, writing
/// `metrics.json`, `accuracy.csv` and the per-seed artifacts.
///
/// A failure in any seed aborts the whole run.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<MetricsReport> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    fs::write(out_dir.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(out_dir, e))?;
    let data_dir = out_dir.join(DATA_DIR);
    generate_dataset(cfg, &data_dir)?;
    let data = load_train_data(&data_dir)?;
    let test = load_images(&data_dir, "test")?;

    let mut domains = vec![cfg.train_domain];
    domains.extend(&cfg.eval_domains);
    domains.sort_unstable();
    let ood = {
        let keep: Vec<usize> = (0..test.len())
            .filter(|&i| cfg.eval_domains.contains(&test.domain_ids[i]))
            .collect();
        test.select(&keep)
    };
    let robust_set = test
        .domain(cfg.train_domain)?
        .subsample_per_domain(cfg.robustness.samples);

    let mut seeds = Vec::new();
    for &s in &cfg.seeds {
        let dir = out_dir.join(format!("seed{s}"));
        let outcome = train(cfg, s, &data, &dir, &TrainOptions::default())?;
        let params = outcome.eval_params();
        let accuracy = domain_accuracies(params, &test, &domains)?;
        let final_accuracy = domain_accuracies(&outcome.final_params, &test, &domains)?;
        write_predictions(&dir.join("predictions.csv"), &predict(params, &test)?)?;
        let ood_mean = stats::mean(
            &cfg.eval_domains
                .iter()
                .map(|d| accuracy[d])
                .collect::<Vec<_>>(),
        );

        let (mut corruption, mut attack) = (Vec::new(), Vec::new());
        if cfg.robustness.enabled {
            let r = &cfg.robustness;
            corruption = eval_under_corruption(
                params,
                &robust_set,
                &CorruptionKind::ALL,
                &r.severities,
                &r.corruption_seeds,
            )?;
            attack =
                eval_under_attack(params, &robust_set, &r.epsilons, r.pgd_steps, r.attack_seed)?;
            write_corruption_csv(&dir.join("corruption.csv"), &corruption)?;
            write_attack_csv(&dir.join("attack.csv"), &attack)?;
        }
        let mut attribution_max_residual = None;
        if cfg.attribution.samples > 0 {
            let n = cfg.attribution.samples.min(ood.len());
            let rows = attribution_report(
                params,
                &ood.images[..n],
                cfg.attribution.baseline,
                cfg.attribution.steps,
                &dir.join("attribution"),
            )?;
            attribution_max_residual = Some(rows.iter().fold(0.0f64, |m, r| m.max(r.residual)));
        }
        seeds.push(SeedMetrics {
            seed: s,
            accuracy,
            final_accuracy,
            ood_mean,
            log: outcome.log,
            corruption,
            attack,
            attribution_max_residual,
        });
    }

    let report = MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        name: cfg.name.clone(),
        objective: cfg.objective,
        config_hash: cfg.hash()?,
        weights: if cfg.uses_swa() { "swa" } else { "final" }.to_string(),
        train_domain: cfg.train_domain,
        eval_domains: cfg.eval_domains.clone(),
        aggregate: aggregate(&seeds, &cfg.eval_domains),
        seeds,
    };
    report.save(&out_dir.join(METRICS_FILE))?;
    super::report::write_tables(std::slice::from_ref(&report), out_dir)?;
    Ok(report)
}
