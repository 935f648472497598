use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{corrupt, pgd_attack, AttackSpec, CorruptionKind, CorruptionSpec};
use crate::model::{sigmoid, Differentiable};
use crate::synthdata::ImageSet;
use crate::{seed, Error, Image, Result};

/// PGD budgets in image units.
pub const DEFAULT_EPSILONS: [f64; 4] = [0.5 / 255.0, 1.0 / 255.0, 1.5 / 255.0, 2.0 / 255.0];

/// Logits for every image, in order.
pub fn predict_logits<M: Differentiable + ?Sized>(model: &M, images: &[Image]) -> Result<Vec<f64>> {
    images.par_iter().map(|x| model.logit(x)).collect()
}

/// Fraction of samples with `[σ(logit) > 0.5] == label`; ties go to class 0.
pub fn accuracy(logits: &[f64], labels: &[u8]) -> Result<f64> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::Shape(format!(
            "{} logits for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let correct = logits
        .iter()
        .zip(labels)
        .filter(|(&l, &y)| u8::from(sigmoid(l) > 0.5) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRow {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub epsilon: f64,
    pub seed: u64,
    pub accuracy: f64,
}

/// Accuracy for every `(kind, severity, seed)`; sample `i` is corrupted with
/// seed `derive_path(seed, [kind, severity, i])`.
pub fn eval_under_corruption<M: Differentiable + ?Sized>(
    model: &M,
    data: &ImageSet,
    kinds: &[CorruptionKind],
    severities: &[u8],
    seeds: &[u64],
) -> Result<Vec<CorruptionRow>> {
    let mut rows = Vec::new();
    for &kind in kinds {
        for &severity in severities {
            for &s in seeds {
                let corrupted = data
                    .images
                    .par_iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let sample_seed =
                            seed::derive_path(s, &[kind as u64, u64::from(severity), i as u64]);
                        corrupt(
                            x,
                            &CorruptionSpec {
                                kind,
                                severity,
                                seed: sample_seed,
                            },
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                let acc = accuracy(&predict_logits(model, &corrupted)?, &data.labels)?;
                rows.push(CorruptionRow {
                    kind,
                    severity,
                    seed: s,
                    accuracy: acc,
                });
            }
        }
    }
    Ok(rows)
}

/// Robust accuracy for each ε under the default PGD settings with `steps`.
/// Sample `i` uses random-start seed `derive(seed, i)` at every ε.
pub fn eval_under_attack<M: Differentiable + ?Sized>(
    model: &M,
    data: &ImageSet,
    epsilons: &[f64],
    steps: u32,
    seed: u64,
) -> Result<Vec<AttackRow>> {
    let mut rows = Vec::new();
    for &eps in epsilons {
        let spec = AttackSpec {
            steps,
            alpha: 2.5 * eps / steps as f64,
            ..AttackSpec::with_defaults(eps)
        };
        let adv = data
            .images
            .par_iter()
            .zip(&data.labels)
            .enumerate()
            .map(|(i, (x, &y))| pgd_attack(model, x, y, &spec, seed::derive(seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(AttackRow {
            epsilon: eps,
            seed,
            accuracy: accuracy(&predict_logits(model, &adv)?, &data.labels)?,
        });
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Missing(format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Columns `kind,severity,seed,accuracy`.
pub fn write_corruption_csv(path: &Path, rows: &[CorruptionRow]) -> Result<()> {
    write_rows(path, rows)
}

/// Columns `epsilon,seed,accuracy`.
pub fn write_attack_csv(path: &Path, rows: &[AttackRow]) -> Result<()> {
    write_rows(path, rows)
}
