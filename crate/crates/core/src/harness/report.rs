use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::Objective;
use super::experiment::{MetricsReport, METRICS_FILE};
use crate::robustness::CorruptionKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub objective: Objective,
    pub name: String,
    pub domain: u8,
    pub seed: u64,
    pub weights: String,
    pub accuracy: f64,
    pub final_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorruptionTableRow {
    pub objective: Objective,
    pub name: String,
    pub train_seed: u64,
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackTableRow {
    pub objective: Objective,
    pub name: String,
    pub train_seed: u64,
    pub epsilon: f64,
    pub seed: u64,
    pub accuracy: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn accuracy_rows(reports: &[MetricsReport]) -> Vec<AccuracyRow> {
    let mut rows: Vec<AccuracyRow> = reports
        .iter()
        .flat_map(|r| {
            r.seeds.iter().flat_map(move |s| {
                s.accuracy
                    .iter()
                    .map(move |(&domain, &accuracy)| AccuracyRow {
                        objective: r.objective,
                        name: r.name.clone(),
                        domain,
                        seed: s.seed,
                        weights: r.weights.clone(),
                        accuracy,
                        final_accuracy: s.final_accuracy[&domain],
                    })
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.objective, a.domain, a.seed, &a.name).cmp(&(b.objective, b.domain, b.seed, &b.name))
    });
    rows
}

/// Writes `accuracy.csv`, `corruption.csv` and `attack.csv` for `reports`,
/// sorted by objective, then the table key, so input order does not matter.
pub fn write_tables(reports: &[MetricsReport], out_dir: &Path) -> Result<usize> {
    let rows = accuracy_rows(reports);
    write_csv(&out_dir.join("accuracy.csv"), &rows)?;

    let mut corruption: Vec<CorruptionTableRow> = reports
        .iter()
        .flat_map(|r| {
            r.seeds.iter().flat_map(move |s| {
                s.corruption.iter().map(move |c| CorruptionTableRow {
                    objective: r.objective,
                    name: r.name.clone(),
                    train_seed: s.seed,
                    kind: c.kind,
                    severity: c.severity,
                    seed: c.seed,
                    accuracy: c.accuracy,
                })
            })
        })
        .collect();
    corruption.sort_by(|a, b| {
        (
            a.objective,
            a.kind,
            a.severity,
            a.train_seed,
            a.seed,
            &a.name,
        )
            .cmp(&(
                b.objective,
                b.kind,
                b.severity,
                b.train_seed,
                b.seed,
                &b.name,
            ))
    });
    write_csv(&out_dir.join("corruption.csv"), &corruption)?;

    let mut attack: Vec<AttackTableRow> = reports
        .iter()
        .flat_map(|r| {
            r.seeds.iter().flat_map(move |s| {
                s.attack.iter().map(move |a| AttackTableRow {
                    objective: r.objective,
                    name: r.name.clone(),
                    train_seed: s.seed,
                    epsilon: a.epsilon,
                    seed: a.seed,
                    accuracy: a.accuracy,
                })
            })
        })
        .collect();
    attack.sort_by(|a, b| {
        (a.objective, a.train_seed, &a.name)
            .cmp(&(b.objective, b.train_seed, &b.name))
            .then(a.epsilon.total_cmp(&b.epsilon))
    });
    write_csv(&out_dir.join("attack.csv"), &attack)?;
    Ok(rows.len())
}

/// Merges the `metrics.json` of several run directories into consolidated
/// tables plus `summary.json`. Returns the number of accuracy rows.
pub fn report(run_dirs: &[&Path], out_dir: &Path) -> Result<usize> {
    if run_dirs.is_empty() {
        return Err(Error::Missing(
            "report needs at least one run directory".into(),
        ));
    }
    let mut reports = run_dirs
        .iter()
        .map(|d| MetricsReport::load(&d.join(METRICS_FILE)))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| {
        (a.objective, &a.name, &a.config_hash).cmp(&(b.objective, &b.name, &b.config_hash))
    });
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let n = write_tables(&reports, out_dir)?;
    let summary: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "name": r.name,
                "objective": r.objective,
                "config_hash": r.config_hash,
                "weights": r.weights,
                "seeds": r.seeds.iter().map(|s| s.seed).collect::<Vec<_>>(),
                "aggregate": r.aggregate,
            })
        })
        .collect();
    let path = out_dir.join("summary.json");
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(n)
}
