use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{sigmoid, Differentiable};
use crate::robustness::predict_logits;
use crate::synthdata::ImageSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub index: usize,
    pub domain: u8,
    pub label: u8,
    pub logit: f64,
    pub probability: f64,
    pub predicted: u8,
}

/// Per-sample predictions. `ŷ > 0.5` predicts class 1; `ŷ = 0.5` predicts 0.
pub fn predict<M: Differentiable + ?Sized>(
    model: &M,
    data: &ImageSet,
) -> Result<Vec<PredictionRow>> {
    let logits = predict_logits(model, &data.images)?;
    Ok(logits
        .into_iter()
        .enumerate()
        .map(|(i, logit)| {
            let probability = sigmoid(logit);
            PredictionRow {
                index: i,
                domain: data.domain_ids[i],
                label: data.labels[i],
                logit,
                probability,
                predicted: u8::from(probability > 0.5),
            }
        })
        .collect())
}

pub fn accuracy_of(rows: &[PredictionRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Missing("no predictions".into()));
    }
    Ok(rows.iter().filter(|r| r.predicted == r.label).count() as f64 / rows.len() as f64)
}

/// Accuracy on the whole set, or on one domain of it.
pub fn evaluate<M: Differentiable + ?Sized>(
    model: &M,
    data: &ImageSet,
    domain: Option<u8>,
) -> Result<f64> {
    match domain {
        Some(d) => accuracy_of(&predict(model, &data.domain(d)?)?),
        None => accuracy_of(&predict(model, data)?),
    }
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;
    use crate::Image;

    fn set() -> ImageSet {
        ImageSet {
            images: (0..6)
                .map(|i| Image::filled(4, 4, 3, i as f64 / 5.0))
                .collect(),
            labels: vec![0, 0, 0, 1, 1, 1],
            domain_ids: vec![1, 2, 1, 2, 1, 2],
        }
    }

    #[test]
    fn constant_half_predicts_class_zero() {
        let m = LinearModel {
            weight: Image::zeros(4, 4, 3),
            bias: 0.0,
        };
        assert_eq!(evaluate(&m, &set(), None).unwrap(), 0.5);
    }

    #[test]
    fn oracle_and_csv_round_trip() {
        let m = LinearModel {
            weight: Image::filled(4, 4, 3, 1.0),
            bias: -24.0,
        };
        let data = set();
        assert_eq!(evaluate(&m, &data, None).unwrap(), 1.0);
        assert_eq!(evaluate(&m, &data, Some(2)).unwrap(), 1.0);
        assert!(evaluate(&m, &data, Some(7)).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let rows = predict(&m, &data).unwrap();
        write_predictions(&p, &rows).unwrap();
        assert_eq!(read_predictions(&p).unwrap(), rows);
    }
}
