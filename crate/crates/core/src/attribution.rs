//! Integrated-gradients attribution with a checkable completeness residual.
//!
//! For a target logit `f`, input `x` and baseline `b`, the attribution of
//! input element `i` is approximated with the midpoint rule
//!
//! ```text
//! attr_i = (x_i − b_i) · 1/m · Σ_{k=1..m} ∂f/∂x_i (b + (k − ½)/m · (x − b))
//! ```
//!
//! Class 1 targets the model logit and class 0 targets its negation.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::Differentiable;
use crate::{Error, Image, Result};

pub const DEFAULT_STEPS: usize = 256;
pub const MIN_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Zeros,
    /// Per-channel mean of a reference set, constant across pixels.
    DatasetMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub values: Image,
    pub target_class: u8,
    pub baseline_kind: BaselineKind,
    pub steps: usize,
    /// `f(x) − f(baseline)` for the target.
    pub delta: f64,
    /// `|Σ attr − Δf| / max(1, |Δf|)`.
    pub residual: f64,
}

impl AttributionMap {
    pub fn total(&self) -> f64 {
        self.values.data.iter().sum()
    }
}

/// Builds the baseline image for `kind`; `reference` is used for the mean.
pub fn baseline_image(kind: BaselineKind, like: &Image, reference: &[Image]) -> Result<Image> {
    match kind {
        BaselineKind::Zeros => Ok(Image::zeros(like.height, like.width, like.channels)),
        BaselineKind::DatasetMean => {
            if reference.is_empty() {
                return Err(Error::Missing(
                    "dataset-mean baseline needs reference images".into(),
                ));
            }
            let mut sums = vec![0.0; like.channels];
            let mut count = 0usize;
            for img in reference {
                if !img.same_shape(like) {
                    return Err(Error::Shape(
                        "reference image shape differs from input".into(),
                    ));
                }
                for px in img.data.chunks(img.channels) {
                    sums.iter_mut().zip(px).for_each(|(s, v)| *s += v);
                }
                count += img.height * img.width;
            }
            let mut out = Image::zeros(like.height, like.width, like.channels);
            for px in out.data.chunks_mut(like.channels) {
                px.iter_mut()
                    .zip(&sums)
                    .for_each(|(v, s)| *v = s / count as f64);
            }
            Ok(out)
        }
    }
}

/// Integrated gradients of the target-class logit along the straight path
/// from `baseline` to `x`.
pub fn integrated_gradients<M: Differentiable + ?Sized>(
    model: &M,
    x: &Image,
    baseline: &Image,
    baseline_kind: BaselineKind,
    target_class: u8,
    steps: usize,
) -> Result<AttributionMap> {
    if !x.same_shape(baseline) {
        return Err(Error::Shape("input and baseline shapes differ".into()));
    }
    if steps < MIN_STEPS {
        return Err(Error::Config(format!(
            "integrated gradients needs m ≥ {MIN_STEPS}, got {steps}"
        )));
    }
    if target_class > 1 {
        return Err(Error::Config(format!(
            "target class {target_class} is not binary"
        )));
    }
    let sign = if target_class == 1 { 1.0 } else { -1.0 };
    let grads = (1..=steps)
        .into_par_iter()
        .map(|k| {
            let t = (k as f64 - 0.5) / steps as f64;
            let mut p = baseline.clone();
            p.data
                .iter_mut()
                .zip(&x.data)
                .for_each(|(b, xi)| *b += t * (xi - *b));
            model.logit_and_grad(&p).map(|(_, g)| g)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Image::zeros(x.height, x.width, x.channels);
    for g in &grads {
        values
            .data
            .iter_mut()
            .zip(&g.data)
            .for_each(|(a, gi)| *a += gi);
    }
    for ((a, xi), bi) in values.data.iter_mut().zip(&x.data).zip(&baseline.data) {
        *a *= sign * (xi - bi) / steps as f64;
    }
    if let Some(i) = values.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("attribution entry {i}")));
    }
    let delta = sign * (model.logit(x)? - model.logit(baseline)?);
    let total: f64 = values.data.iter().sum();
    Ok(AttributionMap {
        values,
        target_class,
        baseline_kind,
        steps,
        delta,
        residual: (total - delta).abs() / delta.abs().max(1.0),
    })
}

/// Per-pixel channel sum rendered as a diverging heat map: red for positive,
/// blue for negative, white at zero, scaled by the largest magnitude.
pub fn heat_map_ppm(map: &AttributionMap) -> Vec<u8> {
    let v = &map.values;
    let sums: Vec<f64> = v
        .data
        .chunks(v.channels)
        .map(|px| px.iter().sum())
        .collect();
    let peak = sums.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let mut out = format!("P6\n{} {}\n255\n", v.width, v.height).into_bytes();
    for s in sums {
        let t = if peak > 0.0 { s / peak } else { 0.0 };
        let fade = |a: f64| (255.0 * (1.0 - a)).round() as u8;
        let px = if t >= 0.0 {
            [255, fade(t), fade(t)]
        } else {
            [fade(-t), fade(-t), 255]
        };
        out.extend_from_slice(&px);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub sample: usize,
    pub target_class: u8,
    pub delta: f64,
    pub attribution_sum: f64,
    pub residual: f64,
}

/// Writes `sample{i}_class{c}.ppm` for both classes of every sample and
/// `residuals.csv`. Returns the residual rows.
pub fn attribution_report<M: Differentiable + ?Sized>(
    model: &M,
    samples: &[Image],
    baseline_kind: BaselineKind,
    steps: usize,
    out_dir: &Path,
) -> Result<Vec<ResidualRow>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::new();
    for (i, x) in samples.iter().enumerate() {
        let baseline = baseline_image(baseline_kind, x, samples)?;
        for class in [0u8, 1] {
            let map = integrated_gradients(model, x, &baseline, baseline_kind, class, steps)?;
            let path = out_dir.join(format!("sample{i:03}_class{class}.ppm"));
            fs::File::create(&path)
                .and_then(|mut f| f.write_all(&heat_map_ppm(&map)))
                .map_err(|e| Error::io(&path, e))?;
            rows.push(ResidualRow {
                sample: i,
                target_class: class,
                delta: map.delta,
                attribution_sum: map.total(),
                residual: map.residual,
            });
        }
    }
    let path = out_dir.join("residuals.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
