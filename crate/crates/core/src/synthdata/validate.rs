//! A pixel-statistics baseline used to check that the task is learnable.
//!
//! Features are the image mean and standard deviation plus a normalised
//! histogram of connected-component areas of the mask; a logistic regression
//! fitted by gradient descent must separate the classes in the reference
//! domain.

use super::dataset::SamplePair;
use crate::Mask;

const AREA_BINS: [usize; 6] = [8, 16, 32, 64, 128, usize::MAX];

/// Areas (in pixels) of the 4-connected components of a mask.
pub fn component_areas(mask: &Mask) -> Vec<usize> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if mask.data[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut area = 0;
        while let Some(p) = stack.pop() {
            area += 1;
            let (y, x) = (p / w, p % w);
            let mut visit = |q: usize| {
                if mask.data[q] != 0 && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        areas.push(area);
    }
    areas
}

pub fn pixel_features(sample: &SamplePair) -> Vec<f64> {
    let d = &sample.image.data;
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
    let areas = component_areas(&sample.mask);
    let mut hist = vec![0.0; AREA_BINS.len()];
    for a in &areas {
        let bin = AREA_BINS
            .iter()
            .position(|&edge| *a < edge)
            .unwrap_or(AREA_BINS.len() - 1);
        hist[bin] += 1.0;
    }
    let n = areas.len().max(1) as f64;
    let mut f = vec![mean, sd];
    f.extend(hist.into_iter().map(|c| c / n));
    f
}

/// Fits the baseline on the first 70% of `samples` and returns accuracy on the rest.
pub fn pixel_baseline_accuracy(samples: &[SamplePair]) -> f64 {
    let feats: Vec<Vec<f64>> = samples.iter().map(pixel_features).collect();
    let dim = feats[0].len();
    let split = samples.len() * 7 / 10;
    let (mu, sd): (Vec<f64>, Vec<f64>) = (0..dim)
        .map(|k| {
            let col: Vec<f64> = feats[..split].iter().map(|f| f[k]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            (m, if s > 1e-12 { s } else { 1.0 })
        })
        .unzip();
    let z: Vec<Vec<f64>> = feats
        .iter()
        .map(|f| {
            f.iter()
                .enumerate()
                .map(|(k, v)| (v - mu[k]) / sd[k])
                .collect()
        })
        .collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let lr = 0.5;
    for _ in 0..2000 {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (x, s) in z[..split].iter().zip(samples) {
            let logit: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = 1.0 / (1.0 + (-logit).exp()) - f64::from(s.label);
            gb += err;
            gw.iter_mut().zip(x).for_each(|(g, v)| *g += err * v);
        }
        let n = split as f64;
        b -= lr * gb / n;
        for k in 0..dim {
            w[k] -= lr * (gw[k] / n + 1e-3 * w[k]);
        }
    }
    let correct = z[split..]
        .iter()
        .zip(&samples[split..])
        .filter(|(x, s)| {
            let logit: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            u8::from(logit > 0.0) == s.label
        })
        .count();
    correct as f64 / (samples.len() - split) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::dataset::make_dataset;
    use crate::synthdata::domain::standard_domains;

    #[test]
    fn components_counted() {
        let mut m = Mask::zeros(4, 4);
        for i in [0, 1, 4, 10, 11, 15] {
            m.data[i] = 1;
        }
        let mut a = component_areas(&m);
        a.sort_unstable();
        assert_eq!(a, vec![3, 3]);
    }

    #[test]
    fn source_domain_is_learnable() {
        let ds = make_dataset(100, &standard_domains()[..1], 64, 2024).unwrap();
        let acc = pixel_baseline_accuracy(&ds);
        assert!(acc >= 0.90, "pixel baseline accuracy {acc}");
    }
}
