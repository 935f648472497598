#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use morphgen::harness::objective::{morphgen_batch, MorphgenBatch};
use morphgen::losses::ContrastiveConfig;
use morphgen::model::{init_params, ArchConfig, ModelParams};
use morphgen::seed;
use morphgen::Image;
use rand::Rng;

pub fn small_arch() -> ArchConfig {
    ArchConfig {
        resolution: 8,
        channels: vec![4, 6],
        d: 8,
        ..ArchConfig::default()
    }
}

pub fn random_images(seed: u64, n: usize, side: usize) -> Vec<Image> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|_| {
            let mut x = Image::zeros(side, side, 3);
            x.data.iter_mut().for_each(|v| *v = rng.random());
            x
        })
        .collect()
}

pub fn random_masks(seed: u64, n: usize, side: usize) -> Vec<Image> {
    let mut rng = seed::rng(seed);
    (0..n)
        .map(|_| {
            let v: f64 = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
            let mut x = Image::zeros(side, side, 3);
            for px in x.data.chunks_mut(3) {
                let on = if rng.random::<f64>() < 0.4 {
                    1.0 - v
                } else {
                    v
                };
                px.iter_mut().for_each(|c| *c = on);
            }
            x
        })
        .collect()
}

/// Relative error with a floor so that near-zero gradients are compared
/// absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

pub struct FdReport {
    pub params_checked: usize,
    pub inputs_checked: usize,
    pub max_param_err: f64,
    pub max_input_err: f64,
}

/// Central differences (step 1e-5) of the MorphGen batch loss against the
/// analytic gradient, over every parameter and every input element.
pub fn fd_check_morphgen(seed: u64) -> FdReport {
    let arch = small_arch();
    let params = init_params(&arch, seed).unwrap();
    let n = 4;
    let images = random_images(seed ^ 0x11, n, 8);
    let augmented = random_images(seed ^ 0x22, n, 8);
    let masks = random_masks(seed ^ 0x33, n, 8);
    let labels = [0u8, 1, 0, 1];
    let cfg = ContrastiveConfig {
        eta: 0.1,
        ..ContrastiveConfig::default()
    };
    let loss = |p: &ModelParams, x: &[Image], a: &[Image], m: &[Image]| {
        let batch = MorphgenBatch {
            images: x,
            augmented: a,
            masks: m,
            labels: &labels,
        };
        morphgen_batch(p, batch, &cfg, false)
            .unwrap()
            .breakdown
            .total
    };
    let batch = MorphgenBatch {
        images: &images,
        augmented: &augmented,
        masks: &masks,
        labels: &labels,
    };
    let out = morphgen_batch(&params, batch, &cfg, true).unwrap();
    let h = 1e-5;

    let flat = params.flatten();
    let g = out.grads.flatten();
    let mut max_param_err = 0.0f64;
    for i in 0..flat.len() {
        let mut p = flat.clone();
        p[i] = flat[i] + h;
        let fp = loss(
            &ModelParams::from_flat(&arch, &p).unwrap(),
            &images,
            &augmented,
            &masks,
        );
        p[i] = flat[i] - h;
        let fm = loss(
            &ModelParams::from_flat(&arch, &p).unwrap(),
            &images,
            &augmented,
            &masks,
        );
        max_param_err = max_param_err.max(rel_err(g[i], (fp - fm) / (2.0 * h)));
    }

    let ig = out.input_grads.unwrap();
    let mut max_input_err = 0.0f64;
    let mut inputs_checked = 0;
    for which in 0..3 {
        let analytic = [&ig.images, &ig.augmented, &ig.masks][which];
        for s in 0..n {
            for e in 0..images[s].data.len() {
                let mut sets = [images.clone(), augmented.clone(), masks.clone()];
                let base = sets[which][s].data[e];
                sets[which][s].data[e] = base + h;
                let fp = loss(&params, &sets[0], &sets[1], &sets[2]);
                sets[which][s].data[e] = base - h;
                let fm = loss(&params, &sets[0], &sets[1], &sets[2]);
                max_input_err =
                    max_input_err.max(rel_err(analytic[s].data[e], (fp - fm) / (2.0 * h)));
                inputs_checked += 1;
            }
        }
    }
    FdReport {
        params_checked: flat.len(),
        inputs_checked,
        max_param_err,
        max_input_err,
    }
}

/// Every file below `dir`, relative path plus contents, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}
