use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::synthdata::render::reflect_index;
use crate::{seed, Error, Image, Result};

pub const MAX_SEVERITY: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    DefocusBlur,
    MotionBlur,
    JpegLikeCompression,
    BrightnessShift,
    ContrastReduction,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 8] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ShotNoise,
        CorruptionKind::ImpulseNoise,
        CorruptionKind::DefocusBlur,
        CorruptionKind::MotionBlur,
        CorruptionKind::JpegLikeCompression,
        CorruptionKind::BrightnessShift,
        CorruptionKind::ContrastReduction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ShotNoise => "shot_noise",
            CorruptionKind::ImpulseNoise => "impulse_noise",
            CorruptionKind::DefocusBlur => "defocus_blur",
            CorruptionKind::MotionBlur => "motion_blur",
            CorruptionKind::JpegLikeCompression => "jpeg_like_compression",
            CorruptionKind::BrightnessShift => "brightness_shift",
            CorruptionKind::ContrastReduction => "contrast_reduction",
        }
    }

    /// Severity table for severities 1..=3.
    ///
    /// | kind | parameter | 1 | 2 | 3 |
    /// |---|---|---|---|---|
    /// | gaussian_noise | σ | 0.04 | 0.08 | 0.12 |
    /// | shot_noise | photons per unit intensity | 60 | 25 | 12 |
    /// | impulse_noise | corrupted fraction | 0.01 | 0.03 | 0.06 |
    /// | defocus_blur | disk radius (px) | 1 | 2 | 3 |
    /// | motion_blur | streak length (px) | 3 | 5 | 9 |
    /// | jpeg_like_compression | quality | 30 | 15 | 8 |
    /// | brightness_shift | additive offset | 0.1 | 0.2 | 0.3 |
    /// | contrast_reduction | contrast factor c | 0.7 | 0.5 | 0.3 |
    pub fn table(self) -> [f64; 3] {
        match self {
            CorruptionKind::GaussianNoise => [0.04, 0.08, 0.12],
            CorruptionKind::ShotNoise => [60.0, 25.0, 12.0],
            CorruptionKind::ImpulseNoise => [0.01, 0.03, 0.06],
            CorruptionKind::DefocusBlur => [1.0, 2.0, 3.0],
            CorruptionKind::MotionBlur => [3.0, 5.0, 9.0],
            CorruptionKind::JpegLikeCompression => [30.0, 15.0, 8.0],
            CorruptionKind::BrightnessShift => [0.1, 0.2, 0.3],
            CorruptionKind::ContrastReduction => [0.7, 0.5, 0.3],
        }
    }

    /// Parameter for `severity`; `None` at severity 0.
    pub fn magnitude(self, severity: u8) -> Result<Option<f64>> {
        match severity {
            0 => Ok(None),
            1..=MAX_SEVERITY => Ok(Some(self.table()[severity as usize - 1])),
            _ => Err(Error::Config(format!(
                "severity {severity} outside 0..={MAX_SEVERITY}"
            ))),
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown corruption kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
}

/// Applies a corruption and clamps to `[0, 1]`. Severity 0 returns the input.
pub fn corrupt(image: &Image, spec: &CorruptionSpec) -> Result<Image> {
    let mut out = corrupt_unclamped(image, spec)?;
    if spec.severity > 0 {
        out.clamp01();
    }
    Ok(out)
}

/// The corruption before the final clamp.
pub fn corrupt_unclamped(image: &Image, spec: &CorruptionSpec) -> Result<Image> {
    let Some(m) = spec.kind.magnitude(spec.severity)? else {
        return Ok(image.clone());
    };
    let mut rng = seed::rng(spec.seed);
    let mut out = image.clone();
    match spec.kind {
        CorruptionKind::GaussianNoise => {
            let normal = Normal::new(0.0, m).expect("table sigma is positive");
            out.data
                .iter_mut()
                .for_each(|v| *v += normal.sample(&mut rng));
        }
        CorruptionKind::ShotNoise => {
            for v in out.data.iter_mut() {
                let rate = *v * m;
                *v = if rate > 0.0 {
                    Poisson::new(rate).expect("positive rate").sample(&mut rng) / m
                } else {
                    0.0
                };
            }
        }
        CorruptionKind::ImpulseNoise => {
            for v in out.data.iter_mut() {
                if rng.random::<f64>() < m {
                    *v = if rng.random::<bool>() { 1.0 } else { 0.0 };
                }
            }
        }
        CorruptionKind::DefocusBlur => out = convolve2d(image, &disk_kernel(m as isize)),
        CorruptionKind::MotionBlur => {
            let angle = rng.random::<f64>() * std::f64::consts::PI;
            out = convolve2d(image, &line_kernel(m as usize, angle));
        }
        CorruptionKind::JpegLikeCompression => out = jpeg_like(image, m)?,
        CorruptionKind::BrightnessShift => out.data.iter_mut().for_each(|v| *v += m),
        CorruptionKind::ContrastReduction => {
            let mean = image.mean();
            out.data
                .iter_mut()
                .for_each(|v| *v = mean + m * (*v - mean));
        }
    }
    Ok(out)
}

/// Square kernel with odd side, stored row-major.
struct Kernel {
    side: usize,
    weights: Vec<f64>,
}

fn normalized(side: usize, mut weights: Vec<f64>) -> Kernel {
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Kernel { side, weights }
}

fn disk_kernel(radius: isize) -> Kernel {
    let side = (2 * radius + 1) as usize;
    let weights = (-radius..=radius)
        .flat_map(|dy| {
            (-radius..=radius).map(move |dx| {
                if dx * dx + dy * dy <= radius * radius {
                    1.0
                } else {
                    0.0
                }
            })
        })
        .collect();
    normalized(side, weights)
}

fn line_kernel(length: usize, angle: f64) -> Kernel {
    let side = length | 1;
    let c = (side / 2) as f64;
    let half = (length as f64 - 1.0) / 2.0;
    let samples = 8 * length;
    let mut weights = vec![0.0; side * side];
    for k in 0..samples {
        let t = -half + 2.0 * half * k as f64 / (samples - 1) as f64;
        let x = (c + t * angle.cos()).round() as usize;
        let y = (c + t * angle.sin()).round() as usize;
        weights[y * side + x] += 1.0;
    }
    normalized(side, weights)
}

fn convolve2d(img: &Image, kernel: &Kernel) -> Image {
    let (h, w, ch) = (img.height, img.width, img.channels);
    let r = (kernel.side / 2) as isize;
    let mut out = Image::zeros(h, w, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for ky in 0..kernel.side {
                    let yi = reflect_index(y as isize + ky as isize - r, h);
                    for kx in 0..kernel.side {
                        let wt = kernel.weights[ky * kernel.side + kx];
                        if wt != 0.0 {
                            let xi = reflect_index(x as isize + kx as isize - r, w);
                            acc += wt * img.get(yi, xi, c);
                        }
                    }
                }
                out.set(y, x, c, acc);
            }
        }
    }
    out
}

const LUMA_Q: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., 12., 12., 14., 19., 26., 58., 60., 55., 14., 13., 16.,
    24., 40., 57., 69., 56., 14., 17., 22., 29., 51., 87., 80., 62., 18., 22., 37., 56., 68., 109.,
    103., 77., 24., 35., 55., 64., 81., 104., 113., 92., 49., 64., 78., 87., 103., 121., 120.,
    101., 72., 92., 95., 98., 112., 100., 103., 99.,
];

const CHROMA_Q: [f64; 64] = [
    17., 18., 24., 47., 99., 99., 99., 99., 18., 21., 26., 66., 99., 99., 99., 99., 24., 26., 56.,
    99., 99., 99., 99., 99., 47., 66., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99.,
    99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99.,
    99., 99., 99., 99., 99., 99., 99.,
];

fn scaled_table(base: &[f64; 64], quality: f64) -> [f64; 64] {
    let scale = if quality < 50.0 {
        5000.0 / quality
    } else {
        200.0 - 2.0 * quality
    };
    base.map(|b| ((b * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0))
}

fn dct_basis() -> [[f64; 8]; 8] {
    let mut basis = [[0.0; 8]; 8];
    for (u, row) in basis.iter_mut().enumerate() {
        let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
        for (x, b) in row.iter_mut().enumerate() {
            *b = a * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    basis
}

/// 8×8 block DCT quantization in YCbCr without chroma subsampling. Blocks
/// overhanging the border are filled by edge replication.
fn jpeg_like(img: &Image, quality: f64) -> Result<Image> {
    if img.channels != 3 {
        return Err(Error::Shape(format!(
            "jpeg_like expects 3 channels, got {}",
            img.channels
        )));
    }
    let (h, w) = (img.height, img.width);
    let mut planes = vec![vec![0.0; h * w]; 3];
    for i in 0..h * w {
        let [r, g, b] = [0, 1, 2].map(|c| img.data[i * 3 + c] * 255.0);
        planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
        planes[1][i] = -0.168_736 * r - 0.331_264 * g + 0.5 * b;
        planes[2][i] = 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    }
    let tables = [
        scaled_table(&LUMA_Q, quality),
        scaled_table(&CHROMA_Q, quality),
        scaled_table(&CHROMA_Q, quality),
    ];
    let basis = dct_basis();
    for (plane, table) in planes.iter_mut().zip(&tables) {
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                let mut block = [[0.0; 8]; 8];
                for (y, row) in block.iter_mut().enumerate() {
                    for (x, v) in row.iter_mut().enumerate() {
                        *v = plane[(by + y).min(h - 1) * w + (bx + x).min(w - 1)];
                    }
                }
                let mut coef = [[0.0; 8]; 8];
                for u in 0..8 {
                    for v in 0..8 {
                        let mut acc = 0.0;
                        for y in 0..8 {
                            for x in 0..8 {
                                acc += basis[u][y] * basis[v][x] * block[y][x];
                            }
                        }
                        let q = table[u * 8 + v];
                        coef[u][v] = (acc / q).round() * q;
                    }
                }
                for y in 0..8.min(h - by) {
                    for x in 0..8.min(w - bx) {
                        let mut acc = 0.0;
                        for u in 0..8 {
                            for v in 0..8 {
                                acc += basis[u][y] * basis[v][x] * coef[u][v];
                            }
                        }
                        plane[(by + y) * w + bx + x] = acc;
                    }
                }
            }
        }
    }
    let mut out = Image::zeros(h, w, 3);
    for i in 0..h * w {
        let (y, cb, cr) = (planes[0][i] + 128.0, planes[1][i], planes[2][i]);
        out.data[i * 3] = (y + 1.402 * cr) / 255.0;
        out.data[i * 3 + 1] = (y - 0.344_136 * cb - 0.714_136 * cr) / 255.0;
        out.data[i * 3 + 2] = (y + 1.772 * cb) / 255.0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image(seed: u64) -> Image {
        let mut rng = seed::rng(seed);
        let mut img = Image::zeros(64, 64, 3);
        for y in 0..64 {
            for x in 0..64 {
                for c in 0..3 {
                    let base =
                        0.5 + 0.3 * ((x as f64 * 0.2 + c as f64).sin() * (y as f64 * 0.15).cos());
                    img.set(y, x, c, (base + 0.05 * rng.random::<f64>()).clamp(0.0, 1.0));
                }
            }
        }
        img
    }

    fn spec(kind: CorruptionKind, severity: u8, seed: u64) -> CorruptionSpec {
        CorruptionSpec {
            kind,
            severity,
            seed,
        }
    }

    #[test]
    fn severity_zero_is_identity() {
        let img = test_image(1);
        for kind in CorruptionKind::ALL {
            assert_eq!(corrupt(&img, &spec(kind, 0, 9)).unwrap(), img);
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        let img = test_image(2);
        for kind in CorruptionKind::ALL {
            for s in 1..=3 {
                let a = corrupt(&img, &spec(kind, s, 42)).unwrap();
                let b = corrupt(&img, &spec(kind, s, 42)).unwrap();
                let bits = |i: &Image| i.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&a), bits(&b), "{kind} severity {s}");
                assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
                assert_ne!(a, img, "{kind} severity {s} left the image unchanged");
            }
        }
    }

    #[test]
    fn gaussian_sigma_matches_table() {
        let img = test_image(3);
        for s in 1..=3u8 {
            let out = corrupt_unclamped(&img, &spec(CorruptionKind::GaussianNoise, s, 7)).unwrap();
            let diffs: Vec<f64> = out.data.iter().zip(&img.data).map(|(a, b)| a - b).collect();
            let sd = crate::stats::sample_sd(&diffs);
            let want = CorruptionKind::GaussianNoise.table()[s as usize - 1];
            assert!(
                (sd / want - 1.0).abs() < 0.1,
                "severity {s}: {sd} vs {want}"
            );
        }
    }

    #[test]
    fn contrast_matches_per_pixel_oracle() {
        let img = test_image(4);
        let mean = img.data.iter().sum::<f64>() / img.data.len() as f64;
        for s in 1..=3u8 {
            let c = CorruptionKind::ContrastReduction.table()[s as usize - 1];
            let out = corrupt(&img, &spec(CorruptionKind::ContrastReduction, s, 0)).unwrap();
            for (o, i) in out.data.iter().zip(&img.data) {
                assert!((o - (mean + c * (i - mean))).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn blur_kernels_preserve_constants() {
        let flat = Image::filled(20, 20, 3, 0.37);
        for kind in [CorruptionKind::DefocusBlur, CorruptionKind::MotionBlur] {
            let out = corrupt(&flat, &spec(kind, 3, 5)).unwrap();
            assert!(out.max_abs_diff(&flat) < 1e-12, "{kind}");
        }
        // a flat block keeps only its DC term, quantized with step 100 / 8 levels
        let out = corrupt(&flat, &spec(CorruptionKind::JpegLikeCompression, 3, 5)).unwrap();
        assert!(out.max_abs_diff(&flat) <= 12.5 / 2.0 / 255.0 + 1e-9);
        let k = line_kernel(9, 0.0);
        assert_eq!(k.weights.iter().filter(|&&w| w > 0.0).count(), 9);
    }

    #[test]
    fn stronger_severity_moves_further() {
        let img = test_image(5);
        for kind in CorruptionKind::ALL {
            let d: Vec<f64> = (1..=3)
                .map(|s| {
                    let out = corrupt(&img, &spec(kind, s, 11)).unwrap();
                    out.data
                        .iter()
                        .zip(&img.data)
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                })
                .collect();
            assert!(d[0] < d[2], "{kind}: {d:?}");
        }
    }

    #[test]
    fn parsing() {
        for kind in CorruptionKind::ALL {
            assert_eq!(kind.name().parse::<CorruptionKind>().unwrap(), kind);
        }
        assert!("fog".parse::<CorruptionKind>().is_err());
        assert!(corrupt(&test_image(1), &spec(CorruptionKind::GaussianNoise, 4, 0)).is_err());
    }
}
