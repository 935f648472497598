//! Training-time augmentation.
//!
//! Order is fixed: rescale → aspect distortion → rotation → brightness → hue
//! → contrast → saturation → Gaussian noise. The three geometric steps are
//! composed into one affine map and resampled once with bilinear
//! interpolation and reflect padding. Every magnitude is drawn uniformly from
//! `[0, max]`; photometric and scale factors also draw a direction.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::render::reflect_index;
use crate::seed;
use crate::{Error, Image, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub rescale_max: f64,
    pub aspect_max: f64,
    /// Radians.
    pub rotation_max: f64,
    pub brightness_max: f64,
    /// Fraction of the full hue circle.
    pub hue_max: f64,
    pub contrast_max: f64,
    pub saturation_max: f64,
    pub gauss_noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rescale_max: 0.20,
            aspect_max: 0.10,
            rotation_max: TAU,
            brightness_max: 0.50,
            hue_max: 0.10,
            contrast_max: 0.70,
            saturation_max: 0.30,
            gauss_noise_sigma: 0.02,
        }
    }
}

impl AugmentConfig {
    /// A configuration that leaves images untouched.
    pub fn none() -> Self {
        Self {
            rescale_max: 0.0,
            aspect_max: 0.0,
            rotation_max: 0.0,
            brightness_max: 0.0,
            hue_max: 0.0,
            contrast_max: 0.0,
            saturation_max: 0.0,
            gauss_noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("rescale_max", self.rescale_max),
            ("aspect_max", self.aspect_max),
            ("brightness_max", self.brightness_max),
            ("hue_max", self.hue_max),
            ("contrast_max", self.contrast_max),
            ("saturation_max", self.saturation_max),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "augment.{name} = {v} outside [0, 1]"
                )));
            }
        }
        if !(self.rotation_max >= 0.0 && self.gauss_noise_sigma >= 0.0) {
            return Err(Error::Config(
                "augment rotation and noise must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Concrete factors drawn for one augmentation call.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    pub scale: f64,
    pub aspect: f64,
    pub rotation: f64,
    pub brightness: f64,
    pub hue_shift: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

fn signed<R: Rng>(rng: &mut R, max: f64) -> f64 {
    let m = max * rng.random::<f64>();
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

impl AugmentParams {
    /// Draws factors from the stream keyed by `seed`. The number of draws does
    /// not depend on the configuration.
    pub fn sample(cfg: &AugmentConfig, seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, seed::stream::AUGMENT));
        let scale = 1.0 + signed(&mut rng, cfg.rescale_max);
        let aspect = 1.0 + signed(&mut rng, cfg.aspect_max);
        let rotation = cfg.rotation_max * rng.random::<f64>();
        let brightness = 1.0 + signed(&mut rng, cfg.brightness_max);
        let hue_shift = signed(&mut rng, cfg.hue_max);
        let contrast = 1.0 + signed(&mut rng, cfg.contrast_max);
        let saturation = 1.0 + signed(&mut rng, cfg.saturation_max);
        let noise_sigma = cfg.gauss_noise_sigma * rng.random::<f64>();
        let noise_seed = rng.random();
        Self {
            scale,
            aspect,
            rotation,
            brightness,
            hue_shift,
            contrast,
            saturation,
            noise_sigma,
            noise_seed,
        }
    }

    pub fn apply(&self, image: &Image) -> Image {
        let mut out = if self.scale != 1.0 || self.aspect != 1.0 || self.rotation != 0.0 {
            affine_resample(image, self.scale * self.aspect, self.scale, self.rotation)
        } else {
            image.clone()
        };
        if self.brightness != 1.0 {
            for v in &mut out.data {
                *v = (*v * self.brightness).clamp(0.0, 1.0);
            }
        }
        if self.hue_shift != 0.0 {
            for px in out.data.chunks_exact_mut(3) {
                let (h, s, v) = rgb_to_hsv(px[0], px[1], px[2]);
                let (r, g, b) = hsv_to_rgb((h + self.hue_shift).rem_euclid(1.0), s, v);
                px.copy_from_slice(&[r, g, b]);
            }
        }
        if self.contrast != 1.0 {
            let n = (out.height * out.width) as f64;
            let mean = out.data.chunks_exact(3).map(luma).sum::<f64>() / n;
            for v in &mut out.data {
                *v = (mean + self.contrast * (*v - mean)).clamp(0.0, 1.0);
            }
        }
        if self.saturation != 1.0 {
            for px in out.data.chunks_exact_mut(3) {
                let g = luma(px);
                for v in px.iter_mut() {
                    *v = (g + self.saturation * (*v - g)).clamp(0.0, 1.0);
                }
            }
        }
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).expect("finite sigma");
            let mut rng = seed::rng(self.noise_seed);
            for v in &mut out.data {
                *v += normal.sample(&mut rng);
            }
        }
        out.clamp01();
        out
    }
}

/// Augments a 3-channel image. Deterministic in `seed`.
pub fn augment(image: &Image, cfg: &AugmentConfig, seed: u64) -> Image {
    AugmentParams::sample(cfg, seed).apply(image)
}

fn luma(px: &[f64]) -> f64 {
    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
}

/// Resamples with the content scaled by `(sx, sy)` then rotated by `theta`
/// about the image center.
fn affine_resample(img: &Image, sx: f64, sy: f64, theta: f64) -> Image {
    let (h, w, ch) = (img.height, img.width, img.channels);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (s, c) = theta.sin_cos();
    let mut out = Image::zeros(h, w, ch);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // inverse rotation, then inverse scale
            let rx = c * dx + s * dy;
            let ry = -s * dx + c * dy;
            let u = rx / sx + cx;
            let v = ry / sy + cy;
            let x0 = u.floor();
            let y0 = v.floor();
            let fx = u - x0;
            let fy = v - y0;
            let xs = [
                reflect_index(x0 as isize, w),
                reflect_index(x0 as isize + 1, w),
            ];
            let ys = [
                reflect_index(y0 as isize, h),
                reflect_index(y0 as isize + 1, h),
            ];
            for k in 0..ch {
                let top = img.get(ys[0], xs[0], k) * (1.0 - fx) + img.get(ys[0], xs[1], k) * fx;
                let bot = img.get(ys[1], xs[0], k) * (1.0 - fx) + img.get(ys[1], xs[1], k) * fx;
                out.set(y, x, k, top * (1.0 - fy) + bot * fy);
            }
        }
    }
    out
}

pub(crate) fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

pub(crate) fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match (i as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::geometry::generate_geometry;
    use crate::synthdata::render::base_rendering;

    fn sample_image() -> Image {
        let g = generate_geometry(21, 1, (6, 12)).unwrap();
        base_rendering(&g, [0.9, 0.75, 0.85], 64, 5)
    }

    #[test]
    fn zero_magnitudes_are_identity() {
        let img = sample_image();
        assert_eq!(augment(&img, &AugmentConfig::none(), 1234), img);
    }

    #[test]
    fn deterministic_in_seed() {
        let img = sample_image();
        let cfg = AugmentConfig::default();
        assert_eq!(augment(&img, &cfg, 8), augment(&img, &cfg, 8));
        assert_ne!(augment(&img, &cfg, 8), augment(&img, &cfg, 9));
    }

    #[test]
    fn outputs_stay_in_unit_range() {
        let img = sample_image();
        let cfg = AugmentConfig {
            gauss_noise_sigma: 0.5,
            ..AugmentConfig::default()
        };
        for s in 0..20 {
            assert!(augment(&img, &cfg, s)
                .data
                .iter()
                .all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn brightness_scales_mean_by_sampled_factor() {
        // values at most 0.5 so a factor up to 1.5 never clamps
        let mut img = sample_image();
        img.data.iter_mut().for_each(|v| *v *= 0.5);
        let cfg = AugmentConfig {
            brightness_max: 0.5,
            ..AugmentConfig::none()
        };
        for s in 0..32 {
            let p = AugmentParams::sample(&cfg, s);
            let b = (p.brightness - 1.0).abs();
            assert!(b <= 0.5);
            let out = p.apply(&img);
            // clamp-free oracle: every pixel times the factor
            let oracle =
                img.data.iter().map(|v| v * p.brightness).sum::<f64>() / img.data.len() as f64;
            let ratio = out.mean() / img.mean();
            assert!((out.mean() - oracle).abs() < 1e-12);
            assert!(ratio >= 1.0 - b - 1e-12 && ratio <= 1.0 + b + 1e-12);
        }
    }

    #[test]
    fn hsv_roundtrip() {
        for &(r, g, b) in &[
            (0.2, 0.4, 0.9),
            (0.9, 0.1, 0.1),
            (0.5, 0.5, 0.5),
            (0.0, 0.7, 0.3),
        ] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_fraction_rejected() {
        let cfg = AugmentConfig {
            contrast_max: 1.5,
            ..AugmentConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(AugmentConfig::default().validate().is_ok());
    }
}
