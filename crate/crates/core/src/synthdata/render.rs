//! Rasterisation of geometry into masks and domain-specific images.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::domain::DomainSpec;
use super::geometry::GeometrySpec;
use crate::seed;
use crate::{Error, Image, Mask, Result};

pub const MIN_RESOLUTION: usize = 32;

const NUCLEUS_RGB: [f64; 3] = [0.32, 0.16, 0.46];

/// Rasterises the nuclei: a pixel is set iff its center lies inside any nucleus.
pub fn render_mask(geom: &GeometrySpec, resolution: usize) -> Mask {
    Mask {
        height: resolution,
        width: resolution,
        data: owner_map(geom, resolution)
            .iter()
            .map(|o| u8::from(o.is_some()))
            .collect(),
    }
}

/// Paints the patch before any domain transform: textured background in the
/// domain's background colour, nuclei as dark purple regions with chromatin
/// speckle. Depends only on the geometry, the background colour and
/// `render_seed`.
pub fn base_rendering(
    geom: &GeometrySpec,
    background: [f64; 3],
    resolution: usize,
    render_seed: u64,
) -> Image {
    let mut rng = seed::rng(render_seed);
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(2.0..6.0),
                rng.random_range(0.0..TAU),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    let shades: Vec<f64> = geom
        .nuclei
        .iter()
        .map(|_| rng.random_range(0.85..1.15))
        .collect();

    let mask_owner = owner_map(geom, resolution);
    let r = resolution as f64;
    let mut img = Image::zeros(resolution, resolution, 3);
    for y in 0..resolution {
        for x in 0..resolution {
            let u = (x as f64 + 0.5) / r;
            let v = (y as f64 + 0.5) / r;
            let speckle: f64 = rng.random_range(-1.0..1.0);
            let rgb = match mask_owner[y * resolution + x] {
                Some(k) => {
                    let s = shades[k] * (1.0 + 0.12 * speckle);
                    NUCLEUS_RGB.map(|c| c * s)
                }
                None => {
                    let t: f64 = waves
                        .iter()
                        .map(|&(f, dir, ph)| (TAU * f * (u * dir.cos() + v * dir.sin()) + ph).sin())
                        .sum::<f64>()
                        / waves.len() as f64;
                    let s = 1.0 + 0.06 * t + 0.02 * speckle;
                    background.map(|c| c * s)
                }
            };
            for (c, val) in rgb.into_iter().enumerate() {
                img.set(y, x, c, val.clamp(0.0, 1.0));
            }
        }
    }
    img
}

/// Index of the last nucleus covering each pixel.
fn owner_map(geom: &GeometrySpec, resolution: usize) -> Vec<Option<usize>> {
    let r = resolution as f64;
    let mut owner = vec![None; resolution * resolution];
    for (k, e) in geom.nuclei.iter().enumerate() {
        let reach = e.bounding_radius();
        let lo = |c: f64| (((c - reach) * r).floor().max(0.0)) as usize;
        let hi = |c: f64| (((c + reach) * r).ceil().min(r - 1.0)).max(0.0) as usize;
        for y in lo(e.center[1])..=hi(e.center[1]) {
            for x in lo(e.center[0])..=hi(e.center[0]) {
                if e.contains((x as f64 + 0.5) / r, (y as f64 + 0.5) / r) {
                    owner[y * resolution + x] = Some(k);
                }
            }
        }
    }
    owner
}

/// Renders the patch as seen through `domain`: colour matrix, then gamma,
/// then Gaussian blur, then sensor noise, clamped to `[0, 1]`.
pub fn render_image(
    geom: &GeometrySpec,
    domain: &DomainSpec,
    resolution: usize,
    render_seed: u64,
) -> Result<Image> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::Config(format!(
            "resolution {resolution} below minimum {MIN_RESOLUTION}"
        )));
    }
    domain.validate()?;
    let mut img = base_rendering(geom, domain.background_hue, resolution, render_seed);
    apply_domain(
        &mut img,
        domain,
        seed::derive(render_seed, u64::from(domain.domain_id)),
    );
    Ok(img)
}

/// Applies the acquisition transform of `domain` in place.
pub fn apply_domain(img: &mut Image, domain: &DomainSpec, noise_seed: u64) {
    if !domain.is_identity_color() {
        let m = &domain.color_matrix;
        for px in img.data.chunks_exact_mut(3) {
            let p = [px[0], px[1], px[2]];
            for (c, row) in m.iter().enumerate() {
                px[c] = (row[0] * p[0] + row[1] * p[1] + row[2] * p[2]).clamp(0.0, 1.0);
            }
        }
    }
    if domain.gamma != [1.0; 3] {
        for px in img.data.chunks_exact_mut(3) {
            for c in 0..3 {
                px[c] = px[c].powf(domain.gamma[c]);
            }
        }
    }
    if domain.blur_sigma > 0.0 {
        *img = gaussian_blur(img, domain.blur_sigma);
    }
    if domain.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, domain.noise_sigma).expect("sigma validated");
        let mut rng = seed::rng(noise_seed);
        for v in &mut img.data {
            *v += normal.sample(&mut rng);
        }
    }
    img.clamp01();
}

/// Mirror index for reflect padding (edge pixel not repeated).
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut k = i.rem_euclid(period);
    if k >= n {
        k = period - k;
    }
    k as usize
}

/// Separable Gaussian blur with reflect padding and radius `ceil(3σ)`.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    convolve_separable(img, &kernel, &kernel)
}

/// Convolves with `ky ⊗ kx` (odd-length kernels) using reflect padding.
pub(crate) fn convolve_separable(img: &Image, ky: &[f64], kx: &[f64]) -> Image {
    let (h, w, ch) = (img.height, img.width, img.channels);
    let rx = (kx.len() / 2) as isize;
    let ry = (ky.len() / 2) as isize;
    let mut tmp = Image::zeros(h, w, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, &wt) in kx.iter().enumerate() {
                    let xi = reflect_index(x as isize + k as isize - rx, w);
                    acc += wt * img.get(y, xi, c);
                }
                tmp.set(y, x, c, acc);
            }
        }
    }
    let mut out = Image::zeros(h, w, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, &wt) in ky.iter().enumerate() {
                    let yi = reflect_index(y as isize + k as isize - ry, h);
                    acc += wt * tmp.get(yi, x, c);
                }
                out.set(y, x, c, acc);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::domain::standard_domains;
    use crate::synthdata::geometry::{generate_geometry, Ellipse, GeometrySpec};

    fn disc(center: [f64; 2], axes: [f64; 2]) -> GeometrySpec {
        GeometrySpec {
            nuclei: vec![Ellipse {
                center,
                axes,
                angle: 0.0,
                contour_wobble: 0.0,
                harmonics: vec![],
            }],
            class_label: 0,
            geometry_seed: 0,
        }
    }

    #[test]
    fn empty_geometry_gives_empty_mask() {
        let m = render_mask(&GeometrySpec::empty(0, 0), 64);
        assert_eq!(m.area(), 0);
    }

    #[test]
    fn disc_area_matches_pixel_oracle() {
        let g = disc([0.5, 0.5], [0.25, 0.25]);
        let m = render_mask(&g, 64);
        // per-pixel analytic point-in-circle oracle, independent of Ellipse::contains
        let oracle = (0..64 * 64)
            .filter(|i| {
                let (x, y) = ((i % 64) as f64 + 0.5, (i / 64) as f64 + 0.5);
                (x - 32.0).powi(2) + (y - 32.0).powi(2) <= 16.0 * 16.0
            })
            .count();
        assert_eq!(m.area(), oracle);
        let continuous = std::f64::consts::PI * 16.0 * 16.0;
        assert!((m.area() as f64 - continuous).abs() / continuous < 0.03);
    }

    #[test]
    fn mask_is_deterministic() {
        let g = generate_geometry(11, 1, (6, 12)).unwrap();
        assert_eq!(render_mask(&g, 64), render_mask(&g, 64));
    }

    #[test]
    fn identity_domain_reproduces_base() {
        let g = generate_geometry(3, 0, (6, 12)).unwrap();
        let d = DomainSpec::identity(0);
        let img = render_image(&g, &d, 64, 99).unwrap();
        assert_eq!(img, base_rendering(&g, d.background_hue, 64, 99));
    }

    #[test]
    fn domains_change_image_but_not_mask() {
        let g = generate_geometry(5, 1, (6, 12)).unwrap();
        let ds = standard_domains();
        let a = render_image(&g, &ds[0], 64, 17).unwrap();
        let b = render_image(&g, &ds[1], 64, 17).unwrap();
        let changed = a
            .data
            .chunks_exact(3)
            .zip(b.data.chunks_exact(3))
            .filter(|(p, q)| {
                p.iter()
                    .zip(q.iter())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max)
                    >= 0.05
            })
            .count();
        assert!(changed * 10 >= 64 * 64, "only {changed} pixels changed");
    }

    #[test]
    fn extreme_gamma_stays_in_range() {
        let g = generate_geometry(5, 0, (6, 12)).unwrap();
        let mut d = DomainSpec::identity(4);
        d.gamma = [4.0; 3];
        d.noise_sigma = 0.2;
        let img = render_image(&g, &d, 64, 1).unwrap();
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn singular_domain_rejected() {
        let g = generate_geometry(5, 0, (6, 12)).unwrap();
        let mut d = DomainSpec::identity(1);
        d.color_matrix = [[0.0; 3]; 3];
        assert!(render_image(&g, &d, 64, 1).is_err());
        assert!(render_image(&g, &DomainSpec::identity(0), 16, 1).is_err());
    }

    #[test]
    fn reflect_padding_indices() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect_index(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }
}
