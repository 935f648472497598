//! Class-conditional nuclear geometry.
//!
//! Normal patches hold evenly spaced, near-circular nuclei of uniform size.
//! Tumor patches hold nuclei of strongly varying size with irregular contours
//! and at least one tight cluster. Candidates are drawn from a seeded stream
//! and rejected until they satisfy the class invariants, so the output is a
//! pure function of `(seed, class, count_range)`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::{self, stream};
use crate::stats::coefficient_of_variation;
use crate::{Error, Result};

pub const NORMAL: u8 = 0;
pub const TUMOR: u8 = 1;

pub const MIN_NUCLEI: usize = 3;
pub const MAX_NUCLEI: usize = 40;

pub const NORMAL_MAX_AREA_CV: f64 = 0.15;
pub const NORMAL_MAX_WOBBLE: f64 = 0.05;
pub const NORMAL_MIN_SPACING: f64 = 0.08;
pub const TUMOR_MIN_AREA_CV: f64 = 0.40;
pub const TUMOR_MIN_WOBBLE: f64 = 0.15;
pub const CLUSTER_SIZE: usize = 3;
pub const CLUSTER_DIST: f64 = 0.06;

const MAX_ATTEMPTS: u64 = 256;

/// One sinusoidal term of the radial contour perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    pub weight: f64,
    pub phase: f64,
}

/// A nucleus: an ellipse whose radius is modulated by a few low-order harmonics.
///
/// Coordinates are fractions of the patch side. `axes` are semi-axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub axes: [f64; 2],
    pub angle: f64,
    pub contour_wobble: f64,
    /// Weights sum to 1 in absolute value, so the radius stays within
    /// `1 ± contour_wobble` of the plain ellipse.
    pub harmonics: Vec<Harmonic>,
}

impl Ellipse {
    /// Area of the unperturbed ellipse.
    pub fn area(&self) -> f64 {
        PI * self.axes[0] * self.axes[1]
    }

    /// Largest distance from the center any contour point can reach.
    pub fn bounding_radius(&self) -> f64 {
        self.axes[0].max(self.axes[1]) * (1.0 + self.contour_wobble)
    }

    fn radial_factor(&self, theta: f64) -> f64 {
        let s: f64 = self
            .harmonics
            .iter()
            .map(|h| h.weight * (f64::from(h.order) * theta + h.phase).cos())
            .sum();
        1.0 + self.contour_wobble * s
    }

    /// Point-in-shape test in fractional coordinates.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / self.axes[0];
        let v = (-dx * s + dy * c) / self.axes[1];
        let rho2 = u * u + v * v;
        if self.contour_wobble == 0.0 || self.harmonics.is_empty() {
            return rho2 <= 1.0;
        }
        let bound = 1.0 + self.contour_wobble;
        if rho2 > bound * bound {
            return false;
        }
        let r = self.radial_factor(v.atan2(u));
        rho2 <= r * r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub nuclei: Vec<Ellipse>,
    pub class_label: u8,
    pub geometry_seed: u64,
}

impl GeometrySpec {
    pub fn empty(class_label: u8, geometry_seed: u64) -> Self {
        Self {
            nuclei: Vec::new(),
            class_label,
            geometry_seed,
        }
    }

    pub fn areas(&self) -> Vec<f64> {
        self.nuclei.iter().map(Ellipse::area).collect()
    }

    pub fn area_cv(&self) -> f64 {
        coefficient_of_variation(&self.areas())
    }

    /// Smallest center-to-center distance; infinite with fewer than two nuclei.
    pub fn min_center_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.nuclei.iter().enumerate() {
            for b in &self.nuclei[i + 1..] {
                best = best.min(dist(a.center, b.center));
            }
        }
        best
    }

    /// Whether some `size` nuclei have all pairwise center distances below `max_dist`.
    pub fn has_cluster(&self, size: usize, max_dist: f64) -> bool {
        let n = self.nuclei.len();
        let close: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        i != j && dist(self.nuclei[i].center, self.nuclei[j].center) < max_dist
                    })
                    .collect()
            })
            .collect();
        let mut chosen = Vec::with_capacity(size);
        clique_search(&close, size, 0, &mut chosen)
    }

    /// Checks the class-conditional invariants.
    pub fn satisfies_class_invariants(&self) -> bool {
        if self.nuclei.len() < MIN_NUCLEI {
            return false;
        }
        match self.class_label {
            NORMAL => {
                self.area_cv() <= NORMAL_MAX_AREA_CV
                    && self
                        .nuclei
                        .iter()
                        .all(|e| e.contour_wobble <= NORMAL_MAX_WOBBLE)
                    && self.min_center_distance() >= NORMAL_MIN_SPACING
            }
            TUMOR => {
                let irregular = self
                    .nuclei
                    .iter()
                    .filter(|e| e.contour_wobble >= TUMOR_MIN_WOBBLE)
                    .count();
                self.area_cv() >= TUMOR_MIN_AREA_CV
                    && 2 * irregular >= self.nuclei.len()
                    && self.has_cluster(CLUSTER_SIZE, CLUSTER_DIST)
            }
            _ => false,
        }
    }
}

fn clique_search(close: &[Vec<bool>], size: usize, start: usize, chosen: &mut Vec<usize>) -> bool {
    if chosen.len() == size {
        return true;
    }
    for k in start..close.len() {
        if chosen.iter().all(|&c| close[c][k]) {
            chosen.push(k);
            if clique_search(close, size, k + 1, chosen) {
                return true;
            }
            chosen.pop();
        }
    }
    false
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Generates a geometry for `class_label` with a nucleus count drawn from
/// `count_range` (inclusive).
pub fn generate_geometry(
    seed: u64,
    class_label: u8,
    count_range: (usize, usize),
) -> Result<GeometrySpec> {
    let (lo, hi) = count_range;
    if lo > hi {
        return Err(Error::Config(format!(
            "count range min {lo} exceeds max {hi}"
        )));
    }
    if lo < MIN_NUCLEI || hi > MAX_NUCLEI {
        return Err(Error::Config(format!(
            "count range ({lo}, {hi}) outside [{MIN_NUCLEI}, {MAX_NUCLEI}]"
        )));
    }
    if class_label > TUMOR {
        return Err(Error::Config(format!(
            "class label {class_label} is not binary"
        )));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seed::rng(seed::derive_path(
            seed,
            &[stream::GEOMETRY, u64::from(class_label), attempt],
        ));
        let count = rng.random_range(lo..=hi);
        let nuclei = match class_label {
            NORMAL => normal_nuclei(&mut rng, count),
            _ => tumor_nuclei(&mut rng, count),
        };
        if let Some(nuclei) = nuclei {
            let geom = GeometrySpec {
                nuclei,
                class_label,
                geometry_seed: seed,
            };
            if geom.satisfies_class_invariants() {
                return Ok(geom);
            }
        }
    }
    Err(Error::Config(format!(
        "no valid geometry for seed {seed}, class {class_label} after {MAX_ATTEMPTS} attempts"
    )))
}

fn harmonics<R: Rng>(rng: &mut R) -> Vec<Harmonic> {
    let n = rng.random_range(2..=3usize);
    let mut hs: Vec<Harmonic> = (0..n)
        .map(|_| Harmonic {
            order: rng.random_range(3..=7u32),
            weight: rng.random_range(0.3..1.0),
            phase: rng.random_range(0.0..TAU),
        })
        .collect();
    let total: f64 = hs.iter().map(|h| h.weight).sum();
    for h in &mut hs {
        h.weight /= total;
    }
    hs
}

fn normal_nuclei<R: Rng>(rng: &mut R, count: usize) -> Option<Vec<Ellipse>> {
    let r0 = rng.random_range(0.040..0.048);
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(count);
    let mut tries = 0;
    while centers.len() < count {
        tries += 1;
        if tries > 5000 {
            return None;
        }
        let c = [rng.random_range(0.08..0.92), rng.random_range(0.08..0.92)];
        if centers
            .iter()
            .all(|&o| dist(o, c) >= NORMAL_MIN_SPACING + 0.01)
        {
            centers.push(c);
        }
    }
    Some(
        centers
            .into_iter()
            .map(|center| {
                let a = r0 * rng.random_range(0.95..1.05);
                let b = a * rng.random_range(0.88..1.0);
                Ellipse {
                    center,
                    axes: [a, b],
                    angle: rng.random_range(0.0..PI),
                    contour_wobble: rng.random_range(0.0..NORMAL_MAX_WOBBLE),
                    harmonics: harmonics(rng),
                }
            })
            .collect(),
    )
}

fn tumor_nuclei<R: Rng>(rng: &mut R, count: usize) -> Option<Vec<Ellipse>> {
    let r0 = rng.random_range(0.045..0.055);
    let cluster = rng.random_range(CLUSTER_SIZE..=count.min(5));
    let hub = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(count);
    for _ in 0..cluster {
        let r = rng.random_range(0.0..0.025);
        let t = rng.random_range(0.0..TAU);
        centers.push([hub[0] + r * t.cos(), hub[1] + r * t.sin()]);
    }
    while centers.len() < count {
        centers.push([rng.random_range(0.06..0.94), rng.random_range(0.06..0.94)]);
    }
    Some(
        centers
            .into_iter()
            .map(|center| {
                let a = (r0 * rng.random_range(-0.6f64..0.8).exp()).min(0.12);
                let b = a * rng.random_range(0.55..0.95);
                let wobble = if rng.random_bool(0.75) {
                    rng.random_range(TUMOR_MIN_WOBBLE..0.35)
                } else {
                    rng.random_range(0.02..TUMOR_MIN_WOBBLE)
                };
                Ellipse {
                    center,
                    axes: [a, b],
                    angle: rng.random_range(0.0..PI),
                    contour_wobble: wobble,
                    harmonics: harmonics(rng),
                }
            })
            .collect(),
    )
}
