use rayon::prelude::*;

use super::domain::DomainSpec;
use super::geometry::generate_geometry;
use super::render::{render_image, render_mask};
use crate::seed::{self, stream};
use crate::{Error, Image, Mask, Result};

pub const DEFAULT_COUNT_RANGE: (usize, usize) = (6, 12);

/// One rendered patch with its nuclear mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub image: Image,
    pub mask: Mask,
    pub label: u8,
    pub domain_id: u8,
    pub geometry_seed: u64,
}

/// Geometry seed of sample `index`.
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    seed::derive(base_seed, index)
}

/// Class of sample `index`; classes alternate so any prefix of even length is balanced.
pub fn sample_label(index: u64) -> u8 {
    (index % 2) as u8
}

pub fn make_dataset(
    n_per_class: usize,
    domains: &[DomainSpec],
    resolution: usize,
    base_seed: u64,
) -> Result<Vec<SamplePair>> {
    make_dataset_with_counts(
        n_per_class,
        domains,
        resolution,
        base_seed,
        DEFAULT_COUNT_RANGE,
    )
}

/// Renders `2 · n_per_class` geometries, each under every domain.
///
/// Output is ordered sample-major, then by position in `domains`. Each sample
/// has its own seed, so the result does not depend on scheduling. Image
/// values are rounded to `f32`, matching the on-disk precision.
pub fn make_dataset_with_counts(
    n_per_class: usize,
    domains: &[DomainSpec],
    resolution: usize,
    base_seed: u64,
    count_range: (usize, usize),
) -> Result<Vec<SamplePair>> {
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be at least 1".into()));
    }
    for d in domains {
        d.validate()?;
    }
    let per_sample: Vec<Vec<SamplePair>> = (0..2 * n_per_class as u64)
        .into_par_iter()
        .map(|i| {
            let gseed = sample_seed(base_seed, i);
            let label = sample_label(i);
            let geom = generate_geometry(gseed, label, count_range)?;
            let mask = render_mask(&geom, resolution);
            let render_seed = seed::derive(gseed, stream::RENDER);
            domains
                .iter()
                .map(|d| {
                    let mut image = render_image(&geom, d, resolution, render_seed)?;
                    image.round_to_f32();
                    Ok(SamplePair {
                        image,
                        mask: mask.clone(),
                        label,
                        domain_id: d.domain_id,
                        geometry_seed: gseed,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

/// Images with labels and domains only; the evaluation path never sees masks.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub images: Vec<Image>,
    pub labels: Vec<u8>,
    pub domain_ids: Vec<u8>,
}

impl ImageSet {
    pub fn from_pairs(pairs: &[SamplePair]) -> Self {
        Self {
            images: pairs.iter().map(|p| p.image.clone()).collect(),
            labels: pairs.iter().map(|p| p.label).collect(),
            domain_ids: pairs.iter().map(|p| p.domain_id).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Keeps only samples from `domain`; errors if none exist.
    pub fn domain(&self, domain: u8) -> Result<ImageSet> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.domain_ids[i] == domain)
            .collect();
        if keep.is_empty() {
            return Err(Error::Missing(format!(
                "domain {domain} not present in dataset"
            )));
        }
        Ok(self.select(&keep))
    }

    pub fn select(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            domain_ids: indices.iter().map(|&i| self.domain_ids[i]).collect(),
        }
    }

    /// Every `stride`-th sample of each domain, keeping at most `per_domain`.
    pub fn subsample_per_domain(&self, per_domain: usize) -> ImageSet {
        let mut domains: Vec<u8> = self.domain_ids.clone();
        domains.sort_unstable();
        domains.dedup();
        let mut keep = Vec::new();
        for d in domains {
            keep.extend(
                (0..self.len())
                    .filter(|&i| self.domain_ids[i] == d)
                    .take(per_domain),
            );
        }
        keep.sort_unstable();
        self.select(&keep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::domain::standard_domains;

    #[test]
    fn counts_balance_and_mask_invariance() {
        let ds = make_dataset(2, &standard_domains(), 64, 1).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.iter().filter(|s| s.label == 0).count(), 10);
        for sample in ds.chunks(5) {
            for s in sample {
                assert_eq!(s.mask.pack_bits(), sample[0].mask.pack_bits());
                assert_eq!(s.geometry_seed, sample[0].geometry_seed);
            }
            assert_ne!(sample[0].image, sample[1].image);
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let domains = standard_domains();
        let a = make_dataset(3, &domains[..2], 32, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| make_dataset(3, &domains[..2], 32, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(make_dataset(0, &standard_domains(), 64, 1).is_err());
    }

    #[test]
    fn missing_domain_rejected() {
        let set = ImageSet::from_pairs(&make_dataset(1, &standard_domains()[..1], 32, 2).unwrap());
        assert!(set.domain(0).is_ok());
        assert!(set.domain(3).is_err());
    }
}
