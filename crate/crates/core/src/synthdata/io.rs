//! Dataset directory format.
//!
//! `manifest.json` describes every split; per split there is an image blob of
//! little-endian `f32` values (sample-major, row-major, channel-last) and an
//! optional mask blob of MSB-first packed bits, one byte-aligned record per
//! sample. Loading images never touches the mask blob.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{ImageSet, SamplePair};
use super::domain::DomainSpec;
use crate::{Error, Image, Mask, Result};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub name: String,
    pub count: usize,
    pub images_blob: String,
    pub masks_blob: Option<String>,
    pub labels: Vec<u8>,
    pub domain_ids: Vec<u8>,
    pub geometry_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub resolution: usize,
    pub channels: usize,
    pub count_range: (usize, usize),
    pub domains: Vec<DomainSpec>,
    pub seeds: BTreeMap<String, u64>,
    pub splits: Vec<SplitRecord>,
}

impl DatasetManifest {
    pub fn split(&self, name: &str) -> Result<&SplitRecord> {
        self.splits
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Missing(format!("split {name:?} not in manifest")))
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `splits` under `dir` and returns the manifest that was written.
pub fn write_dataset(
    dir: &Path,
    resolution: usize,
    count_range: (usize, usize),
    domains: &[DomainSpec],
    seeds: BTreeMap<String, u64>,
    splits: &[(&str, &[SamplePair])],
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::new();
    for &(name, samples) in splits {
        let images_blob = format!("{name}.images.f32le");
        let masks_blob = format!("{name}.masks.bits");
        let mut img_bytes = Vec::new();
        let mut mask_bytes = Vec::new();
        for s in samples {
            if s.image.height != resolution || s.image.width != resolution || s.image.channels != 3
            {
                return Err(Error::Shape(format!(
                    "split {name}: image does not match resolution {resolution}"
                )));
            }
            for &v in &s.image.data {
                img_bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
            mask_bytes.extend_from_slice(&s.mask.pack_bits());
        }
        write(&dir.join(&images_blob), &img_bytes)?;
        write(&dir.join(&masks_blob), &mask_bytes)?;
        records.push(SplitRecord {
            name: name.to_string(),
            count: samples.len(),
            images_blob,
            masks_blob: Some(masks_blob),
            labels: samples.iter().map(|s| s.label).collect(),
            domain_ids: samples.iter().map(|s| s.domain_id).collect(),
            geometry_seeds: samples.iter().map(|s| s.geometry_seed).collect(),
        });
    }
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        resolution,
        channels: 3,
        count_range,
        domains: domains.to_vec(),
        seeds,
        splits: records,
    };
    write(
        &dir.join(MANIFEST_FILE),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = serde_json::from_slice(&read(&dir.join(MANIFEST_FILE))?)?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Schema {
            expected: DATASET_SCHEMA_VERSION,
            found: manifest.schema_version,
        });
    }
    Ok(manifest)
}

fn decode_images(
    manifest: &DatasetManifest,
    split: &SplitRecord,
    bytes: &[u8],
) -> Result<Vec<Image>> {
    let per = manifest.resolution * manifest.resolution * manifest.channels;
    if bytes.len() != split.count * per * 4 {
        return Err(Error::Shape(format!(
            "image blob for split {} has {} bytes, expected {}",
            split.name,
            bytes.len(),
            split.count * per * 4
        )));
    }
    bytes
        .chunks_exact(per * 4)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                .collect();
            Image::from_vec(
                manifest.resolution,
                manifest.resolution,
                manifest.channels,
                data,
            )
        })
        .collect()
}

/// Loads images and labels of a split without reading any mask data.
pub fn load_images(dir: &Path, split: &str) -> Result<ImageSet> {
    let manifest = read_manifest(dir)?;
    let rec = manifest.split(split)?;
    let images = decode_images(&manifest, rec, &read(&dir.join(&rec.images_blob))?)?;
    Ok(ImageSet {
        images,
        labels: rec.labels.clone(),
        domain_ids: rec.domain_ids.clone(),
    })
}

/// Loads a full split including masks.
pub fn load_split(dir: &Path, split: &str) -> Result<Vec<SamplePair>> {
    let manifest = read_manifest(dir)?;
    let rec = manifest.split(split)?;
    let images = decode_images(&manifest, rec, &read(&dir.join(&rec.images_blob))?)?;
    let masks_name = rec
        .masks_blob
        .as_ref()
        .ok_or_else(|| Error::Missing(format!("split {split} has no masks")))?;
    let mask_bytes = read(&dir.join(masks_name))?;
    let r = manifest.resolution;
    let per = (r * r).div_ceil(8);
    if mask_bytes.len() != rec.count * per {
        return Err(Error::Shape(format!(
            "mask blob for split {split} has wrong length"
        )));
    }
    images
        .into_iter()
        .zip(mask_bytes.chunks_exact(per))
        .enumerate()
        .map(|(i, (image, bits))| {
            Ok(SamplePair {
                image,
                mask: Mask::unpack_bits(r, r, bits)?,
                label: rec.labels[i],
                domain_id: rec.domain_ids[i],
                geometry_seed: rec.geometry_seeds[i],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::dataset::make_dataset;
    use crate::synthdata::domain::standard_domains;

    #[test]
    fn write_then_load_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let domains = standard_domains();
        let train = make_dataset(2, &domains[..1], 32, 4).unwrap();
        let eval = make_dataset(1, &domains[1..], 32, 5).unwrap();
        let seeds = BTreeMap::from([("train".to_string(), 4), ("eval".to_string(), 5)]);
        write_dataset(
            dir.path(),
            32,
            (6, 12),
            &domains,
            seeds,
            &[("train", &train), ("eval", &eval)],
        )
        .unwrap();
        assert_eq!(load_split(dir.path(), "train").unwrap(), train);
        assert_eq!(load_split(dir.path(), "eval").unwrap(), eval);
    }

    #[test]
    fn images_load_without_mask_blob() {
        let dir = tempfile::tempdir().unwrap();
        let domains = standard_domains();
        let eval = make_dataset(1, &domains[1..3], 32, 5).unwrap();
        write_dataset(
            dir.path(),
            32,
            (6, 12),
            &domains,
            BTreeMap::new(),
            &[("eval", &eval)],
        )
        .unwrap();
        fs::remove_file(dir.path().join("eval.masks.bits")).unwrap();
        let set = load_images(dir.path(), "eval").unwrap();
        assert_eq!(set, ImageSet::from_pairs(&eval));
        assert!(load_split(dir.path(), "eval").is_err());
    }

    #[test]
    fn schema_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let eval = make_dataset(1, &standard_domains()[..1], 32, 5).unwrap();
        let mut m = write_dataset(
            dir.path(),
            32,
            (6, 12),
            &[],
            BTreeMap::new(),
            &[("eval", &eval)],
        )
        .unwrap();
        m.schema_version = 99;
        fs::write(
            dir.path().join(MANIFEST_FILE),
            serde_json::to_vec(&m).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            read_manifest(dir.path()),
            Err(Error::Schema { .. })
        ));
    }
}
