//! Checkpoints: a JSON header next to a little-endian `f32` parameter blob.
//!
//! The header records the architecture and the flat parameter ordering.
//! Training state (optimizer moments, weight average, full-precision
//! parameters) goes into an optional second blob of little-endian `f64`
//! values, so a run can be resumed exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::arch::ArchConfig;
use super::params::{ModelParams, ParamEntry};
use crate::{Error, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSection {
    pub blob: String,
    pub dtype: String,
    pub entries: Vec<BlobEntry>,
    pub counters: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub arch: ArchConfig,
    pub d: usize,
    pub dtype: String,
    pub params_blob: String,
    pub parameters: Vec<ParamEntry>,
    pub state: Option<StateSection>,
    pub meta: BTreeMap<String, String>,
}

/// Named `f64` vectors plus integer counters, stored beside the parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingBlobs {
    pub vectors: Vec<(String, Vec<f64>)>,
    pub counters: BTreeMap<String, u64>,
}

impl TrainingBlobs {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.vectors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub state: Option<TrainingBlobs>,
    pub meta: BTreeMap<String, String>,
}

fn sibling(header: &Path, suffix: &str) -> (PathBuf, String) {
    let stem = header
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint");
    let name = format!("{stem}{suffix}");
    (header.with_file_name(&name), name)
}

/// Writes `<stem>.json`, `<stem>.params.f32le` and, with state, `<stem>.state.f64le`.
pub fn save_checkpoint(header_path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(dir) = header_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let (params_path, params_blob) = sibling(header_path, ".params.f32le");
    let bytes: Vec<u8> = ckpt
        .params
        .flatten()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    fs::write(&params_path, bytes).map_err(|e| Error::io(&params_path, e))?;

    let state = match &ckpt.state {
        Some(blobs) => {
            let (state_path, blob) = sibling(header_path, ".state.f64le");
            let mut entries = Vec::new();
            let mut bytes = Vec::new();
            let mut offset = 0;
            for (name, v) in &blobs.vectors {
                entries.push(BlobEntry {
                    name: name.clone(),
                    offset,
                    len: v.len(),
                });
                offset += v.len();
                bytes.extend(v.iter().flat_map(|x| x.to_le_bytes()));
            }
            fs::write(&state_path, bytes).map_err(|e| Error::io(&state_path, e))?;
            Some(StateSection {
                blob,
                dtype: "f64le".into(),
                entries,
                counters: blobs.counters.clone(),
            })
        }
        None => None,
    };
    let header = CheckpointHeader {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        arch: ckpt.params.arch.clone(),
        d: ckpt.params.arch.d,
        dtype: "f32le".into(),
        params_blob,
        parameters: ckpt.params.layout(),
        state,
        meta: ckpt.meta.clone(),
    };
    let json = serde_json::to_vec_pretty(&header)?;
    fs::write(header_path, json).map_err(|e| Error::io(header_path, e))
}

pub fn load_checkpoint(header_path: &Path) -> Result<Checkpoint> {
    let raw = fs::read(header_path).map_err(|e| Error::io(header_path, e))?;
    let header: CheckpointHeader = serde_json::from_slice(&raw)?;
    if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::Schema {
            expected: CHECKPOINT_SCHEMA_VERSION,
            found: header.schema_version,
        });
    }
    if header.dtype != "f32le" || header.d != header.arch.d {
        return Err(Error::Config("unsupported checkpoint header".into()));
    }
    let params_path = header_path.with_file_name(&header.params_blob);
    let bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    let flat: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    let params = ModelParams::from_flat(&header.arch, &flat)?;
    if params.layout() != header.parameters {
        return Err(Error::Shape(
            "checkpoint parameter manifest does not match architecture".into(),
        ));
    }
    let state = match &header.state {
        Some(sec) => {
            let path = header_path.with_file_name(&sec.blob);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let all: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            let mut vectors = Vec::new();
            for e in &sec.entries {
                let v = all
                    .get(e.offset..e.offset + e.len)
                    .ok_or_else(|| Error::Shape(format!("state entry {} out of range", e.name)))?;
                vectors.push((e.name.clone(), v.to_vec()));
            }
            Some(TrainingBlobs {
                vectors,
                counters: sec.counters.clone(),
            })
        }
        None => None,
    };
    Ok(Checkpoint {
        params,
        state,
        meta: header.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::init_params;

    #[test]
    fn resave_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let arch = ArchConfig {
            resolution: 32,
            channels: vec![4, 8],
            d: 16,
            ..Default::default()
        };
        let params = init_params(&arch, 7).unwrap();
        let n = params.num_params();
        let ckpt = Checkpoint {
            params,
            state: Some(TrainingBlobs {
                vectors: vec![
                    ("adamw.m".into(), vec![0.1; n]),
                    ("adamw.v".into(), vec![1e-300; n]),
                ],
                counters: BTreeMap::from([("adamw.t".into(), 12)]),
            }),
            meta: BTreeMap::from([("objective".into(), "morphgen".into())]),
        };
        let a = dir.path().join("a.json");
        save_checkpoint(&a, &ckpt).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        assert_eq!(loaded.state, ckpt.state);
        let b = dir.path().join("b").join("a.json");
        save_checkpoint(&b, &loaded).unwrap();
        for f in ["a.json", "a.params.f32le", "a.state.f64le"] {
            let x = fs::read(dir.path().join(f)).unwrap();
            let y = fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
        let mut rounded = ckpt.params.clone();
        rounded.round_to_f32();
        assert_eq!(loaded.params, rounded);
    }
}
