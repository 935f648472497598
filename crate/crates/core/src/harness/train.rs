use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Objective};
use super::objective::{erm_batch, morphgen_batch, MorphgenBatch};
use crate::model::{
    init_params, load_checkpoint, save_checkpoint, Checkpoint, ModelParams, TrainingBlobs,
};
use crate::optim::{adamw_step, lr_at, AdamWState, ScheduleConfig, SwaState};
use crate::robustness::{accuracy, predict_logits};
use crate::seed::{self, stream};
use crate::synthdata::{augment, ImageSet, SamplePair};
use crate::{Error, Image, Result};

/// One row per epoch; loss columns are sample-weighted means over the epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: u64,
    pub lr: f64,
    pub attract: f64,
    pub repel: f64,
    pub bce: f64,
    pub total: f64,
    pub val_accuracy: f64,
}

/// Training and validation data for one run.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Vec<SamplePair>,
    pub val: ImageSet,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue from `last.json` in the output directory if present.
    pub resume: bool,
    /// Stop after this many epochs in total (for checkpoint/resume workflows).
    pub stop_after: Option<u64>,
}

/// Weights as stored in checkpoints (rounded to `f32`).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_params: ModelParams,
    pub swa_params: Option<ModelParams>,
    pub log: Vec<LogRow>,
    pub completed: bool,
}

impl TrainOutcome {
    /// SWA weights when averaging is on, otherwise the final weights.
    pub fn eval_params(&self) -> &ModelParams {
        self.swa_params.as_ref().unwrap_or(&self.final_params)
    }
}

pub const LAST: &str = "last.json";
pub const FINAL: &str = "final.json";
pub const SWA: &str = "swa.json";
pub const LOG_CSV: &str = "train_log.csv";

struct RunState {
    params: ModelParams,
    adam: AdamWState,
    swa: SwaState,
    epoch: u64,
    log: Vec<LogRow>,
}

fn meta(
    cfg: &ExperimentConfig,
    run_seed: u64,
    kind: &str,
    epoch: u64,
) -> Result<BTreeMap<String, String>> {
    Ok(BTreeMap::from([
        ("config_hash".to_string(), cfg.hash()?),
        ("epoch".to_string(), epoch.to_string()),
        ("kind".to_string(), kind.to_string()),
        ("objective".to_string(), cfg.objective.name().to_string()),
        ("seed".to_string(), run_seed.to_string()),
    ]))
}

fn save_state(dir: &Path, cfg: &ExperimentConfig, run_seed: u64, st: &RunState) -> Result<()> {
    let mut vectors = vec![
        ("params".to_string(), st.params.flatten()),
        ("adam.m".to_string(), st.adam.m.clone()),
        ("adam.v".to_string(), st.adam.v.clone()),
    ];
    if let Some(avg) = st.swa.average() {
        vectors.push(("swa.average".to_string(), avg.to_vec()));
    }
    let counters = BTreeMap::from([
        ("adam.t".to_string(), st.adam.t),
        ("epoch".to_string(), st.epoch),
        ("swa.n_models".to_string(), st.swa.n_models()),
    ]);
    let mut stored = st.params.clone();
    stored.round_to_f32();
    save_checkpoint(
        &dir.join(LAST),
        &Checkpoint {
            params: stored,
            state: Some(TrainingBlobs { vectors, counters }),
            meta: meta(cfg, run_seed, "last", st.epoch)?,
        },
    )
}

fn load_state(dir: &Path, cfg: &ExperimentConfig, run_seed: u64) -> Result<RunState> {
    let ck = load_checkpoint(&dir.join(LAST))?;
    let want = meta(cfg, run_seed, "last", 0)?;
    for key in ["config_hash", "objective", "seed"] {
        if ck.meta.get(key) != want.get(key) {
            return Err(Error::Config(format!(
                "cannot resume: checkpoint {key} differs from this run"
            )));
        }
    }
    let blobs = ck
        .state
        .ok_or_else(|| Error::Missing("resume checkpoint has no training state".into()))?;
    let vec = |name: &str| {
        blobs
            .get(name)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::Missing(format!("state blob {name}")))
    };
    let counter = |name: &str| {
        blobs
            .counters
            .get(name)
            .copied()
            .ok_or_else(|| Error::Missing(format!("state counter {name}")))
    };
    let params = ModelParams::from_flat(&cfg.arch, &vec("params")?)?;
    let mut adam = AdamWState::new(params.num_params(), &cfg.optimizer);
    adam.m = vec("adam.m")?;
    adam.v = vec("adam.v")?;
    adam.t = counter("adam.t")?;
    let n_models = counter("swa.n_models")?;
    let avg = if n_models > 0 {
        Some(vec("swa.average")?)
    } else {
        None
    };
    let swa = SwaState::restore(avg, n_models, cfg.swa.start_epoch)?;
    let epoch = counter("epoch")?;
    let mut log = read_log(&dir.join(LOG_CSV))?;
    log.truncate(epoch as usize);
    Ok(RunState {
        params,
        adam,
        swa,
        epoch,
        log,
    })
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Trains one seed, writing `last.json` after every epoch and `final.json`
/// (plus `swa.json` when averaging is on) at the end.
///
/// Parameter initialisation, batch order and augmentations are all derived
/// from `run_seed`, so a resumed run is bit-identical to an uninterrupted one.
pub fn train(
    cfg: &ExperimentConfig,
    run_seed: u64,
    data: &TrainData,
    out_dir: &Path,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.len() < 2 {
        return Err(Error::BatchTooSmall(
            "need at least 2 training samples".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let schedule = ScheduleConfig {
        steps_per_epoch: data.train.len().div_ceil(cfg.training.batch_size) as u64,
        ..cfg.schedule.clone()
    };
    let mut st = if opts.resume && out_dir.join(LAST).exists() {
        load_state(out_dir, cfg, run_seed)?
    } else {
        let params = init_params(&cfg.arch, seed::derive(run_seed, stream::INIT))?;
        RunState {
            adam: AdamWState::new(params.num_params(), &cfg.optimizer),
            params,
            swa: SwaState::new(cfg.swa.start_epoch),
            epoch: 0,
            log: Vec::new(),
        }
    };

    let images: Vec<&Image> = data.train.iter().map(|p| &p.image).collect();
    let masks: Vec<Image> = match cfg.objective {
        Objective::Morphgen => data.train.iter().map(|p| p.mask.to_rgb()).collect(),
        Objective::Erm => Vec::new(),
    };
    let labels: Vec<u8> = data.train.iter().map(|p| p.label).collect();
    let last_epoch = opts.stop_after.map_or(cfg.schedule.total_epochs, |s| {
        s.min(cfg.schedule.total_epochs)
    });

    while st.epoch < last_epoch {
        let epoch = st.epoch + 1;
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive_path(
            run_seed,
            &[stream::SHUFFLE, epoch],
        )));
        let mut sums = [0.0; 4];
        let mut lr = 0.0;
        for (b, idx) in order.chunks(cfg.training.batch_size).enumerate() {
            let x: Vec<Image> = idx.iter().map(|&i| images[i].clone()).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let out = match cfg.objective {
                Objective::Morphgen => {
                    let aug: Vec<Image> = idx
                        .iter()
                        .map(|&i| {
                            let s =
                                seed::derive_path(run_seed, &[stream::AUGMENT, epoch, i as u64]);
                            augment(images[i], &cfg.augment, s)
                        })
                        .collect();
                    let m: Vec<Image> = idx.iter().map(|&i| masks[i].clone()).collect();
                    let batch = MorphgenBatch {
                        images: &x,
                        augmented: &aug,
                        masks: &m,
                        labels: &y,
                    };
                    morphgen_batch(&st.params, batch, &cfg.contrastive, false)?
                }
                Objective::Erm => erm_batch(&st.params, &x, &y, false)?,
            };
            let bd = out.breakdown;
            if !bd.total.is_finite() || !out.grads.all_finite() {
                return Err(Error::NonFinite(format!(
                    "seed {run_seed}, epoch {epoch}, batch {b}: attract {}, repel {}, bce {}, total {}",
                    bd.attract, bd.repel, bd.bce, bd.total
                )));
            }
            let n = idx.len() as f64;
            for (s, v) in sums
                .iter_mut()
                .zip([bd.attract, bd.repel, bd.bce, bd.total])
            {
                *s += n * v;
            }
            lr = lr_at(&schedule, st.adam.t + 1);
            let mut flat = st.params.flatten();
            adamw_step(&mut flat, &out.grads.flatten(), &mut st.adam, lr)?;
            st.params.assign_flat(&flat)?;
        }
        if cfg.swa.enabled && st.swa.should_snapshot(epoch) {
            st.swa.update(&st.params.flatten())?;
        }
        let val_accuracy = accuracy(
            &predict_logits(&st.params, &data.val.images)?,
            &data.val.labels,
        )?;
        let n = data.train.len() as f64;
        st.log.push(LogRow {
            epoch,
            lr,
            attract: sums[0] / n,
            repel: sums[1] / n,
            bce: sums[2] / n,
            total: sums[3] / n,
            val_accuracy,
        });
        st.epoch = epoch;
        write_log(&out_dir.join(LOG_CSV), &st.log)?;
        save_state(out_dir, cfg, run_seed, &st)?;
    }

    let completed = st.epoch == cfg.schedule.total_epochs;
    let mut final_params = st.params.clone();
    final_params.round_to_f32();
    let mut swa_params = None;
    if completed {
        save_checkpoint(
            &out_dir.join(FINAL),
            &Checkpoint {
                params: final_params.clone(),
                state: None,
                meta: meta(cfg, run_seed, "final", st.epoch)?,
            },
        )?;
        if cfg.swa.enabled {
            let mut p = ModelParams::from_flat(&cfg.arch, &st.swa.finalize()?)?;
            p.round_to_f32();
            save_checkpoint(
                &out_dir.join(SWA),
                &Checkpoint {
                    params: p.clone(),
                    state: None,
                    meta: meta(cfg, run_seed, "swa", st.epoch)?,
                },
            )?;
            swa_params = Some(p);
        }
    }
    Ok(TrainOutcome {
        final_params,
        swa_params,
        log: st.log,
        completed,
    })
}

/// Path of the checkpoint used for evaluation in a seed directory.
pub fn eval_checkpoint(seed_dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    seed_dir.join(if cfg.swa.enabled { SWA } else { FINAL })
}
