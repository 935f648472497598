use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use morphgen::attribution::{attribution_report, BaselineKind};
use morphgen::harness::eval::{accuracy_of, write_predictions};
use morphgen::harness::{self, ExperimentConfig, TrainOptions};
use morphgen::model::{load_checkpoint, ModelParams};
use morphgen::robustness::{
    eval_under_attack, eval_under_corruption, write_attack_csv, write_corruption_csv,
    CorruptionKind,
};
use morphgen::synthdata::{load_images, ImageSet};
use morphgen::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "morphgen",
    version,
    about = "Morphology-guided alignment desk lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic dataset described by a config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one seed on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Continue from `last.json` in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs in total.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Clean accuracy of a checkpoint, overall and per domain.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Restrict to these domains (comma separated).
        #[arg(long, value_delimiter = ',')]
        domains: Vec<u8>,
        /// Write per-sample predictions here.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Accuracy under the eight corruptions.
    CorruptEval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_delimiter = ',')]
        domains: Vec<u8>,
        /// Samples kept per domain (0 keeps all).
        #[arg(long, default_value_t = 0)]
        per_domain: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        severities: Vec<u8>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Robust accuracy under L∞ PGD.
    AttackEval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Budgets in units of 1/255.
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2")]
        eps: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_delimiter = ',')]
        domains: Vec<u8>,
        #[arg(long, default_value_t = 0)]
        per_domain: usize,
        #[arg(long, default_value_t = 20)]
        steps: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Integrated-gradients heat maps for both classes.
    Attribute {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_delimiter = ',')]
        domains: Vec<u8>,
        #[arg(long, default_value_t = 256)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Baseline::Zeros)]
        baseline: Baseline,
    },
    /// Merge the metrics of several runs into consolidated tables.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, train every seed, evaluate and write the metrics report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    Zeros,
    DatasetMean,
}

fn load_set(data: &Path, split: &str, domains: &[u8], per_domain: usize) -> Result<ImageSet> {
    let set = load_images(data, split)?;
    let set = if domains.is_empty() {
        set
    } else {
        let keep: Vec<usize> = (0..set.len())
            .filter(|&i| domains.contains(&set.domain_ids[i]))
            .collect();
        if keep.is_empty() {
            return Err(Error::Missing(format!(
                "none of domains {domains:?} in split {split}"
            )));
        }
        set.select(&keep)
    };
    Ok(if per_domain > 0 {
        set.subsample_per_domain(per_domain)
    } else {
        set
    })
}

fn load_model(ckpt: &Path) -> Result<ModelParams> {
    Ok(load_checkpoint(ckpt)?.params)
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            harness::generate_dataset(&cfg, &out)?;
            Ok(json!({ "dataset": out }))
        }
        Command::Train {
            config,
            data,
            seed,
            out,
            resume,
            stop_after,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let train_data = harness::load_train_data(&data)?;
            let outcome = harness::train(
                &cfg,
                seed,
                &train_data,
                &out,
                &TrainOptions { resume, stop_after },
            )?;
            let last = outcome.log.last();
            Ok(json!({
                "seed": seed,
                "epochs": outcome.log.len(),
                "completed": outcome.completed,
                "final_total_loss": last.map(|r| r.total),
                "val_accuracy": last.map(|r| r.val_accuracy),
            }))
        }
        Command::Eval {
            ckpt,
            data,
            split,
            domains,
            predictions,
        } => {
            let model = load_model(&ckpt)?;
            let set = load_set(&data, &split, &domains, 0)?;
            let rows = harness::predict(&model, &set)?;
            if let Some(p) = predictions {
                write_predictions(&p, &rows)?;
            }
            let mut ids = set.domain_ids.clone();
            ids.sort_unstable();
            ids.dedup();
            let mut per_domain = serde_json::Map::new();
            for d in ids {
                let sub: Vec<_> = rows.iter().filter(|r| r.domain == d).cloned().collect();
                per_domain.insert(d.to_string(), json!(accuracy_of(&sub)?));
            }
            Ok(
                json!({ "accuracy": accuracy_of(&rows)?, "per_domain": per_domain, "samples": rows.len() }),
            )
        }
        Command::CorruptEval {
            ckpt,
            data,
            out,
            split,
            domains,
            per_domain,
            severities,
            seeds,
        } => {
            let model = load_model(&ckpt)?;
            let set = load_set(&data, &split, &domains, per_domain)?;
            let rows =
                eval_under_corruption(&model, &set, &CorruptionKind::ALL, &severities, &seeds)?;
            write_corruption_csv(&out, &rows)?;
            Ok(json!({ "rows": rows.len(), "out": out }))
        }
        Command::AttackEval {
            ckpt,
            data,
            eps,
            out,
            split,
            domains,
            per_domain,
            steps,
            seed,
        } => {
            let model = load_model(&ckpt)?;
            let set = load_set(&data, &split, &domains, per_domain)?;
            let budgets: Vec<f64> = eps.iter().map(|e| e / 255.0).collect();
            let rows = eval_under_attack(&model, &set, &budgets, steps, seed)?;
            write_attack_csv(&out, &rows)?;
            Ok(json!({ "rows": rows.len(), "out": out }))
        }
        Command::Attribute {
            ckpt,
            data,
            n,
            out,
            split,
            domains,
            steps,
            baseline,
        } => {
            let model = load_model(&ckpt)?;
            let set = load_set(&data, &split, &domains, 0)?;
            let kind = match baseline {
                Baseline::Zeros => BaselineKind::Zeros,
                Baseline::DatasetMean => BaselineKind::DatasetMean,
            };
            let n = n.min(set.len());
            let rows = attribution_report(&model, &set.images[..n], kind, steps, &out)?;
            let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.residual));
            Ok(json!({ "maps": rows.len(), "max_residual": worst, "out": out }))
        }
        Command::Report { runs, out } => {
            let dirs: Vec<&Path> = runs.iter().map(PathBuf::as_path).collect();
            let rows = harness::report(&dirs, &out)?;
            Ok(json!({ "accuracy_rows": rows, "out": out }))
        }
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if !seed.is_empty() {
                cfg.seeds = seed;
                cfg.validate()?;
            }
            let report = harness::run_experiment(&cfg, &out)?;
            Ok(json!({
                "name": report.name,
                "objective": report.objective,
                "ood_mean": report.aggregate.ood_mean,
                "cross_domain_sd": report.aggregate.cross_domain_sd,
                "out": out,
            }))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
