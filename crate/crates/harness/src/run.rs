//! One training run: the epoch loop, its record, and the files it writes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use gnp_core::flatness::probe;
use gnp_core::model::error_rate;
use gnp_core::{
    batch_iter, generate_dataset, init_params, train_step, Batch, Error, FlatnessReport, ModelLoss, ModelSpec,
    Objective, OptimState, ParamVector,
};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_error_rate: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    Diverged { step: u64 },
}

impl Outcome {
    pub fn is_diverged(&self) -> bool {
        matches!(self, Outcome::Diverged { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: BTreeMap<String, String>,
    pub experimental: bool,
    pub rows: Vec<EpochRow>,
    pub flatness: Option<FlatnessReport>,
    pub outcome: Outcome,
}

impl RunRecord {
    /// Copy with wall-clock columns zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> RunRecord {
        let mut r = self.clone();
        for row in &mut r.rows {
            row.wall_ms = 0;
        }
        r
    }

    pub fn final_row(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    /// Test error of the untrained model (the epoch-0 row).
    pub fn baseline_test_error(&self) -> Option<f64> {
        self.rows.first().filter(|r| r.epoch == 0).map(|r| r.test_error_rate)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read_json(path: &Path) -> Result<RunRecord> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write_metrics_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["epoch", "train_loss", "test_error", "grad_norm", "lr", "wall_ms"])?;
        for r in &self.rows {
            w.write_record([
                r.epoch.to_string(),
                format!("{:?}", r.train_loss),
                format!("{:?}", r.test_error_rate),
                format!("{:?}", r.grad_norm),
                format!("{:?}", r.lr),
                r.wall_ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a finished run produces in memory.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub record: RunRecord,
    pub model: ModelSpec,
    pub params: ParamVector,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Shuffle seed for one epoch of one run.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ epoch as u64)
}

struct Eval {
    train_loss: f64,
    grad_norm: f64,
    test_error: f64,
}

fn evaluate(model: &ModelSpec, params: &ParamVector, train: &Batch, test: &Batch) -> gnp_core::Result<Eval> {
    let (train_loss, grad) = ModelLoss::new(model, train).loss_and_grad(params)?;
    let test_error = error_rate(model, params, test)?;
    Ok(Eval {
        train_loss,
        grad_norm: grad.l2_norm(),
        test_error,
    })
}

fn divergence_step(err: &Error, fallback: u64) -> Option<u64> {
    match err {
        Error::Divergence { step, .. } => Some(step.unwrap_or(fallback)),
        _ => None,
    }
}

/// Trains to completion or divergence. Divergence is an outcome, not an error.
pub fn train(cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let (train_set, test_set) = generate_dataset(&cfg.dataset_spec()?)?;
    let classes = cfg.dataset_spec()?.num_classes().unwrap_or_else(|| {
        train_set
            .labels
            .iter()
            .chain(&test_set.labels)
            .max()
            .map_or(1, |m| m + 1)
    });
    let model = cfg.model_spec(train_set.features(), classes);
    let batch_size = cfg.batch_size.min(train_set.len());
    let steps_per_epoch = train_set.len().div_ceil(batch_size) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;
    let gnp = cfg.gnp_config(total_steps)?;

    let mut state = OptimState::new(init_params(&model)?);
    let mut rows = Vec::with_capacity(cfg.epochs + 1);
    let mut outcome = Outcome::Converged;

    let start = Instant::now();
    let first = evaluate(&model, &state.params, &train_set, &test_set)?;
    rows.push(EpochRow {
        epoch: 0,
        train_loss: first.train_loss,
        test_error_rate: first.test_error,
        grad_norm: first.grad_norm,
        lr: gnp_core::penalty::learning_rate(0, &gnp)?,
        wall_ms: start.elapsed().as_millis() as u64,
    });

    'epochs: for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut last_lr = 0.0;
        for batch in batch_iter(&train_set, batch_size, epoch_seed(cfg.seed, epoch))? {
            last_lr = gnp_core::penalty::learning_rate(state.step, &gnp)?;
            let obj = ModelLoss::new(&model, &batch);
            match train_step(&state, &obj, &gnp) {
                Ok((next, _)) => state = next,
                Err(e) => match divergence_step(&e, state.step) {
                    Some(step) => {
                        outcome = Outcome::Diverged { step };
                        break 'epochs;
                    }
                    None => return Err(e.into()),
                },
            }
        }
        let eval = match evaluate(&model, &state.params, &train_set, &test_set) {
            Ok(e) if e.train_loss.is_finite() && e.grad_norm.is_finite() => e,
            Ok(_) => {
                outcome = Outcome::Diverged { step: state.step };
                break;
            }
            Err(e) => match divergence_step(&e, state.step) {
                Some(_) => {
                    outcome = Outcome::Diverged { step: state.step };
                    break;
                }
                None => return Err(e.into()),
            },
        };
        rows.push(EpochRow {
            epoch,
            train_loss: eval.train_loss,
            test_error_rate: eval.test_error,
            grad_norm: eval.grad_norm,
            lr: last_lr,
            wall_ms: start.elapsed().as_millis() as u64,
        });
    }

    let flatness = if cfg.probe && outcome == Outcome::Converged {
        Some(probe(
            &ModelLoss::new(&model, &train_set),
            &state.params,
            &cfg.probe_config(),
        )?)
    } else {
        None
    };

    Ok(TrainOutput {
        record: RunRecord {
            config: cfg.to_map(),
            experimental: gnp.is_experimental(),
            rows,
            flatness,
            outcome,
        },
        model,
        params: state.params,
    })
}

/// Paths written by [`write_run`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub dir: PathBuf,
    pub record: PathBuf,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
}

pub fn write_run(out: &TrainOutput, cfg: &RunConfig, dir: &Path) -> Result<RunFiles> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = RunFiles {
        dir: dir.to_path_buf(),
        record: dir.join("record.json"),
        metrics: dir.join("metrics.csv"),
        checkpoint: dir.join("checkpoint.gnp"),
    };
    out.record.write_json(&files.record)?;
    out.record.write_metrics_csv(&files.metrics)?;
    checkpoint::save(&files.checkpoint, &out.model, &out.params, Some(cfg))?;
    Ok(files)
}
