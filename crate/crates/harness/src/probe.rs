//! Flatness probes of saved checkpoints and the 1-D double-well experiment.

use std::path::Path;

use anyhow::{Context, Result};
use gnp_core::flatness::{double_well_experiment, probe, DoubleWell, DoubleWellOutcome};
use gnp_core::{generate_dataset, Batch, FlatnessReport, GnpConfig, ModelLoss, ModelSpec, ParamVector, ProbeConfig};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;

/// Probes a checkpoint on the training split of the dataset described by `cfg`.
pub fn probe_checkpoint(ckpt: &Checkpoint, cfg: &RunConfig, probe_cfg: &ProbeConfig) -> Result<FlatnessReport> {
    let (train, _) = generate_dataset(&cfg.dataset_spec()?)?;
    let model = &ckpt.header.model;
    anyhow::ensure!(
        train.features() == model.input_dim(),
        "dataset has {} features, checkpoint model expects {}",
        train.features(),
        model.input_dim()
    );
    probe_on(model, &ckpt.params, &train, probe_cfg)
}

pub fn probe_on(
    model: &ModelSpec,
    params: &ParamVector,
    data: &Batch,
    probe_cfg: &ProbeConfig,
) -> Result<FlatnessReport> {
    Ok(probe(&ModelLoss::new(model, data), params, probe_cfg)?)
}

/// Evenly spaced grid of `n` points on `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn run_double_well(gnp: &GnpConfig, inits: &[f64], steps: u64) -> DoubleWellOutcome {
    double_well_experiment(&DoubleWell::default(), gnp, inits, steps)
}

pub fn write_double_well_csv(path: &Path, outcome: &DoubleWellOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["init", "scheme", "final_x", "basin"])?;
    for row in &outcome.rows {
        let basin = serde_json::to_value(row.basin)?;
        w.write_record([
            format!("{:?}", row.init),
            row.scheme.clone(),
            format!("{:?}", row.final_x),
            basin.as_str().unwrap_or_default().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
