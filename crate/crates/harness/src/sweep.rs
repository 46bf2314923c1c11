//! Grid sweeps over run configurations, resumable by config hash.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::run::{train, RunRecord};

pub const DEFAULT_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub axes: Vec<Axis>,
    pub seeds: Vec<u64>,
    /// Upper bound on cells × seeds.
    pub cap: usize,
}

impl SweepSpec {
    pub fn new(base: RunConfig) -> Self {
        let seeds = vec![base.seed];
        Self {
            base,
            axes: Vec::new(),
            seeds,
            cap: DEFAULT_CAP,
        }
    }

    pub fn axis(mut self, name: &str, values: &[&str]) -> Self {
        self.axes.push(Axis {
            name: name.to_string(),
            values: values.iter().map(|v| v.to_string()).collect(),
        });
        self
    }

    pub fn seeds(mut self, seeds: impl IntoIterator<Item = u64>) -> Self {
        self.seeds = seeds.into_iter().collect();
        self
    }

    /// Builds a spec from key/value pairs. `axis.<key> = a,b,c` declares an
    /// axis; `seeds` and `cap` configure the sweep; every other key goes to the
    /// base run config.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut spec = SweepSpec::new(RunConfig::default());
        let mut seeds = None;
        for (k, v) in pairs {
            if let Some(name) = k.strip_prefix("axis.") {
                let values: Vec<String> = v
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                spec.axes.retain(|a| a.name != name);
                spec.axes.push(Axis {
                    name: name.to_string(),
                    values,
                });
            } else if k == "seeds" {
                seeds = Some(
                    v.split(',')
                        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
                        .collect::<Result<Vec<_>>>()?,
                );
            } else if k == "cap" {
                spec.cap = v.trim().parse().with_context(|| format!("bad cap {v:?}"))?;
            } else {
                spec.base.set(k, v)?;
            }
        }
        spec.seeds = seeds.unwrap_or_else(|| vec![spec.base.seed]);
        Ok(spec)
    }

    pub fn num_cells(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Axis value combinations in row-major order (first axis outermost).
    pub fn cells(&self) -> Vec<Vec<String>> {
        let mut cells = vec![Vec::new()];
        for axis in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut c = prefix.clone();
                        c.push(v.clone());
                        c
                    })
                })
                .collect();
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("sweep needs at least one seed");
        }
        if let Some(a) = self.axes.iter().find(|a| a.values.is_empty()) {
            bail!("axis {} has no values", a.name);
        }
        if let Some(a) = self.axes.iter().find(|a| a.name == "seed") {
            bail!("axis {} collides with the seeds list", a.name);
        }
        let n = self.num_cells() * self.seeds.len();
        if n > self.cap {
            bail!("sweep has {n} cell-seed runs, above the cap of {}", self.cap);
        }
        Ok(())
    }

    /// Every (cell, seed) run config in deterministic order.
    pub fn jobs(&self) -> Result<Vec<Job>> {
        self.validate()?;
        let mut jobs = Vec::new();
        for (cell_index, cell) in self.cells().into_iter().enumerate() {
            for &seed in &self.seeds {
                let mut cfg = self.base.clone();
                for (axis, value) in self.axes.iter().zip(&cell) {
                    cfg.set(&axis.name, value)?;
                }
                cfg.seed = seed;
                cfg.validate().with_context(|| format!("cell {:?} seed {seed}", cell))?;
                jobs.push(Job {
                    cell_index,
                    cell: cell.clone(),
                    seed,
                    hash: cfg.hash(),
                    config: cfg,
                });
            }
        }
        Ok(jobs)
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    pub cell_index: usize,
    pub cell: Vec<String>,
    pub seed: u64,
    pub hash: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses all available cores.
    pub workers: Option<usize>,
    /// Stop after starting this many new runs (simulates an interruption).
    pub max_new_runs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: Vec<String>,
    pub n_seeds: usize,
    pub n_diverged: usize,
    pub mean_test_error: f64,
    pub std_test_error: f64,
    pub se_test_error: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub jobs: Vec<Job>,
    /// Records in job order; `None` for runs not yet completed.
    pub records: Vec<Option<RunRecord>>,
    pub newly_run: usize,
    pub summary: Option<Vec<CellSummary>>,
    pub tidy_csv: PathBuf,
    pub summary_csv: PathBuf,
}

impl SweepResult {
    pub fn is_complete(&self) -> bool {
        self.records.iter().all(Option::is_some)
    }

    pub fn cell_records(&self, cell_index: usize) -> Vec<&RunRecord> {
        self.jobs
            .iter()
            .zip(&self.records)
            .filter(|(j, _)| j.cell_index == cell_index)
            .filter_map(|(_, r)| r.as_ref())
            .collect()
    }
}

fn record_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join("runs").join(format!("{hash}.json"))
}

fn load_existing(path: &Path) -> Option<RunRecord> {
    RunRecord::read_json(path).ok()
}

fn final_test_error(r: &RunRecord) -> f64 {
    r.final_row().map_or(f64::NAN, |row| row.test_error_rate)
}

/// Mean, sample standard deviation and standard error.
pub fn mean_std_se(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    (mean, std, std / (n as f64).sqrt())
}

fn summarize(spec: &SweepSpec, jobs: &[Job], records: &[RunRecord]) -> Vec<CellSummary> {
    spec.cells()
        .into_iter()
        .enumerate()
        .map(|(ci, cell)| {
            let runs: Vec<&RunRecord> = jobs
                .iter()
                .zip(records)
                .filter(|(j, _)| j.cell_index == ci)
                .map(|(_, r)| r)
                .collect();
            let converged: Vec<f64> = runs
                .iter()
                .filter(|r| !r.outcome.is_diverged())
                .map(|r| final_test_error(r))
                .collect();
            let (mean, std, se) = mean_std_se(&converged);
            CellSummary {
                cell,
                n_seeds: runs.len(),
                n_diverged: runs.len() - converged.len(),
                mean_test_error: mean,
                std_test_error: std,
                se_test_error: se,
            }
        })
        .collect()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn write_tidy(path: &Path, spec: &SweepSpec, jobs: &[Job], records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header: Vec<String> = spec.axes.iter().map(|a| a.name.clone()).collect();
    header.extend(
        [
            "seed",
            "config_hash",
            "outcome",
            "diverged_step",
            "epochs_completed",
            "baseline_test_error",
            "final_test_error",
            "final_train_loss",
            "final_grad_norm",
            "top_eig_est",
            "sharpness_est",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for (job, rec) in jobs.iter().zip(records) {
        let mut row = job.cell.clone();
        let (outcome, step) = match rec.outcome {
            crate::run::Outcome::Converged => ("converged", String::new()),
            crate::run::Outcome::Diverged { step } => ("diverged", step.to_string()),
        };
        let last = rec.final_row();
        row.extend([
            job.seed.to_string(),
            job.hash.clone(),
            outcome.to_string(),
            step,
            last.map_or(0, |r| r.epoch).to_string(),
            opt_f64(rec.baseline_test_error()),
            opt_f64(last.map(|r| r.test_error_rate)),
            opt_f64(last.map(|r| r.train_loss)),
            opt_f64(last.map(|r| r.grad_norm)),
            opt_f64(rec.flatness.as_ref().map(|f| f.top_eig_est)),
            opt_f64(rec.flatness.as_ref().map(|f| f.sharpness_est)),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, spec: &SweepSpec, summary: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header: Vec<String> = spec.axes.iter().map(|a| a.name.clone()).collect();
    header.extend(
        [
            "n_seeds",
            "n_diverged",
            "mean_test_error",
            "std_test_error",
            "se_test_error",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for s in summary {
        let mut row = s.cell.clone();
        row.extend([
            s.n_seeds.to_string(),
            s.n_diverged.to_string(),
            format!("{:?}", s.mean_test_error),
            format!("{:?}", s.std_test_error),
            format!("{:?}", s.se_test_error),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn run_job(job: &Job, dir: &Path) -> Result<RunRecord> {
    let out = train(&job.config).with_context(|| format!("run {:?} seed {}", job.cell, job.seed))?;
    let path = record_path(dir, &job.hash);
    let tmp = path.with_extension("json.partial");
    out.record.write_json(&tmp)?;
    std::fs::rename(&tmp, &path).with_context(|| format!("finalizing {}", path.display()))?;
    Ok(out.record)
}

/// Runs every pending cell-seed, skipping runs whose record already exists,
/// then writes the tidy and summary CSVs once all runs are complete.
pub fn run_sweep(spec: &SweepSpec, dir: &Path, opts: &SweepOptions) -> Result<SweepResult> {
    let jobs = spec.jobs()?;
    std::fs::create_dir_all(dir.join("runs")).with_context(|| format!("creating {}", dir.display()))?;
    let mut records: Vec<Option<RunRecord>> = jobs.iter().map(|j| load_existing(&record_path(dir, &j.hash))).collect();

    let mut pending: Vec<usize> = (0..jobs.len()).filter(|&i| records[i].is_none()).collect();
    if let Some(limit) = opts.max_new_runs {
        pending.truncate(limit);
    }
    let workers = opts
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let fresh: Vec<(usize, RunRecord)> = pool.install(|| {
        pending
            .par_iter()
            .map(|&i| run_job(&jobs[i], dir).map(|r| (i, r)))
            .collect::<Result<Vec<_>>>()
    })?;
    let newly_run = fresh.len();
    for (i, r) in fresh {
        records[i] = Some(r);
    }

    let tidy_csv = dir.join("tidy.csv");
    let summary_csv = dir.join("summary.csv");
    let summary = if records.iter().all(Option::is_some) {
        let done: Vec<RunRecord> = records.iter().flatten().cloned().collect();
        let summary = summarize(spec, &jobs, &done);
        write_tidy(&tidy_csv, spec, &jobs, &done)?;
        write_summary(&summary_csv, spec, &summary)?;
        Some(summary)
    } else {
        None
    };
    Ok(SweepResult {
        jobs,
        records,
        newly_run,
        summary,
        tidy_csv,
        summary_csv,
    })
}
