use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gnp_core::{Coefficient, GnpConfig, Schedule, Scheme};
use gnp_harness::config::{hex_digest, read_kv_file, split_override};
use gnp_harness::probe::{grid, probe_checkpoint, run_double_well, write_double_well_csv};
use gnp_harness::sweep::SweepOptions;
use gnp_harness::{
    checkpoint, output_root, run_sweep, run_verify, train, write_run, RunConfig, SweepSpec, EXIT_DIVERGED,
};

#[derive(Parser)]
#[command(name = "gnp", version, about = "Gradient-norm-penalized training toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its record, metrics CSV and checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory (default: $GNP_OUT_DIR/train-<hash>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of configurations over several seeds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Axis as key=v1,v2,... (repeatable).
        #[arg(long = "axis", value_name = "KEY=VALUES")]
        axes: Vec<String>,
        /// Comma-separated seed list.
        #[arg(long)]
        seeds: Option<String>,
        /// Maximum number of cell-seed runs.
        #[arg(long)]
        cap: Option<usize>,
        /// Parallel worker threads.
        #[arg(long)]
        workers: Option<usize>,
        /// Stop after this many new runs; rerun to resume.
        #[arg(long)]
        max_new_runs: Option<usize>,
        /// Output directory (default: $GNP_OUT_DIR/sweep-<hash>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the numerical self-checks and print a JSON report.
    Verify {
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure flatness around a checkpoint, or run the double-well experiment.
    Probe(ProbeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key (repeatable, applied after the named flags).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    grad_floor: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
}

impl RunArgs {
    /// File pairs first, then flags, so flags win.
    fn pairs(&self) -> Result<Vec<(String, String)>> {
        let mut pairs = match &self.config {
            Some(path) => read_kv_file(path)?,
            None => Vec::new(),
        };
        let flags = [
            ("scheme", &self.scheme),
            ("alpha", &self.alpha),
            ("lambda", &self.lambda),
            ("r", &self.r),
            ("p", &self.p),
            ("lr", &self.lr),
            ("momentum", &self.momentum),
            ("weight_decay", &self.weight_decay),
            ("schedule", &self.schedule),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("seed", &self.seed),
            ("grad_floor", &self.grad_floor),
            ("dataset", &self.dataset),
            ("size", &self.size),
            ("noise", &self.noise),
            ("hidden", &self.hidden),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        for s in &self.set {
            pairs.push(split_override(s)?);
        }
        Ok(pairs)
    }

    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (k, v) in self.pairs()? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct ProbeArgs {
    /// Checkpoint written by `gnp train`.
    #[arg(long, required_unless_present = "double_well")]
    checkpoint: Option<PathBuf>,
    /// Dataset config to probe on (default: the config stored in the checkpoint).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    ascent_steps: Option<usize>,
    #[arg(long)]
    power_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run the double-well basin experiment instead and write a CSV.
    #[arg(long, conflicts_with = "checkpoint")]
    double_well: bool,
    #[arg(long, default_value_t = 0.8, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.3)]
    r: f64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 3000)]
    steps: u64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    grid_lo: f64,
    #[arg(long, default_value_t = 4.0)]
    grid_hi: f64,
    #[arg(long, default_value_t = 51)]
    grid_points: usize,
    /// Output file (default: stdout for JSON, $GNP_OUT_DIR/double_well.csv for CSV).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn short(hash: &str) -> &str {
    &hash[..12]
}

fn cmd_train(run: &RunArgs, out: Option<PathBuf>) -> Result<ExitCode> {
    let cfg = run.run_config()?;
    cfg.validate()?;
    let dir = out.unwrap_or_else(|| output_root().join(format!("train-{}", short(&cfg.hash()))));
    let result = train(&cfg)?;
    let files = write_run(&result, &cfg, &dir)?;
    let last = result.record.final_row();
    eprintln!(
        "{}: epochs={} final test error={} -> {}",
        if result.record.outcome.is_diverged() {
            "diverged"
        } else {
            "converged"
        },
        last.map_or(0, |r| r.epoch),
        last.map_or(f64::NAN, |r| r.test_error_rate),
        files.dir.display()
    );
    println!("{}", serde_json::to_string(&result.record.outcome)?);
    Ok(if result.record.outcome.is_diverged() {
        ExitCode::from(EXIT_DIVERGED as u8)
    } else {
        ExitCode::SUCCESS
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    run: &RunArgs,
    axes: &[String],
    seeds: Option<&str>,
    cap: Option<usize>,
    workers: Option<usize>,
    max_new_runs: Option<usize>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut pairs = run.pairs()?;
    for a in axes {
        let (k, v) = split_override(a)?;
        pairs.push((format!("axis.{k}"), v));
    }
    if let Some(s) = seeds {
        pairs.push(("seeds".into(), s.to_string()));
    }
    if let Some(c) = cap {
        pairs.push(("cap".into(), c.to_string()));
    }
    let spec = SweepSpec::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    let dir = match out {
        Some(d) => d,
        None => {
            let id: String = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
            output_root().join(format!("sweep-{}", short(&hex_digest(id.as_bytes()))))
        }
    };
    let result = run_sweep(&spec, &dir, &SweepOptions { workers, max_new_runs })?;
    let done = result.records.iter().filter(|r| r.is_some()).count();
    eprintln!(
        "{done}/{} runs complete ({} new) in {}",
        result.jobs.len(),
        result.newly_run,
        dir.display()
    );
    match &result.summary {
        Some(summary) => {
            for s in summary {
                println!(
                    "{:<24} mean={:.4} std={:.4} diverged={}/{}",
                    s.cell.join(" "),
                    s.mean_test_error,
                    s.std_test_error,
                    s.n_diverged,
                    s.n_seeds
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        None => {
            eprintln!("sweep incomplete; rerun the same command to resume");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_verify(out: Option<&Path>) -> Result<ExitCode> {
    let report = run_verify()?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(path) = out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{text}");
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_probe(args: &ProbeArgs) -> Result<ExitCode> {
    if args.double_well {
        let gnp = GnpConfig {
            scheme: Scheme::Gnp,
            coefficient: Coefficient::Alpha(args.alpha),
            r: args.r,
            lr: args.lr,
            schedule: Schedule::Constant,
            total_steps: args.steps.max(1),
            ..GnpConfig::default()
        };
        gnp.validate()?;
        let outcome = run_double_well(&gnp, &grid(args.grid_lo, args.grid_hi, args.grid_points), args.steps);
        let path = args
            .out
            .clone()
            .unwrap_or_else(|| output_root().join("double_well.csv"));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        write_double_well_csv(&path, &outcome)?;
        println!(
            "{}",
            serde_json::json!({ "standard": outcome.standard, "gnp": outcome.gnp, "csv": path })
        );
        return Ok(ExitCode::SUCCESS);
    }
    let Some(path) = &args.checkpoint else {
        bail!("--checkpoint is required");
    };
    let ckpt = checkpoint::load(path)?;
    let cfg = match &args.config {
        Some(p) => {
            let mut cfg = RunConfig::default();
            for (k, v) in read_kv_file(p)? {
                cfg.set(&k, &v)?;
            }
            cfg
        }
        None => ckpt
            .run_config()?
            .context("checkpoint carries no config; pass --config to name the dataset")?,
    };
    let mut probe_cfg = cfg.probe_config();
    if let Some(v) = args.rho {
        probe_cfg.rho = v;
    }
    if let Some(v) = args.samples {
        probe_cfg.n_samples = v;
    }
    if let Some(v) = args.ascent_steps {
        probe_cfg.ascent_steps = v;
    }
    if let Some(v) = args.power_iters {
        probe_cfg.power_iters = v;
    }
    if let Some(v) = args.seed {
        probe_cfg.seed = v;
    }
    let report = probe_checkpoint(&ckpt, &cfg, &probe_cfg)?;
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(p) => std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { run, out } => cmd_train(run, out.clone()),
        Command::Sweep {
            run,
            axes,
            seeds,
            cap,
            workers,
            max_new_runs,
            out,
        } => cmd_sweep(run, axes, seeds.as_deref(), *cap, *workers, *max_new_runs, out.clone()),
        Command::Verify { out } => cmd_verify(out.as_deref()),
        Command::Probe(args) => cmd_probe(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
