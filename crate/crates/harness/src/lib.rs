//! Training, sweeps, verification and flatness probing on top of `gnp_core`.

pub mod checkpoint;
pub mod config;
pub mod probe;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{output_root, RunConfig, OUT_DIR_ENV};
pub use run::{train, write_run, EpochRow, Outcome, RunRecord, TrainOutput};
pub use sweep::{run_sweep, SweepOptions, SweepResult, SweepSpec};
pub use verify::{run_verify, VerifyReport};

/// Process exit status for a run that ended in divergence.
pub const EXIT_DIVERGED: i32 = 3;
