//! Monte Carlo experiments, CSV output and the command-line interface.
//!
//! An experiment sweeps the cartesian product of its grids. In every cell
//! each trial draws one H0 and one H1 frame from per-trial seed streams, so
//! results do not depend on scheduling, and the same trial index sees the
//! same channel and noise draws in every cell.

mod cli;
mod config;
mod experiment;
mod output;

pub use cli::cli_main;
pub use config::{ExperimentConfig, ExperimentKind, DEFAULT_SEED};
pub use experiment::{
    cells, experiment_label, histogram, resolve_workers, run_experiment, with_workers, Cell,
    CellDiagnostics, ExperimentOutput, HistogramBin, SummaryRow, TrialRecord, INTERFERER_OVERLAP,
    UNDECIDABLE_WARN_FRACTION,
};
pub use output::{
    emit_histogram_csv, emit_summary_csv, emit_trials_csv, write_histogram, write_summary,
    write_trials, HISTOGRAM_HEADER, SUMMARY_HEADER, TRIAL_HEADER,
};
