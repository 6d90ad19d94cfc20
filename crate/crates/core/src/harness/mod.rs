//! Experiment plumbing: configuration files, seeded runs, sweeps,
//! aggregation into plot-ready tables and run-directory validation.
//!
//! A run directory holds `config.toml` (the resolved config),
//! `header.json`, `evals.jsonl`, `evals.csv`, `candidates.jsonl` and
//! `checkpoint.bin`.

mod aggregate;
mod config;
mod run;
mod sweep;
mod validate;

pub use aggregate::{aggregate, find_run_dirs, write_aggregate_csv, AggregateRow};
pub use config::{
    apply_override, get_path, parse_value, resolve_output, set_path, value_text, RunConfig,
    OUTPUT_ROOT_ENV,
};
pub use run::{
    run_all, run_seed, seed_dir, RunHeader, CANDIDATES_JSONL, CHECKPOINT_FILE, CONFIG_FILE,
    ERROR_FILE, EVALS_CSV, EVALS_JSONL, HEADER_FILE, VERSION,
};
pub use sweep::{row_dir, run_sweep, IndexRow, Overrides, SweepSpec};
pub use validate::validate_run_dir;
