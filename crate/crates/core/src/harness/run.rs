use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::error::{Error, Result};
use crate::gridworld::EnvSpec;
use crate::runlog::{EvalRecord, RunLog, SCHEMA_VERSION};
use crate::schedulers::{ppo_learner, run_observed, SchedulerKind, Sink};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CONFIG_FILE: &str = "config.toml";
pub const HEADER_FILE: &str = "header.json";
pub const EVALS_JSONL: &str = "evals.jsonl";
pub const EVALS_CSV: &str = "evals.csv";
pub const CANDIDATES_JSONL: &str = "candidates.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const ERROR_FILE: &str = "error.txt";

/// First thing written into a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema: u32,
    pub version: String,
    pub seed: u64,
    pub scheduler: SchedulerKind,
    pub roster: Vec<EnvSpec>,
    pub config: RunConfig,
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn jsonl_sink(path: &Path) -> Result<Sink> {
    let path = path.to_path_buf();
    let mut w = File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(&path, e))?;
    Ok(Box::new(move |rec: &EvalRecord| {
        let line = serde_json::to_string(rec).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}")
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))
    }))
}

/// One seed of `cfg` into `dir`. Evaluation records are streamed as they
/// come, so a failing run keeps what it logged plus an `error.txt`.
pub fn run_seed(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<RunLog> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let single = RunConfig {
        seeds: vec![seed],
        ..cfg.clone()
    };
    write_file(&dir.join(CONFIG_FILE), &single.to_toml_string()?)?;
    let header = RunHeader {
        schema: SCHEMA_VERSION,
        version: VERSION.to_string(),
        seed,
        scheduler: cfg.scheduler.kind,
        roster: cfg.scheduler.roster.clone(),
        config: single,
    };
    let header_text =
        serde_json::to_string_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
    write_file(&dir.join(HEADER_FILE), &header_text)?;

    let outcome = ppo_learner(&cfg.ppo, &cfg.score, &cfg.schedule, seed).and_then(|learner| {
        let sink = jsonl_sink(&dir.join(EVALS_JSONL))?;
        run_observed(&cfg.scheduler, &cfg.score, learner, seed, Some(sink))
    });
    let finished = match outcome {
        Ok(f) => f,
        Err(e) => {
            write_file(&dir.join(ERROR_FILE), &format!("{e}\n"))?;
            return Err(e);
        }
    };
    finished.log.write(dir)?;
    finished.learner.agent.save(&dir.join(CHECKPOINT_FILE))?;
    Ok(finished.log)
}

/// All seeds of `cfg` under `root`, in parallel. Results keep seed order.
pub fn run_all(cfg: &RunConfig, root: &Path) -> Vec<(u64, Result<RunLog>)> {
    cfg.seeds
        .par_iter()
        .map(|&seed| (seed, run_seed(cfg, seed, &seed_dir(root, seed))))
        .collect()
}
