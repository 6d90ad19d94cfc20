use std::path::Path;

use super::run::{
    CANDIDATES_JSONL, CHECKPOINT_FILE, CONFIG_FILE, EVALS_CSV, EVALS_JSONL, HEADER_FILE,
};
use super::RunConfig;
use crate::error::{Error, Result};
use crate::ppo::Agent;
use crate::runlog::{read_jsonl, EvalRecord};

/// Check that a run directory is complete and consistent: every artifact
/// present, records ordered by frames, every record covering the roster.
pub fn validate_run_dir(dir: &Path) -> Result<()> {
    let fail = |msg: String| Err(Error::Format(format!("{}: {msg}", dir.display())));
    for f in [
        CONFIG_FILE,
        HEADER_FILE,
        EVALS_JSONL,
        EVALS_CSV,
        CANDIDATES_JSONL,
        CHECKPOINT_FILE,
    ] {
        if !dir.join(f).is_file() {
            return fail(format!("missing {f}"));
        }
    }
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE), &[])?;
    let records: Vec<EvalRecord> = read_jsonl(&dir.join(EVALS_JSONL))?;
    if records.is_empty() {
        return fail("no evaluation records".into());
    }
    for (i, r) in records.iter().enumerate() {
        if i > 0 && r.frames < records[i - 1].frames {
            return fail(format!("record {i} goes back in frames"));
        }
        if r.returns
            .iter()
            .map(|x| x.env)
            .ne(cfg.scheduler.roster.iter().copied())
        {
            return fail(format!("record {i} does not cover the roster"));
        }
    }
    Agent::load(&dir.join(CHECKPOINT_FILE))?;
    Ok(())
}
