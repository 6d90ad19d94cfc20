use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{get_path, value_text};
use super::run::{CONFIG_FILE, EVALS_JSONL};
use crate::error::{Error, Result};
use crate::gridworld::EnvSpec;
use crate::runlog::{read_jsonl, EvalRecord, SCHEMA_VERSION};

/// One line of the long-format aggregate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    /// Lower edge of the frame bucket.
    pub frames: u64,
    pub mean: f64,
    /// Population standard deviation across runs.
    pub std: f64,
    pub n: usize,
}

/// Directories under `paths` (inclusive) that hold an `evals.jsonl`,
/// sorted.
pub fn find_run_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        if dir.join(EVALS_JSONL).is_file() {
            out.push(dir.to_path_buf());
        }
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            if p.is_dir() {
                walk(&p, out)?;
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in paths {
        walk(p, &mut out)?;
    }
    out.sort();
    out.dedup();
    Ok(out)
}

struct Run {
    dir: PathBuf,
    config: toml::Table,
    records: Vec<EvalRecord>,
}

fn load_run(dir: &Path) -> Result<Run> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config = text
        .parse::<toml::Table>()
        .map_err(|e| Error::Format(format!("{}: {e}", cfg_path.display())))?;
    let records = read_jsonl(&dir.join(EVALS_JSONL))?;
    Ok(Run {
        dir: dir.to_path_buf(),
        config,
        records,
    })
}

fn roster_of(r: &EvalRecord) -> Vec<EnvSpec> {
    r.returns.iter().map(|x| x.env).collect()
}

fn mean_std(values: &mut [f64]) -> (f64, f64) {
    // sorted first so the result does not depend on run order
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population std of the roster-mean return per (group, frame
/// bucket). Within a bucket each run contributes the mean of its records.
/// `group_by` is a dotted config path; `bucket` defaults to the first
/// run's `scheduler.iter_steps`.
pub fn aggregate(
    run_dirs: &[PathBuf],
    group_by: Option<&str>,
    bucket: Option<u64>,
) -> Result<Vec<AggregateRow>> {
    if run_dirs.is_empty() {
        return Err(Error::config("no runs to aggregate"));
    }
    let runs = run_dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>>>()?;

    let reference = runs
        .iter()
        .flat_map(|r| r.records.first())
        .map(roster_of)
        .next();
    let offending: Vec<String> = runs
        .iter()
        .filter(|r| {
            r.records.is_empty()
                || r.records
                    .iter()
                    .any(|x| x.schema != SCHEMA_VERSION || Some(roster_of(x)) != reference)
        })
        .map(|r| r.dir.display().to_string())
        .collect();
    if !offending.is_empty() {
        return Err(Error::Format(format!(
            "incompatible or empty run logs: {}",
            offending.join(", ")
        )));
    }

    let width = match bucket {
        Some(0) => return Err(Error::config("bucket width must be positive")),
        Some(w) => w,
        None => get_path(&runs[0].config, "scheduler.iter_steps")
            .and_then(toml::Value::as_integer)
            .map(|w| w as u64)
            .unwrap_or(25_000),
    };

    let mut cells: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for run in &runs {
        let group = match group_by {
            None => "all".to_string(),
            Some(path) => get_path(&run.config, path).map(value_text).ok_or_else(|| {
                Error::config(format!("{}: config has no {path}", run.dir.display()))
            })?,
        };
        let mut per_bucket: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in &run.records {
            per_bucket
                .entry(r.frames / width * width)
                .or_default()
                .push(r.roster_mean);
        }
        for (b, mut v) in per_bucket {
            let (m, _) = mean_std(&mut v);
            cells.entry((group.clone(), b)).or_default().push(m);
        }
    }
    Ok(cells
        .into_iter()
        .map(|((group, frames), mut v)| {
            let (mean, std) = mean_std(&mut v);
            AggregateRow {
                group,
                frames,
                mean,
                std,
                n: v.len(),
            }
        })
        .collect())
}

pub fn write_aggregate_csv<W: std::io::Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}
