//! Evaluation records produced by the schedulers, and their JSONL / CSV
//! forms.
//!
//! `evals.jsonl` holds one [`EvalRecord`] per line, ordered by committed
//! frames. `evals.csv` has the same rows with one `return:<env>` column per
//! roster member. Candidate evaluations of the evolutionary schedulers go
//! to `candidates.jsonl`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::EnvSpec;
use crate::schedulers::SchedulerKind;

/// Bumped whenever a record field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvReturn {
    pub env: EnvSpec,
    pub mean_return: f64,
}

/// One evaluation of the committed agent over the whole roster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub schema: u32,
    pub scheduler: SchedulerKind,
    pub seed: u64,
    /// Frames the committed agent has been trained on.
    pub frames: u64,
    /// Frames spent training throw-away candidates so far.
    pub candidate_frames: u64,
    pub epoch: Option<usize>,
    /// What the agent trained on since the previous record, in curriculum
    /// text form.
    pub curriculum: String,
    pub returns: Vec<EnvReturn>,
    pub roster_mean: f64,
}

/// Score of one candidate curriculum inside an epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub epoch: usize,
    pub generation: usize,
    pub individual: usize,
    pub curriculum: String,
    /// Roster-mean return after each curriculum step.
    pub step_rewards: Vec<f64>,
    pub score: f64,
    /// Rewards-matrix entry after recording this candidate.
    pub matrix_entry: f64,
    pub frames: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub records: Vec<EvalRecord>,
    pub candidates: Vec<CandidateRecord>,
    pub committed_frames: u64,
    pub candidate_frames: u64,
}

impl RunLog {
    pub fn final_mean(&self) -> Option<f64> {
        self.records.last().map(|r| r.roster_mean)
    }

    pub fn total_frames(&self) -> u64 {
        self.committed_frames + self.candidate_frames
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_csv(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let envs: Vec<EnvSpec> = records
        .first()
        .map(|r| r.returns.iter().map(|x| x.env).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = [
        "scheduler",
        "seed",
        "frames",
        "candidate_frames",
        "epoch",
        "curriculum",
        "roster_mean",
    ]
    .map(String::from)
    .to_vec();
    header.extend(envs.iter().map(|e| format!("return:{e}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        if r.returns.iter().map(|x| x.env).ne(envs.iter().copied()) {
            return Err(Error::Format(format!(
                "{}: records cover different rosters",
                path.display()
            )));
        }
        let mut row = vec![
            r.scheduler.to_string(),
            r.seed.to_string(),
            r.frames.to_string(),
            r.candidate_frames.to_string(),
            r.epoch.map(|e| e.to_string()).unwrap_or_default(),
            r.curriculum.clone(),
            r.roster_mean.to_string(),
        ];
        row.extend(r.returns.iter().map(|x| x.mean_return.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl RunLog {
    /// `evals.jsonl`, `evals.csv` and `candidates.jsonl` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_jsonl(&dir.join("evals.jsonl"), &self.records)?;
        write_csv(&dir.join("evals.csv"), &self.records)?;
        write_jsonl(&dir.join("candidates.jsonl"), &self.candidates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(frames: u64, mean: f64) -> EvalRecord {
        EvalRecord {
            schema: SCHEMA_VERSION,
            scheduler: SchedulerKind::AllParallel,
            seed: 3,
            frames,
            candidate_frames: 0,
            epoch: None,
            curriculum: "[(DoorKey-6|DoorKey-8)]".into(),
            returns: vec![
                EnvReturn {
                    env: EnvSpec::door_key(6),
                    mean_return: mean,
                },
                EnvReturn {
                    env: EnvSpec::door_key(8),
                    mean_return: mean,
                },
            ],
            roster_mean: mean,
        }
    }

    #[test]
    fn jsonl_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let log = RunLog {
            records: vec![record(0, 0.0), record(2048, 0.25)],
            ..Default::default()
        };
        log.write(dir.path()).unwrap();
        let back: Vec<EvalRecord> = read_jsonl(&dir.path().join("evals.jsonl")).unwrap();
        assert_eq!(back, log.records);
        let text = std::fs::read_to_string(dir.path().join("evals.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scheduler,seed,frames,candidate_frames,epoch,curriculum,roster_mean,return:DoorKey-6,return:DoorKey-8"
        );
        assert_eq!(
            lines.nth(1).unwrap(),
            "AllParallel,3,2048,0,,[(DoorKey-6|DoorKey-8)],0.25,0.25,0.25"
        );
    }

    #[test]
    fn mixed_rosters_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut odd = record(1, 0.0);
        odd.returns.pop();
        assert!(write_csv(&dir.path().join("x.csv"), &[record(0, 0.0), odd]).is_err());
    }
}
