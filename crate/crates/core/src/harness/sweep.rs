//! Sweep files: a base config plus a list of override rows.
//!
//! ```toml
//! name = "table2_doorkey"
//! base = "../configs/paper_doorkey.toml"   # relative to the sweep file
//! sobol = 8                                # optional (mutation, crossover) axis
//! columns = ["scheduler.iter_steps", "scheduler.evolution.generations"]
//! rows = [
//!     [25000, 3],
//!     [50000, 2],
//! ]
//!
//! [set]                                    # optional, applied to the base
//! seeds = [0, 1]
//!
//! [axes]                                   # optional cross product
//! "scheduler.evolution.para_env" = [1, 2]
//! ```
//!
//! Rows are kept as written, duplicates included. Every row is combined
//! with every point of the axes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{apply_override, set_path, value_text};
use super::run::run_all;
use super::RunConfig;
use crate::error::{Error, Result};
use crate::evolution::sobol_rate_grid;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    name: Option<String>,
    base: Option<PathBuf>,
    sobol: Option<usize>,
    #[serde(default)]
    columns: Vec<String>,
    #[serde(default)]
    rows: Vec<Vec<toml::Value>>,
    #[serde(default)]
    set: toml::Table,
    #[serde(default)]
    axes: toml::Table,
}

pub type Overrides = Vec<(String, toml::Value)>;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    /// Base config as a table, before any row is applied.
    pub base: toml::Table,
    pub rows: Vec<Overrides>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Overrides) {
    for (k, v) in table {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&path, t, out),
            _ => out.push((path, v.clone())),
        }
    }
}

impl SweepSpec {
    /// `dir` anchors a relative `base` path.
    pub fn from_toml_str(text: &str, dir: &Path) -> Result<Self> {
        let file: SweepFile =
            toml::from_str(text).map_err(|e| Error::config(e.to_string().trim().to_string()))?;
        let mut base = match &file.base {
            Some(p) => {
                let path = dir.join(p);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        let mut set = Overrides::new();
        flatten("", &file.set, &mut set);
        for (path, v) in set {
            set_path(&mut base, &path, v)?;
        }

        let mut rows: Vec<Overrides> = Vec::new();
        for (i, row) in file.rows.iter().enumerate() {
            if row.len() != file.columns.len() {
                return Err(Error::config(format!(
                    "sweep row {i} has {} values for {} columns",
                    row.len(),
                    file.columns.len()
                )));
            }
            rows.push(
                file.columns
                    .iter()
                    .cloned()
                    .zip(row.iter().cloned())
                    .collect(),
            );
        }
        if rows.is_empty() {
            rows.push(Overrides::new());
        }

        let mut axes: Vec<Vec<Overrides>> = Vec::new();
        for (path, values) in &file.axes {
            let values = values
                .as_array()
                .ok_or_else(|| Error::config(format!("axis {path} must be an array")))?;
            axes.push(
                values
                    .iter()
                    .map(|v| vec![(path.clone(), v.clone())])
                    .collect(),
            );
        }
        if let Some(n) = file.sobol {
            if n == 0 {
                return Err(Error::config("sobol must be at least 1"));
            }
            axes.push(
                sobol_rate_grid(n)
                    .into_iter()
                    .map(|(m, c)| {
                        vec![
                            (
                                "scheduler.evolution.mutation_rate".to_string(),
                                toml::Value::Float(m),
                            ),
                            (
                                "scheduler.evolution.crossover_rate".to_string(),
                                toml::Value::Float(c),
                            ),
                        ]
                    })
                    .collect(),
            );
        }
        for axis in axes {
            rows = rows
                .iter()
                .flat_map(|row| {
                    axis.iter().map(move |point| {
                        let mut r = row.clone();
                        r.extend(point.iter().cloned());
                        r
                    })
                })
                .collect();
        }
        Ok(SweepSpec {
            name: file.name.unwrap_or_else(|| "sweep".to_string()),
            base,
            rows,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, dir).map_err(|e| e.context(path.display()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Config of row `i`.
    pub fn resolve(&self, i: usize) -> Result<RunConfig> {
        let mut table = self.base.clone();
        for (path, v) in &self.rows[i] {
            set_path(&mut table, path, v.clone())?;
        }
        RunConfig::from_table(table).map_err(|e| e.context(format_args!("row {i}")))
    }

    /// Row `i` as `a=1;b=2`.
    pub fn describe(&self, i: usize) -> String {
        self.rows[i]
            .iter()
            .map(|(p, v)| format!("{p}={}", value_text(v)))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Apply command-line overrides to the base of every row.
    pub fn override_base(&mut self, overrides: &[String]) -> Result<()> {
        overrides
            .iter()
            .try_for_each(|o| apply_override(&mut self.base, o))
    }
}

/// One line of the sweep's `index.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexRow {
    pub row: usize,
    pub dir: String,
    pub overrides: String,
    pub seeds: usize,
    pub failed: usize,
    /// Mean over successful seeds of the final roster-mean return.
    pub final_mean: Option<f64>,
    pub error: Option<String>,
}

pub fn row_dir(root: &Path, row: usize) -> PathBuf {
    root.join(format!("row-{row:03}"))
}

/// Run every row and seed; a failing row is tallied and the rest go on.
/// `index.csv` is written once, at the end.
pub fn run_sweep(spec: &SweepSpec, root: &Path) -> Result<Vec<IndexRow>> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut index = Vec::with_capacity(spec.len());
    for i in 0..spec.len() {
        let dir = row_dir(root, i);
        let mut line = IndexRow {
            row: i,
            dir: dir.display().to_string(),
            overrides: spec.describe(i),
            seeds: 0,
            failed: 0,
            final_mean: None,
            error: None,
        };
        match spec.resolve(i) {
            Err(e) => line.error = Some(e.to_string()),
            Ok(cfg) => {
                let results = run_all(&cfg, &dir);
                line.seeds = results.len();
                let mut finals = Vec::new();
                for (seed, r) in results {
                    match r {
                        Ok(log) => finals.extend(log.final_mean()),
                        Err(e) => {
                            line.failed += 1;
                            line.error
                                .get_or_insert_with(|| format!("seed {seed}: {e}"));
                        }
                    }
                }
                if !finals.is_empty() {
                    line.final_mean = Some(finals.iter().sum::<f64>() / finals.len() as f64);
                }
            }
        }
        index.push(line);
    }
    let path = root.join("index.csv");
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    for line in &index {
        w.serialize(line).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(index)
}
