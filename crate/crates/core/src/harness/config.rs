use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curriculum::ScoreConfig;
use crate::error::{Error, Result};
use crate::gridworld::StepBudgetSchedule;
use crate::ppo::PpoConfig;
use crate::schedulers::SchedulerConfig;

/// Environment variable that relative output directories are resolved
/// against.
pub const OUTPUT_ROOT_ENV: &str = "RHEA_CL_OUTPUT_ROOT";

/// Everything one experiment needs. Missing fields take their defaults,
/// unknown fields are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub scheduler: SchedulerConfig,
    pub ppo: PpoConfig,
    pub score: ScoreConfig,
    pub schedule: StepBudgetSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: (0..5).collect(),
            output_dir: PathBuf::from("runs"),
            scheduler: SchedulerConfig::default(),
            ppo: PpoConfig::default(),
            score: ScoreConfig::default(),
            schedule: StepBudgetSchedule::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds is empty"));
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(Error::config(format!("seed {s} is listed twice")));
            }
        }
        self.scheduler.validate()?;
        self.ppo.validate()?;
        self.score.validate()?;
        self.schedule.validate()
    }

    /// Parse, apply `a.b.c=value` overrides, fill defaults and validate.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides).map_err(|e| e.context(path.display()))
    }

    /// Fully materialized TOML, defaults included.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// `output_dir`, under the output-root variable when it is relative.
    pub fn output_root(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

/// TOML literal if `raw` parses as one, a bare string otherwise.
pub fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set a dotted path inside `table`, creating intermediate tables.
pub fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!("bad override path {path:?}")));
    }
    let (last, parents) = keys.split_last().expect("split yields one key");
    let mut cur = table;
    for k in parents {
        let next = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("{path}: {k} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Look up a dotted path.
pub fn get_path<'a>(table: &'a toml::Table, path: &str) -> Option<&'a toml::Value> {
    let mut keys = path.split('.');
    let mut cur = table.get(keys.next()?)?;
    for k in keys {
        cur = cur.as_table()?.get(k)?;
    }
    Some(cur)
}

/// Apply `path=value` (a leading `--` is accepted).
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let spec = spec.trim().trim_start_matches("--");
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {spec:?} is not of the form a.b=value")))?;
    set_path(table, path.trim(), parse_value(raw.trim()))
}

/// Display form of a TOML value without string quotes.
pub fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedulers::SchedulerKind;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(
            RunConfig::from_toml_str("", &[]).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::from_toml_str(
            "seeds = [1]\n[scheduler]\niter_steps = 50000\n",
            &[
                "--scheduler.kind=SPCL".into(),
                "score.gamma=1".into(),
                r#"scheduler.roster=["DoorKey-6", "DoorKey-10"]"#.into(),
                "ppo.logit_head=linear".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.scheduler.kind, SchedulerKind::SPCL);
        assert_eq!(cfg.scheduler.iter_steps, 50_000);
        assert_eq!(cfg.score.gamma, 1.0);
        assert_eq!(cfg.scheduler.roster[1].size, 10);
        assert_eq!(cfg.ppo.logit_head, crate::ppo::LogitHead::Linear);
    }

    #[test]
    fn field_errors_name_the_field() {
        let err = RunConfig::from_toml_str("[scheduler]\niter_step = 5\n", &[]).unwrap_err();
        assert!(err.to_string().contains("iter_step"), "{err}");
        let err = RunConfig::from_toml_str("", &["scheduler.kind=TSCL".into()]).unwrap_err();
        assert!(err.to_string().contains("TSCL"), "{err}");
        assert!(RunConfig::from_toml_str("seeds = []", &[]).is_err());
        assert!(RunConfig::from_toml_str("seeds = [1, 1]", &[]).is_err());
        assert!(RunConfig::from_toml_str("", &["noequals".into()]).is_err());
        assert!(RunConfig::from_toml_str("", &["seeds.x=1".into()]).is_err());
    }

    #[test]
    fn round_trip_materializes_defaults() {
        let cfg = RunConfig::from_toml_str("[score]\ngamma = 0.5\n", &[]).unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert!(text.contains("eval_episodes_per_env"));
        assert_eq!(RunConfig::from_toml_str(&text, &[]).unwrap(), cfg);
    }
}
