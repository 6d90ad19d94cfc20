//! Curriculum genome, the rewards matrix and the damped curriculum score.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{EnvSpec, StepBudgetSchedule};
use crate::ppo::{evaluate, LogitHead, PolicyParams};
use crate::rng::Rng;

/// One slot of a curriculum: the set of levels trained side by side.
/// Members are kept sorted and distinct.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CurriculumStep {
    envs: Vec<EnvSpec>,
}

impl CurriculumStep {
    pub fn new(mut envs: Vec<EnvSpec>) -> Result<Self> {
        envs.sort();
        envs.dedup();
        if envs.is_empty() {
            return Err(Error::contract(
                "curriculum step needs at least one environment",
            ));
        }
        Ok(CurriculumStep { envs })
    }

    pub fn single(spec: EnvSpec) -> Self {
        CurriculumStep { envs: vec![spec] }
    }

    /// Fresh random step: size uniform in `[1, para_env]` (capped by the
    /// roster), members drawn without replacement.
    pub fn random(roster: &[EnvSpec], para_env: usize, rng: &mut Rng) -> Self {
        assert!(
            !roster.is_empty() && para_env >= 1,
            "empty roster or para_env 0"
        );
        let k = rng.gen_range(1..=para_env.min(roster.len()));
        let envs = sample(rng, roster.len(), k)
            .into_iter()
            .map(|i| roster[i])
            .collect();
        CurriculumStep::new(envs).expect("k >= 1")
    }

    pub fn envs(&self) -> &[EnvSpec] {
        &self.envs
    }

    pub fn validate(&self, roster: &[EnvSpec], para_env: usize) -> Result<()> {
        if self.envs.len() > para_env {
            return Err(Error::contract(format!(
                "step {self} has {} environments, para_env is {para_env}",
                self.envs.len()
            )));
        }
        if let Some(e) = self.envs.iter().find(|e| !roster.contains(e)) {
            return Err(Error::contract(format!("{e} is not in the roster")));
        }
        Ok(())
    }
}

impl fmt::Display for CurriculumStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, e) in self.envs.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{e}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for CurriculumStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| Error::config(format!("curriculum step {s:?} must look like (A|B)")))?;
        let envs = inner
            .split('|')
            .map(|e| e.trim().parse())
            .collect::<Result<Vec<_>>>()?;
        CurriculumStep::new(envs).map_err(|_| Error::config(format!("empty curriculum step {s:?}")))
    }
}

/// An ordered list of curriculum steps. Text form:
/// `[(DoorKey-6|DoorKey-8), (DoorKey-8)]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Curriculum {
    steps: Vec<CurriculumStep>,
}

impl Curriculum {
    pub fn new(steps: Vec<CurriculumStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::contract("curriculum needs at least one step"));
        }
        Ok(Curriculum { steps })
    }

    pub fn random(length: usize, roster: &[EnvSpec], para_env: usize, rng: &mut Rng) -> Self {
        assert!(length >= 1, "curriculum length 0");
        Curriculum {
            steps: (0..length)
                .map(|_| CurriculumStep::random(roster, para_env, rng))
                .collect(),
        }
    }

    pub fn steps(&self) -> &[CurriculumStep] {
        &self.steps
    }

    pub fn steps_mut(&mut self) -> &mut [CurriculumStep] {
        &mut self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first(&self) -> &CurriculumStep {
        &self.steps[0]
    }

    pub fn validate(&self, length: usize, roster: &[EnvSpec], para_env: usize) -> Result<()> {
        if self.steps.len() != length {
            return Err(Error::contract(format!(
                "curriculum {self} has {} steps, expected {length}",
                self.steps.len()
            )));
        }
        self.steps
            .iter()
            .try_for_each(|s| s.validate(roster, para_env))
    }
}

impl fmt::Display for Curriculum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for Curriculum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::config(format!("curriculum {s:?} must be bracketed")))?;
        // steps contain no commas, so a split on ',' is enough
        let steps = inner
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Curriculum::new(steps)
    }
}

impl TryFrom<String> for Curriculum {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Curriculum> for String {
    fn from(c: Curriculum) -> String {
        c.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Dampening factor for later curriculum steps, in (0, 1].
    pub gamma: f64,
    pub eval_episodes_per_env: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            gamma: 0.9,
            eval_episodes_per_env: 10,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!(
                "score.gamma = {} must be in (0, 1]",
                self.gamma
            )));
        }
        if self.eval_episodes_per_env == 0 {
            return Err(Error::config(
                "score.eval_episodes_per_env must be at least 1",
            ));
        }
        Ok(())
    }
}

/// `sum_j rewards[j] * gamma^j`.
pub fn curriculum_score(step_rewards: &[f64], gamma: f64) -> Result<f64> {
    if step_rewards.is_empty() {
        return Err(Error::contract("curriculum score of an empty reward list"));
    }
    let mut weight = 1.0;
    let mut total = 0.0;
    for &r in step_rewards {
        total += r * weight;
        weight *= gamma;
    }
    Ok(total)
}

/// Per-environment mean returns over a roster and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosterEval {
    pub per_env: Vec<f64>,
    pub mean: f64,
}

impl RosterEval {
    pub fn from_per_env(per_env: Vec<f64>) -> Self {
        let mean = per_env.iter().sum::<f64>() / per_env.len() as f64;
        RosterEval { per_env, mean }
    }
}

/// Score of one curriculum step: the mean evaluation return over the
/// whole roster.
pub fn step_reward(
    params: &PolicyParams,
    head: LogitHead,
    roster: &[EnvSpec],
    score: &ScoreConfig,
    schedule: &StepBudgetSchedule,
    iterations_done: u64,
    rng: &mut Rng,
) -> Result<RosterEval> {
    if roster.is_empty() {
        return Err(Error::contract("step reward over an empty roster"));
    }
    let per_env = roster
        .iter()
        .map(|spec| {
            evaluate(
                params,
                head,
                *spec,
                score.eval_episodes_per_env,
                schedule,
                iterations_done,
                rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RosterEval::from_per_env(per_env))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixMode {
    /// Each generation's row starts from the previous row, so scores keep
    /// adding up across generations.
    #[default]
    Accumulate,
    /// Each generation's row starts at zero.
    Reset,
}

/// `generations x population` table of damped scores for one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardsMatrix {
    generations: usize,
    population: usize,
    entries: Vec<f64>,
    mode: MatrixMode,
}

impl RewardsMatrix {
    pub fn new(generations: usize, population: usize, mode: MatrixMode) -> Self {
        RewardsMatrix {
            generations,
            population,
            entries: vec![0.0; generations * population],
            mode,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.generations, self.population)
    }

    fn check(&self, gen: usize, individual: usize) -> Result<()> {
        if gen >= self.generations || individual >= self.population {
            return Err(Error::contract(format!(
                "rewards index ({gen}, {individual}) outside {}x{}",
                self.generations, self.population
            )));
        }
        Ok(())
    }

    /// Prepare row `gen` before its scores come in.
    pub fn begin_generation(&mut self, gen: usize) -> Result<()> {
        self.check(gen, 0)?;
        if gen > 0 && self.mode == MatrixMode::Accumulate {
            let p = self.population;
            let (prev, cur) = self.entries.split_at_mut(gen * p);
            cur[..p].copy_from_slice(&prev[(gen - 1) * p..]);
        }
        Ok(())
    }

    pub fn record(&mut self, gen: usize, individual: usize, score: f64) -> Result<()> {
        self.check(gen, individual)?;
        self.entries[gen * self.population + individual] += score;
        Ok(())
    }

    pub fn get(&self, gen: usize, individual: usize) -> Result<f64> {
        self.check(gen, individual)?;
        Ok(self.entries[gen * self.population + individual])
    }

    pub fn row(&self, gen: usize) -> &[f64] {
        &self.entries[gen * self.population..(gen + 1) * self.population]
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// The curriculum whose entry in row `gen` is largest.
pub fn best_curriculum<'a>(
    matrix: &RewardsMatrix,
    gen: usize,
    population: &'a [Curriculum],
) -> Result<(usize, &'a Curriculum)> {
    if population.is_empty() {
        return Err(Error::contract("best curriculum of an empty population"));
    }
    matrix.check(gen, population.len() - 1)?;
    let row = &matrix.row(gen)[..population.len()];
    let i = argmax(row).expect("non-empty");
    Ok((i, &population[i]))
}
