//! Curriculum schedulers: the rolling-horizon evolutionary loop, its
//! random-search ablation and three fixed baselines.
//!
//! Every scheduler drives a [`Learner`], which keeps the schedulers
//! testable with stub trainers. [`PpoLearner`] is the real one.

mod baselines;
mod rhea;

pub(crate) use baselines::{all_parallel_with, spcl_with, vanilla_with};
pub use baselines::{run_all_parallel, run_spcl, run_vanilla, spcl_next_level};
pub use rhea::{commit_stream, EpochReport, RheaCl};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curriculum::{MatrixMode, RosterEval, ScoreConfig};
use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::gridworld::{EnvSpec, StepBudgetSchedule};
use crate::ppo::{Agent, Collector, EnvAssignment, PpoConfig};
use crate::rng::{self, Rng};
use crate::runlog::{EnvReturn, EvalRecord, RunLog, SCHEMA_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulerKind {
    RheaCL,
    RHRS,
    AllParallel,
    SPCL,
    NoCurriculum,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::RheaCL,
        SchedulerKind::RHRS,
        SchedulerKind::AllParallel,
        SchedulerKind::SPCL,
        SchedulerKind::NoCurriculum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::RheaCL => "RheaCL",
            SchedulerKind::RHRS => "RHRS",
            SchedulerKind::AllParallel => "AllParallel",
            SchedulerKind::SPCL => "SPCL",
            SchedulerKind::NoCurriculum => "NoCurriculum",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown scheduler {s:?}")))
    }
}

/// What the evolutionary schedulers commit after an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommitMode {
    /// Restore the epoch snapshot and train on the best curriculum's first
    /// step again.
    #[default]
    Retrain,
    /// Keep the weights the best candidate had after its first step.
    ReuseWeights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    /// Frames per curriculum step, also the evaluation cadence.
    pub iter_steps: u64,
    /// Budget of committed training frames.
    pub total_frames: u64,
    pub roster: Vec<EnvSpec>,
    pub evolution: EvolutionConfig,
    pub spcl_up: f64,
    pub spcl_down: f64,
    pub spcl_check_every: u64,
    pub commit: CommitMode,
    pub matrix: MatrixMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            kind: SchedulerKind::RheaCL,
            iter_steps: 25_000,
            total_frames: 150_000,
            roster: vec![EnvSpec::door_key(6), EnvSpec::door_key(8)],
            evolution: EvolutionConfig::default(),
            spcl_up: 0.85,
            spcl_down: 0.50,
            spcl_check_every: 25_000,
            commit: CommitMode::Retrain,
            matrix: MatrixMode::Accumulate,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.roster.is_empty() {
            return Err(Error::config("scheduler.roster is empty"));
        }
        for (i, e) in self.roster.iter().enumerate() {
            if self.roster[..i].contains(e) {
                return Err(Error::config(format!("scheduler.roster lists {e} twice")));
            }
        }
        if self.iter_steps == 0 {
            return Err(Error::config("scheduler.iter_steps must be positive"));
        }
        if self.total_frames < self.iter_steps {
            return Err(Error::config(format!(
                "scheduler.total_frames = {} is below iter_steps = {}",
                self.total_frames, self.iter_steps
            )));
        }
        if !(0.0 < self.spcl_down && self.spcl_down < self.spcl_up && self.spcl_up <= 1.0) {
            return Err(Error::config(format!(
                "need 0 < spcl_down < spcl_up <= 1, got {} and {}",
                self.spcl_down, self.spcl_up
            )));
        }
        if self.spcl_check_every == 0 {
            return Err(Error::config("scheduler.spcl_check_every must be positive"));
        }
        if self.kind == SchedulerKind::SPCL {
            let kind = self.roster[0].kind;
            if self.roster.iter().any(|e| e.kind != kind) {
                return Err(Error::config(
                    "SPCL needs a roster of a single environment kind",
                ));
            }
        }
        self.evolution.validate()
    }

    /// Roster member with the largest grid.
    pub fn largest_env(&self) -> EnvSpec {
        *self
            .roster
            .iter()
            .max_by_key(|e| e.size)
            .expect("validated roster")
    }
}

/// Something a scheduler can train and evaluate.
pub trait Learner: Clone + Send + Sync {
    /// Train for at least `frames` frames; returns the frames trained.
    fn train(&mut self, assignment: &EnvAssignment, frames: u64, rng: &mut Rng) -> Result<u64>;

    /// Mean evaluation return per roster member.
    fn evaluate(&self, roster: &[EnvSpec], rng: &mut Rng) -> Result<RosterEval>;
}

/// PPO agent plus the live collector it trains with. The collector is
/// kept while the environment assignment stays the same, so episodes carry
/// over between training calls.
#[derive(Clone, Debug)]
pub struct PpoLearner {
    pub agent: Agent,
    pub ppo: PpoConfig,
    pub score: ScoreConfig,
    pub schedule: StepBudgetSchedule,
    collector: Option<Collector>,
}

impl PpoLearner {
    pub fn new(
        ppo: PpoConfig,
        score: ScoreConfig,
        schedule: StepBudgetSchedule,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(PpoLearner {
            agent: Agent::new(&ppo, rng)?,
            ppo,
            score,
            schedule,
            collector: None,
        })
    }
}

impl Learner for PpoLearner {
    fn train(&mut self, assignment: &EnvAssignment, frames: u64, rng: &mut Rng) -> Result<u64> {
        if self.collector.as_ref().map(Collector::assignment) != Some(assignment) {
            self.collector = Some(Collector::new(
                assignment.clone(),
                self.ppo.num_processes,
                &self.schedule,
                self.agent.iterations,
                rng,
            )?);
        }
        let collector = self.collector.as_mut().expect("just set");
        let stats = self
            .agent
            .train(collector, frames, &self.ppo, &self.schedule, rng)?;
        Ok(stats.frames)
    }

    fn evaluate(&self, roster: &[EnvSpec], rng: &mut Rng) -> Result<RosterEval> {
        crate::curriculum::step_reward(
            &self.agent.params,
            self.ppo.logit_head,
            roster,
            &self.score,
            &self.schedule,
            self.agent.iterations,
            rng,
        )
    }
}

// Stream tags. A stream is a pure function of (seed, tags).
pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_TRAIN: u64 = 2;
pub(crate) const TAG_EVAL: u64 = 3;
pub(crate) const TAG_POPULATION: u64 = 4;
pub(crate) const TAG_CANDIDATE: u64 = 5;
pub(crate) const TAG_COMMIT: u64 = 6;
pub(crate) const TAG_SPCL: u64 = 7;

/// Stream the fixed-assignment baselines and SPCL train with.
pub fn train_stream(seed: u64) -> Rng {
    rng::stream(seed, &[TAG_TRAIN])
}

/// Fresh PPO learner for run `seed`.
pub fn ppo_learner(
    ppo: &PpoConfig,
    score: &ScoreConfig,
    schedule: &StepBudgetSchedule,
    seed: u64,
) -> Result<PpoLearner> {
    PpoLearner::new(
        ppo.clone(),
        *score,
        *schedule,
        &mut rng::stream(seed, &[TAG_INIT]),
    )
}

/// Result of a complete run.
#[derive(Clone, Debug)]
pub struct Finished<L> {
    pub log: RunLog,
    /// The committed learner at the end of the run.
    pub learner: L,
}

/// Called with every evaluation record as soon as it exists.
pub type Sink = Box<dyn FnMut(&EvalRecord) -> Result<()> + Send + Sync>;

/// Run the configured scheduler from scratch.
pub fn run<L: Learner>(
    cfg: &SchedulerConfig,
    score: &ScoreConfig,
    learner: L,
    seed: u64,
) -> Result<Finished<L>> {
    run_observed(cfg, score, learner, seed, None)
}

/// [`run`], streaming each evaluation record to `sink`.
pub fn run_observed<L: Learner>(
    cfg: &SchedulerConfig,
    score: &ScoreConfig,
    learner: L,
    seed: u64,
    sink: Option<Sink>,
) -> Result<Finished<L>> {
    cfg.validate()?;
    score.validate()?;
    let rec = Recorder::new(cfg, seed, sink);
    match cfg.kind {
        SchedulerKind::RheaCL | SchedulerKind::RHRS => {
            RheaCl::with_recorder(cfg.clone(), score.gamma, learner, seed, rec)?.run()
        }
        SchedulerKind::AllParallel => all_parallel_with(cfg, learner, rec),
        SchedulerKind::SPCL => spcl_with(cfg, learner, rec),
        SchedulerKind::NoCurriculum => vanilla_with(cfg, learner, rec),
    }
}

/// Shared record keeping for all schedulers.
pub(crate) struct Recorder {
    pub kind: SchedulerKind,
    pub seed: u64,
    pub roster: Vec<EnvSpec>,
    pub log: RunLog,
    sink: Option<Sink>,
}

impl Recorder {
    pub fn new(cfg: &SchedulerConfig, seed: u64, sink: Option<Sink>) -> Self {
        Recorder {
            kind: cfg.kind,
            seed,
            roster: cfg.roster.clone(),
            log: RunLog::default(),
            sink,
        }
    }

    /// Evaluate `learner` over the roster and append a record.
    pub fn evaluate<L: Learner>(
        &mut self,
        learner: &L,
        epoch: Option<usize>,
        curriculum: String,
    ) -> Result<f64> {
        let index = self.log.records.len() as u64;
        let eval = learner.evaluate(
            &self.roster,
            &mut rng::stream(self.seed, &[TAG_EVAL, index]),
        )?;
        let mean = eval.mean;
        self.log.records.push(EvalRecord {
            schema: SCHEMA_VERSION,
            scheduler: self.kind,
            seed: self.seed,
            frames: self.log.committed_frames,
            candidate_frames: self.log.candidate_frames,
            epoch,
            curriculum,
            returns: self
                .roster
                .iter()
                .zip(eval.per_env)
                .map(|(&env, mean_return)| EnvReturn { env, mean_return })
                .collect(),
            roster_mean: mean,
        });
        if let Some(sink) = self.sink.as_mut() {
            sink(self.log.records.last().expect("just pushed"))?;
        }
        Ok(mean)
    }
}
