use rayon::prelude::*;

use super::{CommitMode, Finished, Learner, Recorder, SchedulerConfig, SchedulerKind};
use super::{TAG_CANDIDATE, TAG_COMMIT, TAG_POPULATION};
use crate::curriculum::{best_curriculum, curriculum_score, Curriculum, RewardsMatrix};
use crate::error::{Error, Result};
use crate::evolution::{init_population, next_generation};
use crate::ppo::EnvAssignment;
use crate::rng::{self, Rng};
use crate::runlog::{CandidateRecord, RunLog};

/// Stream used to train the committed step of epoch `epoch`.
pub fn commit_stream(seed: u64, epoch: usize) -> Rng {
    rng::stream(seed, &[TAG_COMMIT, epoch as u64])
}

/// Summary of one finished epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Population of the last generation.
    pub population: Vec<Curriculum>,
    pub matrix: RewardsMatrix,
    pub best_index: usize,
    pub best: Curriculum,
    pub committed_frames: u64,
    pub candidate_frames: u64,
    pub roster_mean: f64,
}

struct Candidate<L> {
    step_rewards: Vec<f64>,
    frames: u64,
    after_first: Option<(L, u64)>,
}

/// Rolling-horizon curriculum search. With kind `RHRS` every generation
/// after the first is drawn at random instead of evolved.
pub struct RheaCl<L> {
    cfg: SchedulerConfig,
    learner: L,
    gamma: f64,
    seed: u64,
    epoch: usize,
    best: Option<Curriculum>,
    rec: Recorder,
}

impl<L: Learner> RheaCl<L> {
    /// `gamma` dampens the scores of later curriculum steps.
    pub fn new(cfg: SchedulerConfig, gamma: f64, learner: L, seed: u64) -> Result<Self> {
        let rec = Recorder::new(&cfg, seed, None);
        Self::with_recorder(cfg, gamma, learner, seed, rec)
    }

    pub(crate) fn with_recorder(
        cfg: SchedulerConfig,
        gamma: f64,
        learner: L,
        seed: u64,
        rec: Recorder,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::config(format!("gamma = {gamma} must be in (0, 1]")));
        }
        if !matches!(cfg.kind, SchedulerKind::RheaCL | SchedulerKind::RHRS) {
            return Err(Error::config(format!(
                "{} is not an evolutionary scheduler",
                cfg.kind
            )));
        }
        Ok(RheaCl {
            cfg,
            learner,
            gamma,
            seed,
            epoch: 0,
            best: None,
            rec,
        })
    }

    /// The committed learner.
    pub fn learner(&self) -> &L {
        &self.learner
    }

    pub fn log(&self) -> &RunLog {
        &self.rec.log
    }

    pub fn best(&self) -> Option<&Curriculum> {
        self.best.as_ref()
    }

    pub fn run(mut self) -> Result<Finished<L>> {
        if self.rec.log.records.is_empty() {
            self.rec.evaluate(&self.learner, None, String::new())?;
        }
        while self.rec.log.committed_frames < self.cfg.total_frames {
            self.step_epoch()?;
        }
        Ok(Finished {
            log: self.rec.log,
            learner: self.learner,
        })
    }

    fn candidate(
        &self,
        snapshot: &L,
        c: &Curriculum,
        keep_first: bool,
        rng: &mut Rng,
    ) -> Result<Candidate<L>> {
        let mut learner = snapshot.clone();
        let mut out = Candidate {
            step_rewards: Vec::with_capacity(c.len()),
            frames: 0,
            after_first: None,
        };
        for (j, step) in c.steps().iter().enumerate() {
            let assignment = EnvAssignment::RoundRobin(step.envs().to_vec());
            let trained = learner.train(&assignment, self.cfg.iter_steps, rng)?;
            out.frames += trained;
            out.step_rewards
                .push(learner.evaluate(&self.cfg.roster, rng)?.mean);
            if j == 0 && keep_first {
                out.after_first = Some((learner.clone(), trained));
            }
        }
        Ok(out)
    }

    /// One epoch: search from the current snapshot, then commit the first
    /// step of the best curriculum.
    pub fn step_epoch(&mut self) -> Result<EpochReport> {
        let e = self.epoch;
        let evo = self.cfg.evolution.clone();
        let roster = self.cfg.roster.clone();
        let gamma = self.gamma;
        let keep_first = self.cfg.commit == CommitMode::ReuseWeights;
        let snapshot = self.learner.clone();
        let mut pop_rng = rng::stream(self.seed, &[TAG_POPULATION, e as u64]);
        let mut population =
            init_population(&evo, &roster, &mut pop_rng, self.best.as_ref())?.individuals;
        let mut matrix = RewardsMatrix::new(evo.generations, evo.population_size, self.cfg.matrix);
        let mut last: Vec<Candidate<L>> = Vec::new();
        let candidate_frames_before = self.rec.log.candidate_frames;

        for gen in 0..evo.generations {
            matrix.begin_generation(gen)?;
            let this = &*self;
            let results = population
                .par_iter()
                .enumerate()
                .map(|(i, c)| {
                    let mut r =
                        rng::stream(this.seed, &[TAG_CANDIDATE, e as u64, gen as u64, i as u64]);
                    this.candidate(&snapshot, c, keep_first, &mut r)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut fitness = Vec::with_capacity(results.len());
            for (i, cand) in results.iter().enumerate() {
                let mut weight = 1.0;
                for r in &cand.step_rewards {
                    matrix.record(gen, i, r * weight)?;
                    weight *= gamma;
                }
                let score = curriculum_score(&cand.step_rewards, gamma)?;
                fitness.push(score);
                self.rec.log.candidate_frames += cand.frames;
                self.rec.log.candidates.push(CandidateRecord {
                    epoch: e,
                    generation: gen,
                    individual: i,
                    curriculum: population[i].to_string(),
                    step_rewards: cand.step_rewards.clone(),
                    score,
                    matrix_entry: matrix.get(gen, i)?,
                    frames: cand.frames,
                });
            }
            last = results;
            if gen + 1 < evo.generations {
                population = match self.cfg.kind {
                    SchedulerKind::RHRS => {
                        init_population(&evo, &roster, &mut pop_rng, None)?.individuals
                    }
                    _ => next_generation(&evo, &population, &fitness, &roster, &mut pop_rng)?,
                };
            }
        }

        let (best_index, best) = best_curriculum(&matrix, evo.generations - 1, &population)?;
        let best = best.clone();
        let committed = match self.cfg.commit {
            CommitMode::Retrain => {
                self.learner = snapshot;
                let assignment = EnvAssignment::RoundRobin(best.first().envs().to_vec());
                self.learner.train(
                    &assignment,
                    self.cfg.iter_steps,
                    &mut commit_stream(self.seed, e),
                )?
            }
            CommitMode::ReuseWeights => {
                let (learner, frames) = last
                    .swap_remove(best_index)
                    .after_first
                    .expect("first-step weights kept in reuse mode");
                self.learner = learner;
                // those frames were trained once, as part of a candidate
                self.rec.log.candidate_frames -= frames;
                frames
            }
        };
        self.rec.log.committed_frames += committed;
        let step_text = format!("[{}]", best.first());
        let roster_mean = self.rec.evaluate(&self.learner, Some(e), step_text)?;
        self.best = Some(best.clone());
        self.epoch += 1;
        Ok(EpochReport {
            epoch: e,
            population,
            matrix,
            best_index,
            best,
            committed_frames: committed,
            candidate_frames: self.rec.log.candidate_frames - candidate_frames_before,
            roster_mean,
        })
    }
}
