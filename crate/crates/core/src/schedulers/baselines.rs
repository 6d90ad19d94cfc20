use super::{train_stream, Finished, Learner, Recorder, SchedulerConfig, SchedulerKind, TAG_SPCL};
use crate::curriculum::{Curriculum, CurriculumStep};
use crate::error::{Error, Result};
use crate::ppo::EnvAssignment;
use crate::rng;

fn expect_kind(cfg: &SchedulerConfig, kind: SchedulerKind) -> Result<()> {
    cfg.validate()?;
    if cfg.kind != kind {
        return Err(Error::config(format!(
            "config is for {}, not {kind}",
            cfg.kind
        )));
    }
    Ok(())
}

/// Train on one fixed assignment, evaluating every `iter_steps` frames.
fn run_fixed<L: Learner>(
    cfg: &SchedulerConfig,
    mut learner: L,
    mut rec: Recorder,
    assignment: EnvAssignment,
) -> Result<Finished<L>> {
    let text = Curriculum::new(vec![CurriculumStep::new(assignment.pool().to_vec())?])?.to_string();
    let mut train_rng = train_stream(rec.seed);
    rec.evaluate(&learner, None, String::new())?;
    while rec.log.committed_frames < cfg.total_frames {
        rec.log.committed_frames += learner.train(&assignment, cfg.iter_steps, &mut train_rng)?;
        rec.evaluate(&learner, None, text.clone())?;
    }
    Ok(Finished {
        log: rec.log,
        learner,
    })
}

/// Every worker moves on to the next roster level after each episode.
pub fn run_all_parallel<L: Learner>(
    cfg: &SchedulerConfig,
    learner: L,
    seed: u64,
) -> Result<Finished<L>> {
    all_parallel_with(cfg, learner, Recorder::new(cfg, seed, None))
}

pub(crate) fn all_parallel_with<L: Learner>(
    cfg: &SchedulerConfig,
    learner: L,
    rec: Recorder,
) -> Result<Finished<L>> {
    expect_kind(cfg, SchedulerKind::AllParallel)?;
    run_fixed(
        cfg,
        learner,
        rec,
        EnvAssignment::CycleEpisodes(cfg.roster.clone()),
    )
}

/// Plain PPO on the largest roster level.
pub fn run_vanilla<L: Learner>(
    cfg: &SchedulerConfig,
    learner: L,
    seed: u64,
) -> Result<Finished<L>> {
    vanilla_with(cfg, learner, Recorder::new(cfg, seed, None))
}

pub(crate) fn vanilla_with<L: Learner>(
    cfg: &SchedulerConfig,
    learner: L,
    rec: Recorder,
) -> Result<Finished<L>> {
    expect_kind(cfg, SchedulerKind::NoCurriculum)?;
    run_fixed(
        cfg,
        learner,
        rec,
        EnvAssignment::RoundRobin(vec![cfg.largest_env()]),
    )
}

/// Threshold rule: up one level above `up`, down one below `down`,
/// clamped to `[0, levels)`.
pub fn spcl_next_level(level: usize, levels: usize, performance: f64, up: f64, down: f64) -> usize {
    if performance > up {
        (level + 1).min(levels - 1)
    } else if performance < down {
        level.saturating_sub(1)
    } else {
        level
    }
}

/// Self-paced baseline: start on the smallest level and move between
/// levels by thresholding the current level's evaluation return.
pub fn run_spcl<L: Learner>(cfg: &SchedulerConfig, learner: L, seed: u64) -> Result<Finished<L>> {
    spcl_with(cfg, learner, Recorder::new(cfg, seed, None))
}

pub(crate) fn spcl_with<L: Learner>(
    cfg: &SchedulerConfig,
    mut learner: L,
    mut rec: Recorder,
) -> Result<Finished<L>> {
    expect_kind(cfg, SchedulerKind::SPCL)?;
    let seed = rec.seed;
    let mut levels = cfg.roster.clone();
    levels.sort_by_key(|e| e.size);
    let mut train_rng = train_stream(seed);
    let mut level = 0;
    let mut checks = 0u64;
    let mut next_check = cfg.spcl_check_every;
    let mut next_eval = cfg.iter_steps;
    let mut trained_on: Vec<CurriculumStep> = Vec::new();
    rec.evaluate(&learner, None, String::new())?;
    while rec.log.committed_frames < cfg.total_frames {
        let done = rec.log.committed_frames;
        let chunk = next_check.min(next_eval) - done;
        let step = CurriculumStep::single(levels[level]);
        if trained_on.last() != Some(&step) {
            trained_on.push(step);
        }
        rec.log.committed_frames += learner.train(
            &EnvAssignment::RoundRobin(vec![levels[level]]),
            chunk,
            &mut train_rng,
        )?;
        let done = rec.log.committed_frames;
        if done >= next_check {
            let mut r = rng::stream(seed, &[TAG_SPCL, checks]);
            let perf = learner.evaluate(&levels[level..=level], &mut r)?.mean;
            level = spcl_next_level(level, levels.len(), perf, cfg.spcl_up, cfg.spcl_down);
            checks += 1;
            while next_check <= done {
                next_check += cfg.spcl_check_every;
            }
        }
        if done >= next_eval || done >= cfg.total_frames {
            let text = Curriculum::new(std::mem::take(&mut trained_on))?.to_string();
            rec.evaluate(&learner, None, text)?;
            while next_eval <= done {
                next_eval += cfg.iter_steps;
            }
        }
    }
    Ok(Finished {
        log: rec.log,
        learner,
    })
}
