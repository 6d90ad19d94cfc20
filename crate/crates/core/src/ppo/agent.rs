use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::network::{PolicyParams, NUM_PARAMS};
use super::rollout::{Collector, EpisodeRecord};
use super::update::{update, UpdateStats};
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::gridworld::StepBudgetSchedule;
use crate::rng::Rng;
use crate::tensor::{AdamConfig, AdamState};

/// Checkpoint layout (all integers and floats little-endian):
///
/// | field           | type            |
/// |-----------------|-----------------|
/// | magic           | 8 bytes `RHCLCKPT` |
/// | version         | u32 (= 1)       |
/// | iterations      | u64             |
/// | n (param count) | u64             |
/// | params          | n x f64         |
/// | adam t          | u64             |
/// | lr, beta1, alpha, eps | 4 x f64   |
/// | adam m          | n x f64         |
/// | adam v          | n x f64         |
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RHCLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trainable PPO agent: parameters, optimizer state and the number of
/// frames it has been trained on. Cloning it is a snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub params: PolicyParams,
    pub adam: AdamState,
    pub iterations: u64,
}

/// Outcome of [`Agent::train`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub frames: u64,
    pub updates: usize,
    pub episodes: Vec<EpisodeRecord>,
    pub last_update: UpdateStats,
}

impl Agent {
    pub fn new(cfg: &PpoConfig, rng: &mut Rng) -> Result<Self> {
        Ok(Agent {
            params: PolicyParams::init(rng),
            adam: AdamState::new(cfg.adam(), NUM_PARAMS)?,
            iterations: 0,
        })
    }

    pub fn with_params(cfg: &PpoConfig, params: PolicyParams) -> Result<Self> {
        Ok(Agent {
            params,
            adam: AdamState::new(cfg.adam(), NUM_PARAMS)?,
            iterations: 0,
        })
    }

    /// Collect-then-update until at least `frames` frames were trained
    /// (whole updates, so the count is rounded up).
    pub fn train(
        &mut self,
        collector: &mut Collector,
        frames: u64,
        cfg: &PpoConfig,
        schedule: &StepBudgetSchedule,
        rng: &mut Rng,
    ) -> Result<TrainStats> {
        if collector.num_workers() != cfg.num_processes {
            return Err(Error::config(format!(
                "collector has {} workers, config wants {}",
                collector.num_workers(),
                cfg.num_processes
            )));
        }
        let mut stats = TrainStats::default();
        while stats.frames < frames {
            let mut buf = collector.collect(
                &self.params,
                cfg.logit_head,
                cfg.frames_per_process,
                schedule,
                self.iterations,
                rng,
            )?;
            buf.compute_advantages(cfg.discount, cfg.gae_lambda);
            stats.last_update = update(&mut self.params, &mut self.adam, &buf, cfg, rng)?;
            self.iterations += buf.len() as u64;
            stats.frames += buf.len() as u64;
            stats.updates += 1;
            stats.episodes.extend(buf.episodes);
        }
        Ok(stats)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = NUM_PARAMS;
        let mut out = Vec::with_capacity(8 + 4 + 8 * (3 + 4 + 3 * n));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.iterations.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        let floats = |out: &mut Vec<u8>, v: &[f64]| {
            v.iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes()))
        };
        floats(&mut out, self.params.as_slice());
        out.extend_from_slice(&self.adam.t.to_le_bytes());
        let c = self.adam.config;
        floats(&mut out, &[c.lr, c.beta1, c.alpha, c.eps]);
        floats(&mut out, &self.adam.m);
        floats(&mut out, &self.adam.v);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor(bytes);
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let iterations = r.u64()?;
        let n = r.u64()? as usize;
        if n != NUM_PARAMS {
            return Err(Error::Format(format!(
                "checkpoint holds {n} params, network has {NUM_PARAMS}"
            )));
        }
        let params = r.floats(n)?;
        let t = r.u64()?;
        let c = r.floats(4)?;
        let config = AdamConfig {
            lr: c[0],
            beta1: c[1],
            alpha: c[2],
            eps: c[3],
        };
        let mut adam = AdamState::new(config, n)?;
        adam.m = r.floats(n)?;
        adam.v = r.floats(n)?;
        adam.t = t;
        if !r.0.is_empty() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Agent {
            params: PolicyParams::from_vec(params)?,
            adam,
            iterations,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.0.len() < k {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let (head, tail) = self.0.split_at(k);
        self.0 = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn floats(&mut self, k: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * k)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
