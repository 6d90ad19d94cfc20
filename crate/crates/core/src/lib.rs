//! Online curriculum scheduling with a rolling-horizon evolutionary
//! algorithm, plus everything it schedules: native DoorKey and
//! DynamicObstacles gridworlds, a PPO agent on a small convolutional
//! actor-critic, and the baseline schedulers it is compared against.

pub mod curriculum;
pub mod error;
pub mod evolution;
pub mod gridworld;
pub mod harness;
pub mod ppo;
pub mod rng;
pub mod runlog;
pub mod schedulers;
pub mod tensor;

pub use curriculum::{Curriculum, CurriculumStep, RewardsMatrix, ScoreConfig};
pub use error::{Error, Result};
pub use evolution::EvolutionConfig;
pub use gridworld::{EnvKind, EnvSpec, GridState, Observation, StepBudgetSchedule};
pub use ppo::PpoConfig;
pub use runlog::{EvalRecord, RunLog};
pub use schedulers::{Learner, SchedulerConfig, SchedulerKind};
