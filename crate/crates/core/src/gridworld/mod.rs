//! DoorKey and DynamicObstacles gridworlds with egocentric partial views.

mod env;
mod observe;
mod schedule;

pub use env::{success_reward, Cell, EpisodeResult, GridState, Outcome, StepResult};
pub use observe::{encoding, Observation, DEFAULT_VIEW_SIZE};
pub use schedule::StepBudgetSchedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Level sizes used by the experiments.
pub const LEVEL_SIZES: [usize; 4] = [6, 8, 10, 12];

pub const NUM_ACTIONS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvKind {
    DoorKey,
    DynamicObstacles,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::DoorKey => "DoorKey",
            EnvKind::DynamicObstacles => "DynamicObstacles",
        }
    }

    /// Step budget before any decay.
    pub fn default_max_steps(self, size: usize) -> u32 {
        let area = (size * size) as u32;
        match self {
            EnvKind::DoorKey => 10 * area,
            EnvKind::DynamicObstacles => 4 * area,
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DoorKey" => Ok(EnvKind::DoorKey),
            "DynamicObstacles" => Ok(EnvKind::DynamicObstacles),
            other => Err(Error::config(format!("unknown environment kind `{other}`"))),
        }
    }
}

/// Identity of one level: kind and side length (outer walls included).
///
/// Serialized as `Kind-size`, e.g. `DoorKey-8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub size: usize,
    pub default_max_steps: u32,
}

impl EnvSpec {
    /// A level at one of the experiment sizes.
    pub fn new(kind: EnvKind, size: usize) -> Result<Self> {
        if !LEVEL_SIZES.contains(&size) {
            return Err(Error::config(format!(
                "level size {size} not in {LEVEL_SIZES:?}"
            )));
        }
        Ok(Self::custom(kind, size))
    }

    /// Any size; layout generation rejects sizes too small to hold the
    /// required objects.
    pub fn custom(kind: EnvKind, size: usize) -> Self {
        EnvSpec {
            kind,
            size,
            default_max_steps: kind.default_max_steps(size),
        }
    }

    pub fn door_key(size: usize) -> Self {
        Self::custom(EnvKind::DoorKey, size)
    }

    pub fn dynamic_obstacles(size: usize) -> Self {
        Self::custom(EnvKind::DynamicObstacles, size)
    }

    /// Obstacles in a DynamicObstacles level of this size.
    pub fn obstacle_count(&self) -> usize {
        match self.kind {
            EnvKind::DoorKey => 0,
            EnvKind::DynamicObstacles => self.size / 2,
        }
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind.name(), self.size)
    }
}

impl FromStr for EnvSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, size) = s.trim().rsplit_once('-').ok_or_else(|| {
            Error::config(format!("environment `{s}` is not of the form Kind-size"))
        })?;
        let size: usize = size
            .parse()
            .map_err(|_| Error::config(format!("environment `{s}` has a non-numeric size")))?;
        Ok(EnvSpec::custom(kind.parse()?, size))
    }
}

impl Serialize for EnvSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EnvSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Left = 0,
    Right = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Done = 6,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Left,
        Action::Right,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Toggle,
        Action::Done,
    ];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::contract(format!("action {i} outside 0..{NUM_ACTIONS}")))
    }
}

/// Facing direction; integer codes follow the usual east-first clockwise
/// order with `y` growing downwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Direction {
    pub fn from_index(i: usize) -> Self {
        [
            Direction::East,
            Direction::South,
            Direction::West,
            Direction::North,
        ][i % 4]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn vector(self) -> (i64, i64) {
        match self {
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
            Direction::North => (0, -1),
        }
    }

    pub fn right(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn left(self) -> Self {
        Self::from_index(self.index() + 3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_text_round_trip() {
        let s = EnvSpec::new(EnvKind::DynamicObstacles, 10).unwrap();
        assert_eq!(s.to_string(), "DynamicObstacles-10");
        assert_eq!("DynamicObstacles-10".parse::<EnvSpec>().unwrap(), s);
        assert!("Maze-8".parse::<EnvSpec>().is_err());
        assert!(EnvSpec::new(EnvKind::DoorKey, 7).is_err());
    }

    #[test]
    fn default_budgets() {
        assert_eq!(EnvSpec::door_key(8).default_max_steps, 640);
        assert_eq!(EnvSpec::dynamic_obstacles(6).default_max_steps, 144);
        assert_eq!(EnvSpec::dynamic_obstacles(12).obstacle_count(), 6);
    }
}
