use std::fmt;

use rand::Rng as _;

use super::observe::{self, Observation, DEFAULT_VIEW_SIZE};
use super::{Action, Direction, EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Wall,
    Door { open: bool },
    Key,
    Goal,
    Obstacle,
}

impl Cell {
    /// Whether the agent may stand on this cell.
    fn walkable(self) -> bool {
        matches!(self, Cell::Empty | Cell::Goal | Cell::Door { open: true })
    }

    /// Whether vision passes through this cell.
    pub fn transparent(self) -> bool {
        !matches!(self, Cell::Wall | Cell::Door { open: false })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Goal,
    Collision,
    Timeout,
}

/// Reward for reaching the goal after `taken_steps` of a `max_steps`
/// budget.
pub fn success_reward(taken_steps: u32, max_steps: u32) -> f64 {
    1.0 - 0.9 * (taken_steps as f64 / max_steps as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub outcome: Option<Outcome>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeResult {
    pub episode_return: f64,
    pub taken_steps: u32,
    pub outcome: Outcome,
}

/// Full simulator state of one level instance.
#[derive(Clone, Debug)]
pub struct GridState {
    spec: EnvSpec,
    cells: Vec<Cell>,
    agent_pos: (usize, usize),
    agent_dir: Direction,
    carrying_key: bool,
    obstacles: Vec<(usize, usize)>,
    steps_taken: u32,
    max_steps: u32,
    view_size: usize,
    outcome: Option<Outcome>,
    rng: Rng,
}

impl PartialEq for GridState {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.cells == other.cells
            && self.agent_pos == other.agent_pos
            && self.agent_dir == other.agent_dir
            && self.carrying_key == other.carrying_key
            && self.obstacles == other.obstacles
            && self.steps_taken == other.steps_taken
            && self.max_steps == other.max_steps
            && self.outcome == other.outcome
    }
}

impl GridState {
    /// Generate a fresh seeded layout with the default 5x5 view.
    pub fn reset(spec: EnvSpec, seed: u64, max_steps: u32) -> Result<(Self, Observation)> {
        Self::reset_with_view(spec, seed, max_steps, DEFAULT_VIEW_SIZE)
    }

    pub fn reset_with_view(
        spec: EnvSpec,
        seed: u64,
        max_steps: u32,
        view_size: usize,
    ) -> Result<(Self, Observation)> {
        if max_steps == 0 {
            return Err(Error::config("max_steps must be positive"));
        }
        if view_size < 3 || view_size.is_multiple_of(2) {
            return Err(Error::config(format!(
                "view size {view_size} must be odd and >= 3"
            )));
        }
        let size = spec.size;
        let mut state = GridState {
            spec,
            cells: vec![Cell::Empty; size * size],
            agent_pos: (1, 1),
            agent_dir: Direction::East,
            carrying_key: false,
            obstacles: Vec::new(),
            steps_taken: 0,
            max_steps,
            view_size,
            outcome: None,
            rng: rng::seeded(seed),
        };
        match spec.kind {
            EnvKind::DoorKey => state.generate_door_key()?,
            EnvKind::DynamicObstacles => state.generate_dynamic_obstacles()?,
        }
        let obs = state.observe();
        Ok((state, obs))
    }

    fn idx(&self, x: usize, y: usize) -> usize {
        y * self.spec.size + x
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[self.idx(x, y)]
    }

    fn set(&mut self, x: usize, y: usize, c: Cell) {
        let i = self.idx(x, y);
        self.cells[i] = c;
    }

    /// Cell at signed coordinates, `None` outside the grid.
    pub(crate) fn cell_at(&self, x: i64, y: i64) -> Option<Cell> {
        let n = self.spec.size as i64;
        if x < 0 || y < 0 || x >= n || y >= n {
            None
        } else {
            Some(self.cell(x as usize, y as usize))
        }
    }

    fn outer_walls(&mut self) {
        let n = self.spec.size;
        for i in 0..n {
            self.set(i, 0, Cell::Wall);
            self.set(i, n - 1, Cell::Wall);
            self.set(0, i, Cell::Wall);
            self.set(n - 1, i, Cell::Wall);
        }
    }

    /// Random empty cell in `[x0, x1) x [y0, y1)` that is not the agent.
    fn random_empty(&mut self, x0: usize, x1: usize, y0: usize, y1: usize) -> (usize, usize) {
        loop {
            let x = self.rng.gen_range(x0..x1);
            let y = self.rng.gen_range(y0..y1);
            if self.cell(x, y) == Cell::Empty && (x, y) != self.agent_pos {
                return (x, y);
            }
        }
    }

    fn generate_door_key(&mut self) -> Result<()> {
        let n = self.spec.size;
        if n < 5 {
            return Err(Error::config(format!(
                "DoorKey needs size >= 5 to place wall, door, key and goal, got {n}"
            )));
        }
        self.outer_walls();
        self.set(n - 2, n - 2, Cell::Goal);
        let split = self.rng.gen_range(2..n - 2);
        for y in 0..n {
            self.set(split, y, Cell::Wall);
        }
        // Agent first (random pose left of the wall), then door and key.
        self.agent_pos = (usize::MAX, usize::MAX);
        let pos = self.random_empty(1, split, 1, n - 1);
        self.agent_pos = pos;
        self.agent_dir = Direction::from_index(self.rng.gen_range(0..4));
        let door_y = self.rng.gen_range(1..n - 2);
        self.set(split, door_y, Cell::Door { open: false });
        let (kx, ky) = self.random_empty(1, split, 1, n - 1);
        self.set(kx, ky, Cell::Key);
        Ok(())
    }

    fn generate_dynamic_obstacles(&mut self) -> Result<()> {
        let n = self.spec.size;
        let count = self.spec.obstacle_count();
        if n < 4 || (n - 2) * (n - 2) < count + 2 {
            return Err(Error::config(format!(
                "DynamicObstacles needs size >= 4 to place agent, goal and {count} obstacles, got {n}"
            )));
        }
        self.outer_walls();
        self.agent_pos = (1, 1);
        self.agent_dir = Direction::East;
        self.set(n - 2, n - 2, Cell::Goal);
        for _ in 0..count {
            let (x, y) = self.random_empty(1, n - 1, 1, n - 1);
            self.set(x, y, Cell::Obstacle);
            self.obstacles.push((x, y));
        }
        Ok(())
    }

    pub fn spec(&self) -> EnvSpec {
        self.spec
    }

    pub fn size(&self) -> usize {
        self.spec.size
    }

    pub fn agent_pos(&self) -> (usize, usize) {
        self.agent_pos
    }

    pub fn agent_dir(&self) -> Direction {
        self.agent_dir
    }

    pub fn carrying_key(&self) -> bool {
        self.carrying_key
    }

    pub fn obstacles(&self) -> &[(usize, usize)] {
        &self.obstacles
    }

    pub fn steps_taken(&self) -> u32 {
        self.steps_taken
    }

    pub fn max_steps(&self) -> u32 {
        self.max_steps
    }

    pub fn view_size(&self) -> usize {
        self.view_size
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn front_pos(&self) -> (i64, i64) {
        let (dx, dy) = self.agent_dir.vector();
        (self.agent_pos.0 as i64 + dx, self.agent_pos.1 as i64 + dy)
    }

    pub fn observe(&self) -> Observation {
        observe::observe(self)
    }

    /// Apply one action. Errors if the episode has already ended.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if let Some(o) = self.outcome {
            return Err(Error::contract(format!("step after episode ended ({o:?})")));
        }
        self.steps_taken += 1;
        let mut reward = 0.0;
        let (fx, fy) = self.front_pos();
        let front = self.cell_at(fx, fy);

        match action {
            Action::Left => self.agent_dir = self.agent_dir.left(),
            Action::Right => self.agent_dir = self.agent_dir.right(),
            Action::Forward => match front {
                Some(Cell::Obstacle) => {
                    reward = -1.0;
                    self.outcome = Some(Outcome::Collision);
                }
                Some(c) if c.walkable() => {
                    self.agent_pos = (fx as usize, fy as usize);
                    if c == Cell::Goal {
                        reward = success_reward(self.steps_taken, self.max_steps);
                        self.outcome = Some(Outcome::Goal);
                    }
                }
                _ => {}
            },
            Action::Pickup => {
                if front == Some(Cell::Key) && !self.carrying_key {
                    self.carrying_key = true;
                    self.set(fx as usize, fy as usize, Cell::Empty);
                }
            }
            Action::Drop => {
                if self.carrying_key && front == Some(Cell::Empty) {
                    self.carrying_key = false;
                    self.set(fx as usize, fy as usize, Cell::Key);
                }
            }
            Action::Toggle => {
                if front == Some(Cell::Door { open: false }) && self.carrying_key {
                    self.set(fx as usize, fy as usize, Cell::Door { open: true });
                }
            }
            Action::Done => {}
        }

        if self.outcome.is_none()
            && self.spec.kind == EnvKind::DynamicObstacles
            && self.move_obstacles()
        {
            reward = -1.0;
            self.outcome = Some(Outcome::Collision);
        }
        if self.outcome.is_none() && self.steps_taken >= self.max_steps {
            self.outcome = Some(Outcome::Timeout);
        }
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: self.outcome.is_some(),
            outcome: self.outcome,
        })
    }

    /// Each obstacle, in list order, proposes one random orthogonal move;
    /// moves into anything but an empty cell are rejected. Moving onto the
    /// agent is allowed and reported as a collision.
    fn move_obstacles(&mut self) -> bool {
        let mut hit = false;
        for k in 0..self.obstacles.len() {
            let (x, y) = self.obstacles[k];
            let dir = Direction::from_index(self.rng.gen_range(0..4));
            let (dx, dy) = dir.vector();
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if self.cell_at(nx, ny) != Some(Cell::Empty) {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            self.set(x, y, Cell::Empty);
            self.set(nx, ny, Cell::Obstacle);
            self.obstacles[k] = (nx, ny);
            if (nx, ny) == self.agent_pos {
                hit = true;
            }
        }
        hit
    }

    /// Build a state from an ASCII layout (see [`GridState::render`]).
    /// Mainly useful for tests and debugging.
    pub fn from_ascii(kind: EnvKind, layout: &str, max_steps: u32, seed: u64) -> Result<Self> {
        let rows: Vec<&str> = layout
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.chars().count() != n) {
            return Err(Error::Format("layout must be a non-empty square".into()));
        }
        let mut cells = Vec::with_capacity(n * n);
        let mut agent = None;
        let mut obstacles = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let cell = match ch {
                    '.' => Cell::Empty,
                    '#' => Cell::Wall,
                    'D' => Cell::Door { open: false },
                    '/' => Cell::Door { open: true },
                    'K' => Cell::Key,
                    'G' => Cell::Goal,
                    'O' => {
                        obstacles.push((x, y));
                        Cell::Obstacle
                    }
                    '>' | 'v' | '<' | '^' => {
                        let dir = match ch {
                            '>' => Direction::East,
                            'v' => Direction::South,
                            '<' => Direction::West,
                            _ => Direction::North,
                        };
                        agent = Some(((x, y), dir));
                        Cell::Empty
                    }
                    other => {
                        return Err(Error::Format(format!("unknown layout character `{other}`")))
                    }
                };
                cells.push(cell);
            }
        }
        let (agent_pos, agent_dir) =
            agent.ok_or_else(|| Error::Format("layout has no agent".into()))?;
        Ok(GridState {
            spec: EnvSpec::custom(kind, n),
            cells,
            agent_pos,
            agent_dir,
            carrying_key: false,
            obstacles,
            steps_taken: 0,
            max_steps,
            view_size: DEFAULT_VIEW_SIZE,
            outcome: None,
            rng: rng::seeded(seed),
        })
    }

    /// ASCII picture of the grid, one row per line.
    pub fn render(&self) -> String {
        let n = self.spec.size;
        let mut out = String::with_capacity(n * (n + 1));
        for y in 0..n {
            for x in 0..n {
                let ch = if (x, y) == self.agent_pos {
                    match self.agent_dir {
                        Direction::East => '>',
                        Direction::South => 'v',
                        Direction::West => '<',
                        Direction::North => '^',
                    }
                } else {
                    match self.cell(x, y) {
                        Cell::Empty => '.',
                        Cell::Wall => '#',
                        Cell::Door { open: false } => 'D',
                        Cell::Door { open: true } => '/',
                        Cell::Key => 'K',
                        Cell::Goal => 'G',
                        Cell::Obstacle => 'O',
                    }
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for GridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(state: &GridState, c: Cell) -> usize {
        state.cells().iter().filter(|&&x| x == c).count()
    }

    #[test]
    fn door_key_layout_has_one_of_each() {
        for seed in 0..200 {
            let (s, _) = GridState::reset(EnvSpec::door_key(6), seed, 360).unwrap();
            assert_eq!(count(&s, Cell::Key), 1, "seed {seed}\n{s}");
            assert_eq!(count(&s, Cell::Door { open: false }), 1);
            assert_eq!(count(&s, Cell::Goal), 1);
            assert_eq!(s.cell(4, 4), Cell::Goal);
            let (ax, ay) = s.agent_pos();
            assert_eq!(s.cell(ax, ay), Cell::Empty);
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let (a, oa) = GridState::reset(EnvSpec::door_key(8), 42, 640).unwrap();
        let (b, ob) = GridState::reset(EnvSpec::door_key(8), 42, 640).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
    }

    #[test]
    fn too_small_is_config_error() {
        assert!(matches!(
            GridState::reset(EnvSpec::door_key(4), 0, 10),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            GridState::reset(EnvSpec::dynamic_obstacles(3), 0, 10),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn obstacles_avoid_agent_and_goal() {
        for seed in 0..100 {
            let (s, _) = GridState::reset(EnvSpec::dynamic_obstacles(6), seed, 144).unwrap();
            assert_eq!(s.obstacles().len(), 3);
            for &p in s.obstacles() {
                assert_ne!(p, s.agent_pos());
                assert_ne!(p, (4, 4));
            }
        }
    }

    #[test]
    fn reward_formula_boundaries() {
        assert_eq!(success_reward(0, 100), 1.0);
        assert!((success_reward(100, 100) - 0.1).abs() < 1e-15);
        assert!(success_reward(10, 100) > success_reward(11, 100));
    }

    #[test]
    fn goal_on_last_step_pays_a_tenth() {
        let layout = "\
            #####
            #>G.#
            #...#
            #...#
            #####";
        let mut s = GridState::from_ascii(EnvKind::DoorKey, layout, 1, 0).unwrap();
        let r = s.step(Action::Forward).unwrap();
        assert_eq!(r.outcome, Some(Outcome::Goal));
        assert!((r.reward - 0.1).abs() < 1e-12);
    }

    #[test]
    fn timeout_pays_nothing() {
        let (mut s, _) = GridState::reset(EnvSpec::door_key(6), 3, 2).unwrap();
        assert!(!s.step(Action::Done).unwrap().done);
        let r = s.step(Action::Done).unwrap();
        assert!(r.done);
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.outcome, Some(Outcome::Timeout));
        assert!(matches!(s.step(Action::Left), Err(Error::Contract(_))));
    }

    #[test]
    fn walking_into_obstacle_collides() {
        let layout = "\
            #####
            #>O.#
            #...#
            #..G#
            #####";
        let mut s = GridState::from_ascii(EnvKind::DynamicObstacles, layout, 64, 0).unwrap();
        let r = s.step(Action::Forward).unwrap();
        assert_eq!(r.reward, -1.0);
        assert_eq!(r.outcome, Some(Outcome::Collision));
    }

    #[test]
    fn door_needs_key() {
        let layout = "\
            ######
            #K.#.#
            #^.D.#
            #..#G#
            #..#.#
            ######";
        let mut s = GridState::from_ascii(EnvKind::DoorKey, layout, 100, 0).unwrap();
        s.step(Action::Forward).unwrap();
        assert_eq!(s.agent_pos(), (1, 2), "key blocks movement");
        s.step(Action::Right).unwrap();
        s.step(Action::Forward).unwrap();
        assert_eq!(s.front_pos(), (3, 2));
        s.step(Action::Toggle).unwrap();
        assert_eq!(s.cell(3, 2), Cell::Door { open: false });
        s.step(Action::Left).unwrap();
        s.step(Action::Left).unwrap();
        s.step(Action::Forward).unwrap();
        s.step(Action::Right).unwrap();
        s.step(Action::Pickup).unwrap();
        assert!(s.carrying_key());
        assert_eq!(s.cell(1, 1), Cell::Empty);
        s.step(Action::Right).unwrap();
        s.step(Action::Forward).unwrap();
        s.step(Action::Toggle).unwrap();
        assert_eq!(s.cell(3, 2), Cell::Door { open: true });
        s.step(Action::Forward).unwrap();
        assert_eq!(s.agent_pos(), (3, 2));
    }

    #[test]
    fn render_parse_round_trip() {
        let (s, _) = GridState::reset(EnvSpec::door_key(8), 9, 640).unwrap();
        let parsed = GridState::from_ascii(EnvKind::DoorKey, &s.render(), 640, 0).unwrap();
        assert_eq!(parsed.render(), s.render());
        assert_eq!(parsed.agent_pos(), s.agent_pos());
    }
}
