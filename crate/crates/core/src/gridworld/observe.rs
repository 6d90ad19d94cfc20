use super::env::{Cell, GridState};

pub const DEFAULT_VIEW_SIZE: usize = 5;

/// Integer codes of the three observation channels.
pub mod encoding {
    pub const OBJ_UNSEEN: u8 = 0;
    pub const OBJ_EMPTY: u8 = 1;
    pub const OBJ_WALL: u8 = 2;
    pub const OBJ_DOOR: u8 = 3;
    pub const OBJ_KEY: u8 = 4;
    pub const OBJ_GOAL: u8 = 5;
    pub const OBJ_OBSTACLE: u8 = 6;
    pub const OBJ_MAX: u8 = 6;

    pub const COLOR_NONE: u8 = 0;
    pub const COLOR_GREY: u8 = 1;
    pub const COLOR_YELLOW: u8 = 2;
    pub const COLOR_GREEN: u8 = 3;
    pub const COLOR_BLUE: u8 = 4;
    pub const COLOR_MAX: u8 = 4;

    pub const STATE_OPEN: u8 = 0;
    pub const STATE_CLOSED: u8 = 1;
    pub const STATE_MAX: u8 = 1;

    /// Per-channel divisor mapping codes into `[0, 1]`.
    pub const CHANNEL_MAX: [u8; 3] = [OBJ_MAX, COLOR_MAX, STATE_MAX];
}

/// Egocentric partial view: `view x view x 3` codes stored row-major,
/// row 0 farthest ahead, the agent at the bottom-centre cell facing up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub view_size: usize,
    pub grid: Vec<u8>,
    pub direction: u8,
}

impl Observation {
    pub fn at(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.view_size + col) * 3;
        [self.grid[i], self.grid[i + 1], self.grid[i + 2]]
    }

    /// Channels scaled to `[0, 1]`, appended to `out`.
    pub fn write_normalized(&self, out: &mut Vec<f64>) {
        out.extend(
            self.grid
                .iter()
                .enumerate()
                .map(|(i, &v)| v as f64 / encoding::CHANNEL_MAX[i % 3] as f64),
        );
    }
}

fn encode(cell: Cell) -> [u8; 3] {
    use encoding::*;
    match cell {
        Cell::Empty => [OBJ_EMPTY, COLOR_NONE, STATE_OPEN],
        Cell::Wall => [OBJ_WALL, COLOR_GREY, STATE_OPEN],
        Cell::Door { open } => [
            OBJ_DOOR,
            COLOR_YELLOW,
            if open { STATE_OPEN } else { STATE_CLOSED },
        ],
        Cell::Key => [OBJ_KEY, COLOR_YELLOW, STATE_OPEN],
        Cell::Goal => [OBJ_GOAL, COLOR_GREEN, STATE_OPEN],
        Cell::Obstacle => [OBJ_OBSTACLE, COLOR_BLUE, STATE_OPEN],
    }
}

pub(crate) fn observe(state: &GridState) -> Observation {
    let v = state.view_size();
    let half = (v / 2) as i64;
    let (ax, ay) = state.agent_pos();
    let fwd = state.agent_dir().vector();
    let right = state.agent_dir().right().vector();

    // View cell -> world cell (None outside the grid).
    let mut view: Vec<Option<Cell>> = Vec::with_capacity(v * v);
    for row in 0..v {
        for col in 0..v {
            let f = (v - 1 - row) as i64;
            let r = col as i64 - half;
            let x = ax as i64 + f * fwd.0 + r * right.0;
            let y = ay as i64 + f * fwd.1 + r * right.1;
            view.push(state.cell_at(x, y));
        }
    }
    let agent_idx = (v - 1) * v + v / 2;
    view[agent_idx] = Some(if state.carrying_key() {
        Cell::Key
    } else {
        Cell::Empty
    });

    let visible = visibility(&view, v);
    let mut grid = vec![0u8; v * v * 3];
    for (i, cell) in view.iter().enumerate() {
        if let (true, Some(c)) = (visible[i], cell) {
            grid[i * 3..i * 3 + 3].copy_from_slice(&encode(*c));
        }
    }
    Observation {
        view_size: v,
        grid,
        direction: state.agent_dir().index() as u8,
    }
}

/// Propagate visibility outward from the agent, row by row towards the
/// far edge. Opaque cells are seen but do not pass vision on; cells
/// outside the grid behave like walls.
fn visibility(view: &[Option<Cell>], v: usize) -> Vec<bool> {
    let mut mask = vec![false; v * v];
    mask[(v - 1) * v + v / 2] = true;
    let passes = |row: usize, col: usize| view[row * v + col].is_some_and(Cell::transparent);
    for row in (0..v).rev() {
        for col in 0..v - 1 {
            if !mask[row * v + col] || !passes(row, col) {
                continue;
            }
            mask[row * v + col + 1] = true;
            if row > 0 {
                mask[(row - 1) * v + col + 1] = true;
                mask[(row - 1) * v + col] = true;
            }
        }
        for col in (1..v).rev() {
            if !mask[row * v + col] || !passes(row, col) {
                continue;
            }
            mask[row * v + col - 1] = true;
            if row > 0 {
                mask[(row - 1) * v + col - 1] = true;
                mask[(row - 1) * v + col] = true;
            }
        }
    }
    mask
}
