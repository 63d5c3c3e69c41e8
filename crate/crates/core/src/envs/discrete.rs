use std::collections::VecDeque;

use crate::envs::{Action, EnvDynamics};
use crate::error::{FbError, Result};

/// Text map of the four-room maze: `#` wall, `.` open, 11 × 11.
pub const FOUR_ROOMS_LAYOUT: &str = include_str!("../../assets/four_rooms.txt");

/// Deterministic gridworld over a rectangular text layout.
///
/// Cells are indexed row-major (`row * width + col`). Wall cells keep their
/// index (so the one-hot encoding has `width * height` components) but are
/// never entered. Actions are left, right, up (row - 1), down (row + 1) and
/// do-nothing; moves into walls or off the grid leave the agent in place.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMaze {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    open: Vec<usize>,
}

pub const MAZE_ACTION_NAMES: [&str; 5] = ["left", "right", "up", "down", "nothing"];

impl DiscreteMaze {
    pub fn four_rooms() -> Self {
        Self::parse(FOUR_ROOMS_LAYOUT).expect("bundled layout is valid")
    }

    /// Parse a `#`/`.` layout. Blank trailing lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        if height == 0 {
            return Err(FbError::Format("empty maze layout".into()));
        }
        let width = rows[0].chars().count();
        let mut walls = Vec::with_capacity(width * height);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(FbError::Format(format!(
                    "layout row {r} has {} columns, expected {width}",
                    row.chars().count()
                )));
            }
            for c in row.chars() {
                match c {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    other => {
                        return Err(FbError::Format(format!(
                            "unexpected character {other:?} in layout row {r}"
                        )))
                    }
                }
            }
        }
        let open: Vec<usize> = (0..walls.len()).filter(|&i| !walls[i]).collect();
        if open.is_empty() {
            return Err(FbError::Format("layout has no open cell".into()));
        }
        Ok(DiscreteMaze {
            width,
            height,
            walls,
            open,
        })
    }

    /// A `width × height` grid without interior walls.
    pub fn open_grid(width: usize, height: usize) -> Self {
        let row = ".".repeat(width);
        let text = vec![row; height].join("\n");
        Self::parse(&text).expect("open grid is valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.walls.len()
    }

    pub fn is_wall(&self, cell: usize) -> bool {
        self.walls[cell]
    }

    pub fn open_cells(&self) -> &[usize] {
        &self.open
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    pub fn step(&self, cell: usize, action: Action) -> usize {
        let (row, col) = self.coords(cell);
        let (r, c) = match action.0 {
            0 if col > 0 => (row, col - 1),
            1 if col + 1 < self.width => (row, col + 1),
            2 if row > 0 => (row - 1, col),
            3 if row + 1 < self.height => (row + 1, col),
            _ => (row, col),
        };
        let next = self.cell(r, c);
        if self.walls[next] {
            cell
        } else {
            next
        }
    }

    /// BFS step counts from every cell to `goal` (`None` for walls and
    /// disconnected cells).
    pub fn distances_to(&self, goal: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_cells()];
        if self.walls[goal] {
            return dist;
        }
        // Moves are symmetric, so BFS outward from the goal.
        dist[goal] = Some(0);
        let mut queue = VecDeque::from([goal]);
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell].unwrap();
            for a in 0..4 {
                let n = self.step(cell, Action(a));
                if dist[n].is_none() {
                    dist[n] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    pub fn dynamics(&self) -> EnvDynamics {
        let n = self.num_cells();
        let mut dynamics = EnvDynamics::zeros(n, 5);
        for s in 0..n {
            for a in 0..5 {
                // Wall cells are dead indices: give them a self-loop so the
                // kernel stays row-stochastic.
                let next = if self.walls[s] { s } else { self.step(s, Action(a)) };
                dynamics.set(s, a, next, 1.0);
            }
        }
        dynamics
    }
}
