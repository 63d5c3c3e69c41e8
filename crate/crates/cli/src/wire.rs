//! JSON shapes shared by the HTTP service and the CLI, and the model
//! queries behind them (rollouts, Q heatmaps, embeddings).

use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use fbrep::envs::{Env, State};
use fbrep::eval::distance;
use fbrep::model::{argmax, dot, FbModel, PolicyKind, PolicySpec, TaskVector};
use fbrep::{FbError, RandomStream, Result};

pub const DEFAULT_MAX_STEPS: usize = 50;
pub const MAX_STEPS_LIMIT: usize = 10_000;
/// Side of the sampled state grid for the continuous maze.
pub const DEFAULT_GRID: usize = 50;
pub const MAX_GRID: usize = 200;

/// A state on the wire: a cell index, or `{"x": .., "y": ..}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateJson {
    Cell(usize),
    Point { x: f64, y: f64 },
}

impl From<State> for StateJson {
    fn from(s: State) -> Self {
        match s {
            State::Cell(c) => StateJson::Cell(c),
            State::Point { x, y } => StateJson::Point { x, y },
        }
    }
}

impl From<StateJson> for State {
    fn from(s: StateJson) -> Self {
        match s {
            StateJson::Cell(c) => State::Cell(c),
            StateJson::Point { x, y } => State::Point { x, y },
        }
    }
}

/// `"greedy"`, `{"eps": 0.1}` or `{"tau": 1.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicyJson {
    Named(String),
    Eps { eps: f64 },
    Tau { tau: f64 },
}

impl PolicyJson {
    pub fn kind(&self) -> Result<PolicyKind> {
        let kind = match self {
            PolicyJson::Named(n) if n == "greedy" => PolicyKind::Greedy,
            PolicyJson::Named(n) => return Err(FbError::Config(format!("unknown policy {n:?}"))),
            PolicyJson::Eps { eps } => PolicyKind::EpsilonGreedy { epsilon: *eps },
            PolicyJson::Tau { tau } => PolicyKind::Boltzmann { tau: *tau },
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutRequest {
    pub z_r: Vec<f64>,
    pub start: StateJson,
    #[serde(default)]
    pub policy: Option<PolicyJson>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Stop as soon as one of these is reached.
    #[serde(default)]
    pub targets: Vec<StateJson>,
    #[serde(default)]
    pub heatmap: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    /// Visited states, start included.
    pub trajectory: Vec<StateJson>,
    pub reached: bool,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_heatmap: Option<Heatmap>,
}

/// Grid of `max_a F(s, a, z)ᵀz`; `null` where there is no state.
/// Discrete rows follow maze rows; continuous row `i` is `y = (i + ½)/n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Vec<Option<f64>>>,
}

/// Check that `state` exists in the environment, reporting maze walls
/// separately.
pub fn check_state(env: &Env, state: &State) -> Result<()> {
    if env.is_valid(state) {
        return Ok(());
    }
    Err(match (env, state) {
        (Env::DiscreteMaze(m), State::Cell(c)) if *c < m.num_cells() => FbError::WallCell(*c),
        _ => FbError::Config(format!("{state:?} is not a state of {}", env.id())),
    })
}

fn check_z(model: &FbModel, z: &[f64]) -> Result<()> {
    if z.len() != model.d() {
        return Err(FbError::Config(format!("z_r has {} entries, the model has d = {}", z.len(), model.d())));
    }
    Ok(())
}

fn is_reached(a: &State, b: &State, threshold: f64) -> bool {
    match distance(a, b) {
        Some(dist) => dist < threshold,
        None => a == b,
    }
}

/// Roll `π_z` from `start`, stopping at a target. Continuous targets count
/// as reached within `threshold`.
pub fn run_rollout(model: &FbModel, req: &RolloutRequest, threshold: f64) -> Result<RolloutResult> {
    let env = model.env();
    check_z(model, &req.z_r)?;
    let start: State = req.start.into();
    check_state(env, &start)?;
    let targets: Vec<State> = req.targets.iter().map(|&t| t.into()).collect();
    for t in &targets {
        check_state(env, t)?;
    }
    let max_steps = req.max_steps.unwrap_or(DEFAULT_MAX_STEPS);
    if max_steps > MAX_STEPS_LIMIT {
        return Err(FbError::Config(format!("max_steps is capped at {MAX_STEPS_LIMIT}")));
    }
    let kind = match &req.policy {
        Some(p) => p.kind()?,
        None => PolicyKind::Greedy,
    };
    let spec = PolicySpec {
        kind,
        z: TaskVector(req.z_r.clone()),
    };
    let mut rng = RandomStream::new(req.seed.unwrap_or(0));
    let hit = |s: &State| targets.iter().any(|t| is_reached(s, t, threshold));
    let mut s = start;
    let mut trajectory = vec![StateJson::from(s)];
    let mut reached = hit(&s);
    while !reached && trajectory.len() <= max_steps {
        let a = model.act(&s, &spec, &mut rng)?;
        s = env.step(&s, a, &mut rng);
        trajectory.push(s.into());
        reached = hit(&s);
    }
    let q_heatmap = if req.heatmap {
        Some(q_heatmap(model, &req.z_r, DEFAULT_GRID)?)
    } else {
        None
    };
    Ok(RolloutResult {
        steps: trajectory.len() - 1,
        trajectory,
        reached,
        q_heatmap,
    })
}

fn grid_points(n: usize) -> Vec<State> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(State::Point {
                x: (j as f64 + 0.5) / n as f64,
                y: (i as f64 + 0.5) / n as f64,
            });
        }
    }
    out
}

/// States covered by heatmaps and embedding exports: open cells in index
/// order, or the `grid × grid` cell centers of the unit square.
pub fn export_states(env: &Env, grid: usize) -> Vec<State> {
    match env.valid_cells() {
        Some(cells) => cells.into_iter().map(State::Cell).collect(),
        None => grid_points(grid),
    }
}

pub fn q_heatmap(model: &FbModel, z: &[f64], grid: usize) -> Result<Heatmap> {
    check_z(model, z)?;
    if grid == 0 || grid > MAX_GRID {
        return Err(FbError::Config(format!("grid must be in 1..={MAX_GRID}")));
    }
    let env = model.env();
    let states = export_states(env, grid);
    let q = model.q_values_batch(&states, z)?;
    let best: Vec<f64> = q
        .rows()
        .into_iter()
        .map(|r| r.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)))
        .collect();
    let (width, height) = match env {
        Env::DiscreteMaze(m) => (m.width(), m.height()),
        Env::Cycle(c) => (c.len(), 1),
        Env::ContinuousMaze(_) => (grid, grid),
    };
    let mut values = vec![vec![None; width]; height];
    for (s, v) in states.iter().zip(best) {
        let idx = match *s {
            State::Cell(c) => c,
            State::Point { .. } => index_of_point(s, grid),
        };
        values[idx / width][idx % width] = Some(v);
    }
    Ok(Heatmap { width, height, values })
}

fn index_of_point(s: &State, grid: usize) -> usize {
    let (x, y) = s.point().expect("point state");
    let col = ((x * grid as f64) as usize).min(grid - 1);
    let row = ((y * grid as f64) as usize).min(grid - 1);
    row * grid + col
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingKind {
    F,
    B,
}

impl FromStr for EmbeddingKind {
    type Err = FbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" | "f" => Ok(EmbeddingKind::F),
            "B" | "b" => Ok(EmbeddingKind::B),
            other => Err(FbError::Config(format!("embedding kind must be F or B, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub kind: EmbeddingKind,
    pub states: Vec<State>,
    /// One row per state.
    pub vectors: Array2<f64>,
}

/// `B(s)`, or `F(s, a*, z)` with `a*` the greedy action for `z`
/// (`z = 0` by default, where every action ties and `a* = 0`).
pub fn embedding(model: &FbModel, kind: EmbeddingKind, z: Option<&[f64]>, grid: usize) -> Result<Embedding> {
    let zeros = vec![0.0; model.d()];
    let z = z.unwrap_or(&zeros);
    check_z(model, z)?;
    if grid == 0 || grid > MAX_GRID {
        return Err(FbError::Config(format!("grid must be in 1..={MAX_GRID}")));
    }
    let states = export_states(model.env(), grid);
    let mut vectors = Array2::zeros((states.len(), model.d()));
    for (i, s) in states.iter().enumerate() {
        let row = match kind {
            EmbeddingKind::B => model.backward_state(s),
            EmbeddingKind::F => {
                let f = model.forward_f_all(s, z)?;
                let q: Vec<f64> = f.rows().into_iter().map(|r| dot(r.as_slice().expect("row"), z)).collect();
                f.row(argmax(&q)).to_vec()
            }
        };
        vectors.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
    }
    Ok(Embedding { kind, states, vectors })
}

impl Embedding {
    /// CSV with a header; state columns (`cell` or `x,y`) then `e0..`.
    pub fn to_csv(&self) -> String {
        let d = self.vectors.ncols();
        let mut out = String::new();
        let point = matches!(self.states.first(), Some(State::Point { .. }));
        out.push_str(if point { "x,y" } else { "cell" });
        for k in 0..d {
            out.push_str(&format!(",e{k}"));
        }
        out.push('\n');
        for (s, row) in self.states.iter().zip(self.vectors.rows()) {
            match *s {
                State::Cell(c) => out.push_str(&c.to_string()),
                State::Point { x, y } => out.push_str(&format!("{x},{y}")),
            }
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}
