//! Reward inference: turn a reward description into a task vector
//! `z_R = E_ρ[r(s, a) B(s, a)]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, Env, State};
use crate::error::{FbError, Result};
use crate::model::{BackwardMap, TaskVector};
use crate::replay::ReplayBuffer;

/// Rows per `backward_batch` call when averaging over a buffer.
const CHUNK: usize = 4096;

/// A goal and its weight. Negative weights mark forbidden states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedGoal {
    pub goal: State,
    pub weight: f64,
}

impl WeightedGoal {
    pub fn new(goal: State, weight: f64) -> Self {
        WeightedGoal { goal, weight }
    }
}

/// Reward function evaluated on buffer entries.
pub type RewardFn = dyn Fn(&State, Action) -> f64 + Send + Sync;

pub enum RewardSpec {
    ExplicitGoals(Vec<WeightedGoal>),
    FunctionReward(Box<RewardFn>),
    /// Observed `(s, a, r̂)` drawn from the training distribution.
    SampleReward(Vec<(State, Action, f64)>),
}

impl std::fmt::Debug for RewardSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RewardSpec::ExplicitGoals(g) => f.debug_tuple("ExplicitGoals").field(g).finish(),
            RewardSpec::FunctionReward(_) => f.write_str("FunctionReward(..)"),
            RewardSpec::SampleReward(s) => write!(f, "SampleReward({} samples)", s.len()),
        }
    }
}

/// JSON form of a goal: `{"cell": 17, "w": 1.0}` or `{"x": 0.2, "y": 0.8, "w": 1.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalsJson {
    pub goals: Vec<GoalJson>,
}

impl GoalJson {
    fn to_goal(&self) -> Result<WeightedGoal> {
        if !self.w.is_finite() {
            return Err(FbError::InvalidReward(format!("weight {} is not finite", self.w)));
        }
        let goal = match (self.cell, self.x, self.y) {
            (Some(c), None, None) => State::Cell(c),
            (None, Some(x), Some(y)) => State::Point { x, y },
            _ => {
                return Err(FbError::InvalidReward(
                    "a goal needs either `cell` or both `x` and `y`".into(),
                ))
            }
        };
        Ok(WeightedGoal::new(goal, self.w))
    }
}

/// Parse and validate a goals JSON document against `env`.
pub fn parse_goals(text: &str, env: &Env) -> Result<Vec<WeightedGoal>> {
    let doc: GoalsJson = serde_json::from_str(text).map_err(|e| FbError::InvalidReward(e.to_string()))?;
    goals_from_json(&doc, env)
}

pub fn goals_from_json(doc: &GoalsJson, env: &Env) -> Result<Vec<WeightedGoal>> {
    let goals = doc.goals.iter().map(GoalJson::to_goal).collect::<Result<Vec<_>>>()?;
    validate_goals(&goals, env)?;
    Ok(goals)
}

/// Non-empty, finite weights, states valid for `env` (wall cells are
/// reported as [`FbError::WallCell`]).
pub fn validate_goals(goals: &[WeightedGoal], env: &Env) -> Result<()> {
    if goals.is_empty() {
        return Err(FbError::InvalidReward("no goals".into()));
    }
    for g in goals {
        if !g.weight.is_finite() {
            return Err(FbError::InvalidReward(format!("weight {} is not finite", g.weight)));
        }
        if env.is_valid(&g.goal) {
            continue;
        }
        return Err(match (env, g.goal) {
            (Env::DiscreteMaze(m), State::Cell(c)) if c < m.num_cells() => FbError::WallCell(c),
            _ => FbError::InvalidReward(format!("goal {:?} is not a state of {}", g.goal, env.id())),
        });
    }
    Ok(())
}

/// `z_R = Σ_i w_i B(g_i)`.
pub fn zr_from_goals<M: BackwardMap + ?Sized>(model: &M, goals: &[WeightedGoal]) -> Result<TaskVector> {
    if goals.is_empty() {
        return Err(FbError::InvalidReward("no goals".into()));
    }
    let mut z = vec![0.0; model.dim()];
    for g in goals {
        let b = model.backward(&g.goal, Action(0))?;
        for (zi, bi) in z.iter_mut().zip(&b) {
            *zi += g.weight * bi;
        }
    }
    Ok(TaskVector(z))
}

fn weighted_mean<M: BackwardMap + ?Sized>(model: &M, rows: &[(State, Action, f64)]) -> Result<TaskVector> {
    let mut z = vec![0.0; model.dim()];
    for chunk in rows.chunks(CHUNK) {
        let pairs: Vec<(State, Action)> = chunk.iter().map(|&(s, a, _)| (s, a)).collect();
        let b = model.backward_batch(&pairs)?;
        for (row, &(_, _, r)) in b.rows().into_iter().zip(chunk) {
            if r == 0.0 {
                continue;
            }
            for (zi, bi) in z.iter_mut().zip(row.iter()) {
                *zi += r * bi;
            }
        }
    }
    let n = rows.len() as f64;
    z.iter_mut().for_each(|v| *v /= n);
    Ok(TaskVector(z))
}

/// Empirical mean of `r(s, a) B(s, a)` over the buffer: every entry once when
/// `n_samples` is `None`, otherwise `n` uniform draws with replacement.
pub fn zr_from_function<M, F, R>(
    model: &M,
    buffer: &ReplayBuffer,
    reward: F,
    n_samples: Option<usize>,
    rng: &mut R,
) -> Result<TaskVector>
where
    M: BackwardMap + ?Sized,
    F: Fn(&State, Action) -> f64,
    R: Rng + ?Sized,
{
    if buffer.is_empty() {
        return Err(FbError::EmptyReplay);
    }
    let rows: Vec<(State, Action, f64)> = match n_samples {
        None => buffer.iter().map(|t| (t.state, t.action, reward(&t.state, t.action))).collect(),
        Some(n) => {
            if n == 0 {
                return Err(FbError::InvalidReward("zero reward samples".into()));
            }
            buffer
                .sample_targets(n, rng)?
                .into_iter()
                .map(|(s, a)| (s, a, reward(&s, a)))
                .collect()
        }
    };
    weighted_mean(model, &rows)
}

/// `ẑ_R = (1/N) Σ r̂_i B(s_i, a_i)`.
pub fn zr_from_samples<M: BackwardMap + ?Sized>(model: &M, samples: &[(State, Action, f64)]) -> Result<TaskVector> {
    if samples.is_empty() {
        return Err(FbError::InvalidReward("no reward samples".into()));
    }
    if let Some((_, _, r)) = samples.iter().find(|(_, _, r)| !r.is_finite()) {
        return Err(FbError::InvalidReward(format!("reward {r} is not finite")));
    }
    weighted_mean(model, samples)
}

impl RewardSpec {
    /// Task vector of this spec. Function rewards use a full buffer pass.
    pub fn task_vector<M, R>(&self, model: &M, buffer: Option<&ReplayBuffer>, rng: &mut R) -> Result<TaskVector>
    where
        M: BackwardMap + ?Sized,
        R: Rng + ?Sized,
    {
        match self {
            RewardSpec::ExplicitGoals(goals) => zr_from_goals(model, goals),
            RewardSpec::FunctionReward(f) => {
                let buffer = buffer.ok_or(FbError::EmptyReplay)?;
                zr_from_function(model, buffer, |s, a| f(s, a), None, rng)
            }
            RewardSpec::SampleReward(samples) => zr_from_samples(model, samples),
        }
    }
}

/// Parse reward samples as CSV rows `cell,action,reward` (finite envs) or
/// `x,y,action,reward` (continuous maze). A header line is skipped if present.
pub fn parse_samples_csv(text: &str, env: &Env) -> Result<Vec<(State, Action, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let width = if env.is_discrete() { 3 } else { 4 };
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| FbError::InvalidReward(e.to_string()))?;
        if record.len() != width {
            return Err(FbError::InvalidReward(format!(
                "row {line}: expected {width} fields, got {}",
                record.len()
            )));
        }
        let nums: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let nums = match nums {
            Ok(n) => n,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(FbError::InvalidReward(format!("row {line}: {e}"))),
        };
        let index = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(FbError::InvalidReward(format!("row {line}: {v} is not an index")))
            }
        };
        let (state, action, r) = if env.is_discrete() {
            (State::Cell(index(nums[0])?), index(nums[1])?, nums[2])
        } else {
            (State::Point { x: nums[0], y: nums[1] }, index(nums[2])?, nums[3])
        };
        if !env.is_valid(&state) || action >= env.num_actions() {
            return Err(FbError::InvalidReward(format!("row {line}: invalid state-action")));
        }
        out.push((state, Action(action), r));
    }
    if out.is_empty() {
        return Err(FbError::InvalidReward("no reward samples".into()));
    }
    Ok(out)
}
