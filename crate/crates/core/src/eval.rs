//! Goal-reaching evaluation of a trained model with `z_R = B(g)`.
//!
//! Finite environments are scored by policy quality against the exact
//! optimum; the continuous maze by the success rate of rollouts.

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::envs::{Action, Env, State};
use crate::error::{FbError, Result};
use crate::exec::Exec;
use crate::model::{FbModel, PolicyKind, PolicySpec, TaskVector};
use crate::oracle::{goal_quality, TabularPolicy};
use crate::rng::RandomStream;
use crate::train::EvalConfig;

/// `n` goal states: distinct open cells when there are enough, otherwise
/// uniform draws; uniform points on the continuous square.
pub fn sample_eval_goals<R: Rng + ?Sized>(env: &Env, n: usize, rng: &mut R) -> Vec<State> {
    match env.valid_cells() {
        Some(cells) if n <= cells.len() => sample_indices(rng, cells.len(), n)
            .into_iter()
            .map(|i| State::Cell(cells[i]))
            .collect(),
        Some(cells) => (0..n).map(|_| State::Cell(cells[rng.random_range(0..cells.len())])).collect(),
        None => (0..n).map(|_| env.reset(rng)).collect(),
    }
}

/// Evaluation policy of a finite environment as a table (one row per
/// environment state; unreachable rows uniform).
pub fn tabular_policy(model: &FbModel, z: &[f64], kind: PolicyKind) -> Result<TabularPolicy> {
    let env = model.env();
    let (Some(n), Some(cells)) = (env.num_states(), env.valid_cells()) else {
        return Err(FbError::UnsupportedEnv(env.id().to_string()));
    };
    let na = env.num_actions();
    let states: Vec<State> = cells.iter().map(|&c| State::Cell(c)).collect();
    let q = model.q_values_batch(&states, z)?;
    let mut probs = vec![1.0 / na as f64; n * na];
    for (row, &c) in cells.iter().enumerate() {
        let p = kind.probabilities(q.row(row).as_slice().expect("contiguous row"));
        probs[c * na..(c + 1) * na].copy_from_slice(&p);
    }
    TabularPolicy::new(n, na, probs)
}

/// Policy quality of `π_{B(goal)}` on a finite environment.
pub fn goal_policy_quality(model: &FbModel, goal: usize, kind: PolicyKind, gamma: f64) -> Result<f64> {
    let env = model.env();
    let state = State::Cell(goal);
    if !env.is_valid(&state) {
        return Err(match env {
            Env::DiscreteMaze(m) if goal < m.num_cells() => FbError::WallCell(goal),
            _ => FbError::shape("a valid goal cell", goal),
        });
    }
    let z = model.backward_state(&state);
    let policy = tabular_policy(model, &z, kind)?;
    let cells = env.valid_cells().expect("finite env");
    goal_quality(&env.exact_dynamics()?, &cells, &policy, goal, gamma)
}

/// Outcome of one rollout toward a continuous goal.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub states: Vec<State>,
    pub final_distance: f64,
}

pub fn distance(a: &State, b: &State) -> Option<f64> {
    let (ax, ay) = a.point()?;
    let (bx, by) = b.point()?;
    Some((ax - bx).hypot(ay - by))
}

/// Roll the policy `spec` for `horizon` steps from `start`.
pub fn rollout<R: Rng + ?Sized>(
    model: &FbModel,
    spec: &PolicySpec,
    start: State,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<State>> {
    let env = model.env();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut s = start;
    states.push(s);
    for _ in 0..horizon {
        let a: Action = model.act(&s, spec, rng)?;
        s = env.step(&s, a, rng);
        states.push(s);
    }
    Ok(states)
}

/// Fraction of `starts` rollouts from random states ending within
/// `threshold` of `goal`.
pub fn goal_success_rate<R: Rng + ?Sized>(
    model: &FbModel,
    goal: &State,
    config: &EvalConfig,
    rng: &mut R,
) -> Result<f64> {
    if goal.point().is_none() {
        return Err(FbError::UnsupportedEnv(model.env().id().to_string()));
    }
    let spec = PolicySpec {
        kind: config.policy,
        z: TaskVector(model.backward_state(goal)),
    };
    let starts = config.starts_per_goal.max(1);
    let mut hits = 0;
    for _ in 0..starts {
        let start = model.env().reset(rng);
        let path = rollout(model, &spec, start, config.horizon, rng)?;
        let last = path.last().expect("start is recorded");
        if distance(last, goal).expect("continuous states") < config.success_threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / starts as f64)
}

/// Per-goal scores and their mean and median.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_goal: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

impl EvalReport {
    pub fn from_scores(per_goal: Vec<f64>) -> Self {
        let n = per_goal.len().max(1) as f64;
        let mean = per_goal.iter().sum::<f64>() / n;
        EvalReport {
            median: median(&per_goal),
            mean,
            per_goal,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Score `model` on `goals`: policy quality on finite environments, success
/// rate on the continuous maze. Each goal gets its own RNG stream split from
/// `rng`, so results do not depend on `exec`.
pub fn evaluate(
    model: &FbModel,
    goals: &[State],
    config: &EvalConfig,
    gamma: f64,
    exec: Exec,
    rng: &mut RandomStream,
) -> Result<EvalReport> {
    let streams = rng.split_n(goals.len());
    let jobs: Vec<(State, RandomStream)> = goals.iter().copied().zip(streams).collect();
    let scores = exec.map_owned(jobs, |(goal, mut stream)| match goal {
        State::Cell(c) => goal_policy_quality(model, c, config.policy, gamma),
        State::Point { .. } => goal_success_rate(model, &goal, config, &mut stream),
    });
    Ok(EvalReport::from_scores(scores.into_iter().collect::<Result<Vec<_>>>()?))
}
