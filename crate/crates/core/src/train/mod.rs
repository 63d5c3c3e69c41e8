//! Unsupervised FB training.
//!
//! Each epoch runs `cycles_per_epoch` cycles of: collect episodes with the
//! behaviour policy, run `updates_per_cycle` Adam updates on fresh
//! mini-batches, then Polyak-average both target networks once.

mod config;
mod loss;

use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffnet::{Adam, AdamConfig};
use crate::envs::{Action, Env, State};
use crate::error::{FbError, Result};
use crate::eval::{evaluate, sample_eval_goals, EvalReport};
use crate::exec::Exec;
use crate::model::{sample_z, FbModel, PolicyKind};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::RandomStream;

pub use config::{EvalConfig, Hyperparams};
pub use loss::{
    fb_loss, fb_loss_matrices, loss_and_gradients, ortho_reg_loss, ortho_reg_matrices, Batch, FbLossGrads,
    StepOutput,
};

/// Losses above this magnitude abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// RNG stream indices derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_COLLECT: u64 = 1;
const STREAM_UPDATE: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_COV: u64 = 4;

/// Samples used to estimate Cov B on environments without a finite state set.
const COV_SAMPLES: usize = 2048;

/// Roll `episodes` behaviour-policy episodes and push their transitions.
///
/// Each episode draws its own `z`; with `ε = 1` the behaviour is uniform and
/// the model is not queried.
pub fn collect_episodes<R: Rng + ?Sized>(
    env: &Env,
    model: &FbModel,
    episodes: usize,
    steps: usize,
    epsilon: f64,
    buffer: &mut ReplayBuffer,
    rng: &mut R,
) -> Result<()> {
    let na = env.num_actions();
    let behaviour = PolicyKind::EpsilonGreedy { epsilon };
    for _ in 0..episodes {
        let z = sample_z(model.d(), rng);
        let mut s = env.reset(rng);
        for _ in 0..steps {
            let a = if epsilon >= 1.0 {
                Action(rng.random_range(0..na))
            } else {
                behaviour.sample(&model.q_values(&s, z.as_slice())?, rng)
            };
            let next = env.step(&s, a, rng);
            buffer.push(Transition::new(s, a, next));
            s = next;
        }
    }
    Ok(())
}

/// `‖Cov B − I‖_F` under the buffer distribution: exact over buffer counts
/// on finite environments, from `COV_SAMPLES` draws otherwise.
pub fn cov_b_error<R: Rng + ?Sized>(model: &FbModel, buffer: &ReplayBuffer, rng: &mut R) -> Result<f64> {
    if buffer.is_empty() {
        return Err(FbError::EmptyReplay);
    }
    let (states, weights): (Vec<State>, Vec<f64>) = match model.env().num_states() {
        Some(n) => {
            let mut counts = vec![0usize; n];
            for t in buffer.iter() {
                counts[t.state.cell().expect("finite env state")] += 1;
            }
            let total = buffer.len() as f64;
            (0..n)
                .filter(|&c| counts[c] > 0)
                .map(|c| (State::Cell(c), counts[c] as f64 / total))
                .unzip()
        }
        None => {
            let picks = buffer.sample_targets(COV_SAMPLES, rng)?;
            let w = 1.0 / picks.len() as f64;
            picks.into_iter().map(|(s, _)| (s, w)).unzip()
        }
    };
    let b = model.forward_b_batch(model.b_inputs(&states).view())?;
    let mut weighted = b.clone();
    for (mut row, w) in weighted.rows_mut().into_iter().zip(&weights) {
        row *= *w;
    }
    let mut cov: Array2<f64> = b.t().dot(&weighted);
    for i in 0..cov.nrows() {
        cov[[i, i]] -= 1.0;
    }
    Ok(cov.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Metrics of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean FB loss over the epoch's updates.
    pub fb_loss: f64,
    /// Mean regularizer loss over the epoch's updates.
    pub reg_loss: f64,
    /// `‖Cov B − I‖_F` at the end of the epoch.
    pub cov_b_err: f64,
    /// Mean evaluation score, when evaluated this epoch.
    pub eval_score: Option<f64>,
}

pub const CSV_HEADER: &str = "epoch,fb_loss,reg_loss,covB_err,eval_score";

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        let eval = self.eval_score.map(|v| v.to_string()).unwrap_or_default();
        format!("{},{},{},{},{}", self.epoch, self.fb_loss, self.reg_loss, self.cov_b_err, eval)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn last_eval(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.eval_score)
    }
}

/// Training state; drive it with [`Trainer::run_epoch`] or [`Trainer::run`].
pub struct Trainer {
    env: Env,
    hp: Hyperparams,
    model: FbModel,
    buffer: ReplayBuffer,
    adam_f: Adam,
    adam_b: Adam,
    rng_collect: RandomStream,
    rng_update: RandomStream,
    rng_eval: RandomStream,
    rng_cov: RandomStream,
    eval_goals: Vec<State>,
    exec: Exec,
    epoch: usize,
    report: TrainReport,
    last_eval: Option<EvalReport>,
}

impl Trainer {
    pub fn new(env: Env, hp: Hyperparams) -> Result<Self> {
        hp.validate()?;
        let mut rng_init = RandomStream::with_stream(hp.seed, STREAM_INIT);
        let model = FbModel::new(env.clone(), &hp.arch(), &mut rng_init);
        let mut rng_eval = RandomStream::with_stream(hp.seed, STREAM_EVAL);
        let eval_goals = sample_eval_goals(&env, hp.eval.goals, &mut rng_eval);
        let config = AdamConfig::new(hp.learning_rate);
        Ok(Trainer {
            adam_f: Adam::new(config.clone(), &model.f_net),
            adam_b: Adam::new(config, &model.b_net),
            buffer: ReplayBuffer::new(hp.replay_capacity),
            rng_collect: RandomStream::with_stream(hp.seed, STREAM_COLLECT),
            rng_update: RandomStream::with_stream(hp.seed, STREAM_UPDATE),
            rng_cov: RandomStream::with_stream(hp.seed, STREAM_COV),
            rng_eval,
            eval_goals,
            exec: Exec::default(),
            epoch: 0,
            report: TrainReport::default(),
            last_eval: None,
            env,
            hp,
            model,
        })
    }

    /// Where evaluation fans out; training itself is sequential.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn model(&self) -> &FbModel {
        &self.model
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn eval_goals(&self) -> &[State] {
        &self.eval_goals
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn last_eval(&self) -> Option<&EvalReport> {
        self.last_eval.as_ref()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// One gradient update on a fresh batch; returns `(fb_loss, reg_loss)`.
    pub fn update(&mut self) -> Result<(f64, f64)> {
        let batch = Batch::sample(&self.buffer, self.hp.batch_size, self.hp.d, &mut self.rng_update)?;
        let out = loss_and_gradients(&self.model, &batch, self.hp.gamma, self.hp.tau, self.hp.lambda_reg)?;
        self.adam_f.step(&mut self.model.f_net, &out.f_grad)?;
        self.adam_b.step(&mut self.model.b_net, &out.b_grad)?;
        Ok((out.fb_loss, out.reg_loss))
    }

    /// One cycle: collect, update, then Polyak-average the targets.
    /// Returns the summed `(fb_loss, reg_loss)` over the updates.
    pub fn cycle(&mut self, cycle: usize) -> Result<(f64, f64)> {
        let hp = &self.hp;
        collect_episodes(
            &self.env,
            &self.model,
            hp.episodes_per_cycle,
            hp.steps_per_episode,
            hp.explore_epsilon,
            &mut self.buffer,
            &mut self.rng_collect,
        )?;
        let (mut fb_sum, mut reg_sum) = (0.0, 0.0);
        for _ in 0..self.hp.updates_per_cycle {
            let (fb, reg) = self.update()?;
            if !fb.is_finite() || !reg.is_finite() {
                return Err(FbError::NonFiniteLoss { epoch: self.epoch, cycle });
            }
            for loss in [fb, reg] {
                if loss.abs() > DIVERGENCE_THRESHOLD {
                    return Err(FbError::Divergence { epoch: self.epoch, cycle, loss });
                }
            }
            fb_sum += fb;
            reg_sum += reg;
        }
        self.model.f_target.polyak_update(&self.model.f_net, self.hp.polyak);
        self.model.b_target.polyak_update(&self.model.b_net, self.hp.polyak);
        Ok((fb_sum, reg_sum))
    }

    /// Evaluate on the fixed goals.
    pub fn evaluate(&mut self) -> Result<EvalReport> {
        let mut rng = self.rng_eval.split();
        evaluate(&self.model, &self.eval_goals, &self.hp.eval, self.hp.gamma, self.exec, &mut rng)
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let (mut fb_sum, mut reg_sum) = (0.0, 0.0);
        for cycle in 0..self.hp.cycles_per_epoch {
            let (fb, reg) = self.cycle(cycle)?;
            fb_sum += fb;
            reg_sum += reg;
        }
        let updates = (self.hp.cycles_per_epoch * self.hp.updates_per_cycle).max(1) as f64;
        let cov_b_err = if self.buffer.is_empty() {
            f64::NAN
        } else {
            cov_b_error(&self.model, &self.buffer, &mut self.rng_cov)?
        };
        let every = self.hp.eval.every;
        let is_last = self.epoch + 1 == self.hp.epochs;
        let eval_score = if every > 0 && ((self.epoch + 1) % every == 0 || is_last) {
            let report = self.evaluate()?;
            let mean = report.mean;
            self.last_eval = Some(report);
            Some(mean)
        } else {
            None
        };
        let record = EpochRecord {
            epoch: self.epoch,
            fb_loss: fb_sum / updates,
            reg_loss: reg_sum / updates,
            cov_b_err,
            eval_score,
        };
        self.epoch += 1;
        self.report.records.push(record.clone());
        Ok(record)
    }

    /// Run the remaining epochs, calling `on_epoch` after each.
    pub fn run_with(&mut self, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<()> {
        while self.epoch < self.hp.epochs {
            let record = self.run_epoch()?;
            on_epoch(&record);
        }
        Ok(())
    }

    pub fn into_parts(self) -> (FbModel, TrainReport, ReplayBuffer) {
        (self.model, self.report, self.buffer)
    }
}

/// Train from scratch with `hp` (seeded by `hp.seed`).
pub fn train(env: Env, hp: Hyperparams) -> Result<(FbModel, TrainReport)> {
    let mut trainer = Trainer::new(env, hp)?;
    trainer.run_with(|_| {})?;
    let (model, report, _) = trainer.into_parts();
    Ok((model, report))
}
