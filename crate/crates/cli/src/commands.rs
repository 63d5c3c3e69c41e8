//! Subcommands of the `fb` binary.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fbrep::envs::{EnvId, State};
use fbrep::eval::{evaluate, sample_eval_goals};
use fbrep::model::{FbModel, PolicyKind};
use fbrep::reward::{parse_goals, zr_from_goals};
use fbrep::train::{Hyperparams, Trainer};
use fbrep::{FbError, RandomStream};

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::wire::{self, EmbeddingKind, RolloutRequest, StateJson};

#[derive(Debug, Parser)]
#[command(name = "fb", version, about = "Train, evaluate and serve forward-backward models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write it with its per-epoch metrics.
    Train(TrainArgs),
    /// Score goal-reaching policies `π_{B(g)}`.
    Eval(EvalArgs),
    /// Roll one policy for a reward spec and print the trajectory.
    Rollout(RolloutArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write per-state F or B embeddings as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output model path.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output metrics CSV path.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// No per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args, Default)]
#[group(multiple = false)]
pub struct PolicyArgs {
    /// ε-greedy evaluation policy.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Boltzmann evaluation policy with this temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub greedy: bool,
}

impl PolicyArgs {
    fn kind(&self) -> Option<PolicyKind> {
        if let Some(epsilon) = self.epsilon {
            Some(PolicyKind::EpsilonGreedy { epsilon })
        } else if let Some(tau) = self.tau {
            Some(PolicyKind::Boltzmann { tau })
        } else if self.greedy {
            Some(PolicyKind::Greedy)
        } else {
            None
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Expected environment; a different one in the model file is an error.
    #[arg(long)]
    pub env: Option<String>,
    /// Number of random goals.
    #[arg(long, default_value_t = 20)]
    pub goals: usize,
    /// Explicit goal (`17` or `0.2,0.8`); repeatable, replaces `--goals`.
    #[arg(long = "goal")]
    pub goal_list: Vec<String>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rollout length for success-rate scoring.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Success distance for the continuous maze.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub starts_per_goal: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub env: Option<String>,
    /// Goals JSON (`{"goals":[{"cell":17,"w":1}]}`), or `@path` to read it.
    #[arg(long)]
    pub spec: String,
    /// Start state (`17` or `0.2,0.8`).
    #[arg(long)]
    pub start: String,
    #[arg(long, default_value_t = wire::DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Include the Q heatmap.
    #[arg(long)]
    pub heatmap: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "B")]
    pub kind: String,
    /// Comma-separated z for F (default zero).
    #[arg(long)]
    pub z: Option<String>,
    /// Grid side for the continuous maze.
    #[arg(long, default_value_t = wire::DEFAULT_GRID)]
    pub grid: usize,
    /// Output file (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Load a model and the hyperparameters echoed into it.
pub fn load_model(path: impl AsRef<std::path::Path>) -> fbrep::Result<(FbModel, Hyperparams)> {
    let (model, echo) = FbModel::load(path)?;
    let env = model.env().id();
    let hp = if echo.trim().is_empty() {
        Hyperparams::for_env(env)
    } else {
        Hyperparams::from_toml(&echo, env)?
    };
    Ok((model, hp))
}

fn load_checked(path: &PathBuf, env: Option<&str>) -> CliResult<(FbModel, Hyperparams)> {
    let (model, hp) = load_model(path).map_err(|e| match e {
        FbError::Io(io) => CliError::Runtime(format!("cannot read {}: {io}", path.display())),
        other => CliError::Runtime(other.to_string()),
    })?;
    if let Some(name) = env {
        let want: EnvId = name.parse()?;
        if want != model.env().id() {
            return Err(CliError::config(format!(
                "model {} was trained on {}, not {want}",
                path.display(),
                model.env().id()
            )));
        }
    }
    Ok((model, hp))
}

fn parse_state(text: &str) -> CliResult<State> {
    let bad = || CliError::config(format!("bad state {text:?}: expected a cell index or `x,y`"));
    match text.split_once(',') {
        Some((x, y)) => Ok(State::Point {
            x: x.trim().parse().map_err(|_| bad())?,
            y: y.trim().parse().map_err(|_| bad())?,
        }),
        None => Ok(State::Cell(text.trim().parse().map_err(|_| bad())?)),
    }
}

pub fn train(args: &TrainArgs) -> CliResult<Value> {
    let text = match &args.config {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let ov = Overrides {
        env: args.env.clone(),
        d: args.d,
        epochs: args.epochs,
        seed: args.seed,
        model: args.model.clone(),
        metrics: args.metrics.clone(),
    };
    let run = RunConfig::resolve(text.as_deref(), &ov)?;
    let hp = run.hyperparams.clone();
    let mut trainer = Trainer::new(fbrep::envs::Env::from_id(run.env), hp.clone())?;
    let quiet = args.quiet;
    let outcome = trainer.run_with(|r| {
        if !quiet {
            let eval = r.eval_score.map(|v| format!(" eval {v:.4}")).unwrap_or_default();
            eprintln!(
                "epoch {:>4} fb_loss {:.4} reg_loss {:.4} covB_err {:.4}{eval}",
                r.epoch, r.fb_loss, r.reg_loss, r.cov_b_err
            );
        }
    });
    let mut csv = Vec::new();
    trainer.report().write_csv(&mut csv)?;
    fs::write(&run.metrics, csv)?;
    outcome?;
    trainer.model().save(&run.model, &hp.to_toml())?;
    Ok(json!({
        "env": run.env.to_string(),
        "epochs": trainer.report().records.len(),
        "model": run.model,
        "metrics": run.metrics,
        "last_eval": trainer.report().last_eval(),
    }))
}

pub fn eval(args: &EvalArgs) -> CliResult<Value> {
    let (model, hp) = load_checked(&args.model, args.env.as_deref())?;
    let env = model.env();
    let mut config = hp.eval.clone();
    if let Some(kind) = args.policy.kind() {
        kind.validate()?;
        config.policy = kind;
    }
    if let Some(h) = args.horizon {
        config.horizon = h;
    }
    if let Some(t) = args.threshold {
        config.success_threshold = t;
    }
    if let Some(n) = args.starts_per_goal {
        config.starts_per_goal = n;
    }
    let mut rng = RandomStream::new(args.seed);
    let goals: Vec<State> = if args.goal_list.is_empty() {
        sample_eval_goals(env, args.goals, &mut rng)
    } else {
        args.goal_list.iter().map(|g| parse_state(g)).collect::<CliResult<_>>()?
    };
    for g in &goals {
        wire::check_state(env, g)?;
    }
    let report = evaluate(&model, &goals, &config, hp.gamma, fbrep::exec::Exec::default(), &mut rng)?;
    let metric = if env.is_discrete() { "policy_quality" } else { "success_rate" };
    Ok(json!({
        "env": env.id().to_string(),
        "metric": metric,
        "policy": config.policy,
        "goals": goals.iter().map(|&g| StateJson::from(g)).collect::<Vec<_>>(),
        "per_goal": report.per_goal,
        "mean": report.mean,
        "median": report.median,
    }))
}

pub fn rollout(args: &RolloutArgs) -> CliResult<Value> {
    let (model, hp) = load_checked(&args.model, args.env.as_deref())?;
    let text = match args.spec.strip_prefix('@') {
        Some(path) => fs::read_to_string(path)?,
        None => args.spec.clone(),
    };
    let goals = parse_goals(&text, model.env())?;
    let z = zr_from_goals(&model, &goals)?;
    let kind = args.policy.kind().unwrap_or(PolicyKind::Greedy);
    let policy = match kind {
        PolicyKind::Greedy => wire::PolicyJson::Named("greedy".into()),
        PolicyKind::EpsilonGreedy { epsilon } => wire::PolicyJson::Eps { eps: epsilon },
        PolicyKind::Boltzmann { tau } => wire::PolicyJson::Tau { tau },
    };
    let req = RolloutRequest {
        z_r: z.0,
        start: parse_state(&args.start)?.into(),
        policy: Some(policy),
        max_steps: Some(args.max_steps),
        seed: Some(args.seed),
        targets: goals.iter().filter(|g| g.weight > 0.0).map(|g| g.goal.into()).collect(),
        heatmap: args.heatmap,
    };
    let result = wire::run_rollout(&model, &req, hp.eval.success_threshold)?;
    Ok(serde_json::to_value(result).expect("rollout serializes"))
}

pub fn export(args: &ExportArgs) -> CliResult<String> {
    let (model, _) = load_checked(&args.model, None)?;
    let kind: EmbeddingKind = args.kind.parse()?;
    let z = match &args.z {
        Some(text) => Some(
            text.split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::config(format!("bad z entry {t:?}"))))
                .collect::<CliResult<Vec<f64>>>()?,
        ),
        None => None,
    };
    let csv = wire::embedding(&model, kind, z.as_deref(), args.grid)?.to_csv();
    match &args.out {
        Some(path) => {
            fs::write(path, &csv)?;
            Ok(String::new())
        }
        None => Ok(csv),
    }
}

pub fn serve(args: &ServeArgs) -> CliResult<()> {
    let (model, hp) = load_checked(&args.model, None)?;
    let state = crate::api::ServiceState::new(model, hp);
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(crate::api::serve(state, &addr))?;
    Ok(())
}

/// Run one parsed command, returning what should go to stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    let pretty = |v: Value| serde_json::to_string_pretty(&v).expect("json serializes") + "\n";
    match &cli.command {
        Command::Train(a) => train(a).map(pretty),
        Command::Eval(a) => eval(a).map(pretty),
        Command::Rollout(a) => rollout(a).map(pretty),
        Command::Export(a) => export(a),
        Command::Serve(a) => serve(a).map(|_| String::new()),
    }
}
