//! HTTP service over one immutable model.
//!
//! Bodies are parsed by hand so that malformed JSON maps to 400, leaving 422
//! for well-formed specs that name wall cells.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State as AxState};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use fbrep::envs::{Env, MAZE_ACTION_NAMES};
use fbrep::model::{FbModel, TaskVector};
use fbrep::reward::{goals_from_json, zr_from_goals, GoalsJson};
use fbrep::train::Hyperparams;
use fbrep::FbError;

use crate::wire::{self, EmbeddingKind, RolloutRequest, StateJson, DEFAULT_GRID};

/// The loaded model and the training settings echoed in its file.
pub struct ServiceState {
    pub model: FbModel,
    pub hyperparams: Hyperparams,
}

impl ServiceState {
    pub fn new(model: FbModel, hyperparams: Hyperparams) -> Self {
        ServiceState { model, hyperparams }
    }

    pub fn load(path: impl AsRef<Path>) -> fbrep::Result<Self> {
        let (model, hyperparams) = crate::load_model(path)?;
        Ok(Self::new(model, hyperparams))
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<FbError> for ApiError {
    fn from(e: FbError) -> Self {
        let status = match e {
            FbError::WallCell(_) => StatusCode::UNPROCESSABLE_ENTITY,
            FbError::InvalidReward(_)
            | FbError::Config(_)
            | FbError::Shape { .. }
            | FbError::UnsupportedEnv(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = Arc<ServiceState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/env", get(env_info))
        .route("/api/reward-spec", post(reward_spec))
        .route("/api/rollout", post(rollout))
        .route("/api/heatmap", get(heatmap))
        .route("/api/embedding", get(embedding))
        .fallback(not_found)
        .with_state(state)
}

/// Bind and serve until Ctrl-C.
pub async fn serve(state: ServiceState, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

/// Run model work off the async workers.
async fn blocking<T, F>(state: Shared, f: F) -> ApiResult<T>
where
    T: Serialize + Send + 'static,
    F: FnOnce(&ServiceState) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        })?
        .map(Json)
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        message: "no such route".into(),
    }
}

async fn env_info(AxState(state): AxState<Shared>) -> Json<Value> {
    let model = &state.model;
    let hp = &state.hyperparams;
    let env = model.env();
    let mut info = json!({
        "id": env.id().to_string(),
        "discrete": env.is_discrete(),
        "num_actions": env.num_actions(),
        "d": model.d(),
        "gamma": hp.gamma,
        "success_threshold": hp.eval.success_threshold,
        "default_max_steps": wire::DEFAULT_MAX_STEPS,
    });
    let extra = match env {
        Env::DiscreteMaze(m) => json!({
            "action_names": MAZE_ACTION_NAMES,
            "width": m.width(),
            "height": m.height(),
            "walls": (0..m.num_cells()).map(|c| m.is_wall(c)).collect::<Vec<_>>(),
            "open_cells": m.open_cells(),
        }),
        Env::ContinuousMaze(m) => json!({
            "action_names": MAZE_ACTION_NAMES,
            "bounds": [[0.0, 1.0], [0.0, 1.0]],
            "wall_segments": m.walls().iter().map(|s| [[s.a.0, s.a.1], [s.b.0, s.b.1]]).collect::<Vec<_>>(),
            "grid": DEFAULT_GRID,
        }),
        Env::Cycle(c) => json!({
            "action_names": ["minus", "stay", "plus"],
            "width": c.len(),
            "height": 1,
        }),
    };
    if let (Value::Object(a), Value::Object(b)) = (&mut info, extra) {
        a.extend(b);
    }
    Json(info)
}

fn task_vector(state: &ServiceState, doc: &GoalsJson) -> Result<TaskVector, ApiError> {
    let goals = goals_from_json(doc, state.model.env())?;
    Ok(zr_from_goals(&state.model, &goals)?)
}

async fn reward_spec(AxState(state): AxState<Shared>, body: Bytes) -> ApiResult<Value> {
    let doc: GoalsJson = parse_json(&body)?;
    blocking(state, move |s| {
        let z = task_vector(s, &doc)?;
        Ok(json!({ "norm": z.norm(), "z_r": z.0 }))
    })
    .await
}

async fn rollout(AxState(state): AxState<Shared>, body: Bytes) -> ApiResult<wire::RolloutResult> {
    let req: RolloutRequest = parse_json(&body)?;
    blocking(state, move |s| {
        Ok(wire::run_rollout(&s.model, &req, s.hyperparams.eval.success_threshold)?)
    })
    .await
}

fn grid_param(q: &HashMap<String, String>) -> Result<usize, ApiError> {
    match q.get("grid") {
        Some(g) => g.parse().map_err(|_| ApiError::bad_request(format!("bad grid {g:?}"))),
        None => Ok(DEFAULT_GRID),
    }
}

async fn heatmap(AxState(state): AxState<Shared>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Value> {
    let spec = q.get("spec").ok_or_else(|| ApiError::bad_request("missing `spec` query parameter"))?;
    let doc: GoalsJson = parse_json(spec.as_bytes())?;
    let grid = grid_param(&q)?;
    blocking(state, move |s| {
        let z = task_vector(s, &doc)?;
        let map = wire::q_heatmap(&s.model, &z.0, grid)?;
        Ok(json!({ "norm": z.norm(), "z_r": z.0, "heatmap": map }))
    })
    .await
}

fn parse_vector(text: &str) -> Result<Vec<f64>, ApiError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ApiError::bad_request(format!("bad vector entry {t:?}")))
        })
        .collect()
}

async fn embedding(AxState(state): AxState<Shared>, Query(q): Query<HashMap<String, String>>) -> ApiResult<Value> {
    let kind: EmbeddingKind = q.get("kind").map(String::as_str).unwrap_or("B").parse()?;
    let z = q.get("z").map(|t| parse_vector(t)).transpose()?;
    let grid = grid_param(&q)?;
    blocking(state, move |s| {
        let e = wire::embedding(&s.model, kind, z.as_deref(), grid)?;
        let states: Vec<StateJson> = e.states.iter().map(|&s| s.into()).collect();
        let vectors: Vec<Vec<f64>> = e.vectors.rows().into_iter().map(|r| r.to_vec()).collect();
        Ok(json!({ "kind": kind, "d": s.model.d(), "states": states, "vectors": vectors }))
    })
    .await
}
