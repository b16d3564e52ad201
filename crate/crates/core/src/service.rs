//! HTTP front end for [`Advisor`](crate::advisor::Advisor).
//!
//! Endpoints: `POST /sessions`, `POST /sessions/{id}/steps`,
//! `GET /sessions/{id}`, `GET /boundary`. Errors are returned as
//! `{code, field?, message}`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::advisor::{boundary_rows, Advisor, PolicyChoice, ResolvedPolicy, SessionParams, SessionRequest, StepRequest};
use crate::error::Error;
use crate::model::CostParams;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

pub struct ApiFailure(StatusCode, ApiError);

impl ApiFailure {
    fn new(status: StatusCode, code: &str, field: Option<&str>, message: impl Into<String>) -> Self {
        ApiFailure(
            status,
            ApiError {
                code: code.into(),
                field: field.map(Into::into),
                message: message.into(),
            },
        )
    }
}

impl From<Error> for ApiFailure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter { field, .. } => {
                ApiFailure::new(StatusCode::BAD_REQUEST, "invalid_parameter", Some(field), msg)
            }
            Error::UnknownSession(_) => ApiFailure::new(StatusCode::NOT_FOUND, "not_found", None, msg),
            Error::SessionEnded(_) => ApiFailure::new(StatusCode::CONFLICT, "session_ended", None, msg),
            Error::InvalidStep(_) => ApiFailure::new(StatusCode::BAD_REQUEST, "invalid_step", None, msg),
            Error::Infeasible { .. } => ApiFailure::new(StatusCode::BAD_REQUEST, "infeasible", Some("rho"), msg),
            Error::Structure(_) => ApiFailure::new(StatusCode::BAD_REQUEST, "invalid_set", Some("set"), msg),
            _ => ApiFailure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", None, msg),
        }
    }
}

impl From<JsonRejection> for ApiFailure {
    fn from(r: JsonRejection) -> Self {
        ApiFailure::new(StatusCode::BAD_REQUEST, "bad_request", None, r.body_text())
    }
}

impl From<QueryRejection> for ApiFailure {
    fn from(r: QueryRejection) -> Self {
        ApiFailure::new(StatusCode::BAD_REQUEST, "bad_request", None, r.body_text())
    }
}

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiFailure>;

/// Query of `GET /boundary`: session parameters plus a flat policy selector.
#[derive(Debug, Clone, Deserialize)]
pub struct BoundaryQuery {
    pub p: f64,
    pub q: f64,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    #[serde(alias = "pm")]
    pub p_m: Option<f64>,
    pub gamma: Option<f64>,
    pub policy: Option<String>,
    pub r_th: Option<f64>,
    pub rho: Option<f64>,
    pub seed: Option<u64>,
}

impl BoundaryQuery {
    pub fn params(&self) -> SessionParams {
        SessionParams {
            p: self.p,
            q: self.q,
            lambda: self.lambda.unwrap_or(0.0),
            eta: self.eta.unwrap_or(CostParams::DEFAULT_ETA),
            p_m: self.p_m.unwrap_or(CostParams::DEFAULT_P_M),
            gamma: self.gamma.unwrap_or(CostParams::DEFAULT_GAMMA),
        }
    }

    fn choice(&self) -> ApiResult<PolicyChoice> {
        let missing = |field: &str| {
            ApiFailure::new(
                StatusCode::BAD_REQUEST,
                "invalid_parameter",
                Some(field),
                format!("`{field}` is required for this policy"),
            )
        };
        match self.policy.as_deref().unwrap_or("optimal") {
            "optimal" => Ok(PolicyChoice::Optimal),
            "heuristic" => Ok(PolicyChoice::Heuristic {
                r_th: self.r_th.ok_or_else(|| missing("r_th"))?,
            }),
            "constrained" => Ok(PolicyChoice::Constrained {
                rho: self.rho.ok_or_else(|| missing("rho"))?,
                seed: self.seed.unwrap_or(0),
            }),
            other => Err(ApiFailure::new(
                StatusCode::BAD_REQUEST,
                "invalid_parameter",
                Some("policy"),
                format!("unknown policy `{other}` (expected optimal, heuristic or constrained)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryView {
    pub params: SessionParams,
    pub policy: ResolvedPolicy,
    pub boundary: Vec<(u64, u64)>,
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> crate::Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiFailure::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", None, e.to_string()))?
        .map_err(ApiFailure::from)
}

async fn create_session(
    State(adv): State<Arc<Advisor>>,
    body: std::result::Result<Json<SessionRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    let view = blocking(move || adv.create(&req)).await?;
    tracing::info!(id = %view.id, "session created");
    Ok((StatusCode::CREATED, Json(view)))
}

async fn apply_step(
    State(adv): State<Arc<Advisor>>,
    Path(id): Path<String>,
    body: std::result::Result<Json<StepRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(step) = body?;
    Ok(Json(adv.step(&id, step)?))
}

async fn get_session(State(adv): State<Arc<Advisor>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(adv.get(&id)?))
}

async fn get_boundary(
    State(adv): State<Arc<Advisor>>,
    query: std::result::Result<Query<BoundaryQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(query) = query?;
    let choice = query.choice()?;
    let params = query.params();
    let policy = blocking(move || adv.policy(&params, &choice)).await?;
    Ok(Json(BoundaryView {
        params,
        boundary: boundary_rows(&policy.set),
        policy: (*policy).clone(),
    }))
}

/// Builds the router; `static_dir`, when given, is served for every other path.
pub fn router(advisor: Arc<Advisor>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/steps", post(apply_step))
        .route("/boundary", get(get_boundary))
        .with_state(advisor);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(addr: SocketAddr, advisor: Arc<Advisor>, static_dir: Option<PathBuf>) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "advisor listening");
    axum::serve(listener, router(advisor, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
