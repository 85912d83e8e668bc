// SPDX-License-Identifier: Apache-2.0

//! Read-only HTTP endpoints over the metadata store and the readings
//! repository.
//!
//! | route | body |
//! |---|---|
//! | `/bim/get/{crate_id}[/{children}]` | crate tree, `children` generations deep (default 0) |
//! | `/space/get_bim_floor_number/{floor}` | SVG floor plan |
//! | `/sensors/get/{acp_id}` | sensor metadata |
//! | `/sensors/bim/get/{crate_id}` | sensors in the crate or below it |
//! | `/readings/get/{acp_id}[?from=&to=]` | latest reading, or readings in a closed range |
//!
//! `from`/`to` are epoch seconds with up to six decimals; either may be
//! omitted to leave that end of the range open.

pub mod svg;

use std::sync::Arc;

use acp_model::Timestamp;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::store::{MetadataStore, ReadingsRepository, StoreError};

#[derive(Clone)]
pub struct ApiState {
    pub meta: Arc<MetadataStore>,
    pub readings: Arc<ReadingsRepository>,
    pub svg_scale: f64,
}

/// All endpoints, mounted under `prefix` (e.g. `/api`; empty for the root).
pub fn router(state: ApiState, prefix: &str) -> Router {
    let routes = Router::new()
        .route("/bim/get/{crate_id}", get(bim_get))
        .route("/bim/get/{crate_id}/{children}", get(bim_get_children))
        .route("/space/get_bim_floor_number/{floor}", get(floor_svg))
        .route("/sensors/get/{acp_id}", get(sensor_get))
        .route("/sensors/bim/get/{crate_id}", get(sensors_in_crate))
        .route("/readings/get/{acp_id}", get(readings_get))
        .with_state(state);
    let prefix = prefix.trim_end_matches('/');
    if prefix.is_empty() {
        routes
    } else {
        Router::new().nest(prefix, routes)
    }
}

#[derive(Debug)]
enum ApiError {
    BadRequest(String),
    NotFound { key: &'static str, id: String, what: String },
    Internal(String),
}

impl ApiError {
    fn from_store(err: StoreError, key: &'static str) -> Self {
        match err {
            StoreError::NotFound { kind, id } => ApiError::NotFound { key, what: format!("{kind} not found"), id },
            StoreError::InvalidArgument(m) => ApiError::BadRequest(m),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, Json(json!({"error": m}))).into_response(),
            ApiError::NotFound { key, id, what } => (StatusCode::NOT_FOUND, Json(json!({"error": what, key: id}))).into_response(),
            ApiError::Internal(m) => {
                tracing::error!(error = %m, "request failed");
                (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "internal error"}))).into_response()
            }
        }
    }
}

type ApiResult = Result<Response, ApiError>;

fn parse_depth(raw: &str) -> Result<usize, ApiError> {
    match raw {
        "true" => Ok(1),
        "false" => Ok(0),
        _ => raw
            .parse::<usize>()
            .map_err(|_| ApiError::BadRequest(format!("children must be a non-negative integer, got {raw:?}"))),
    }
}

async fn bim_get(State(st): State<ApiState>, Path(crate_id): Path<String>) -> ApiResult {
    crate_tree(&st, &crate_id, 0)
}

async fn bim_get_children(State(st): State<ApiState>, Path((crate_id, children)): Path<(String, String)>) -> ApiResult {
    crate_tree(&st, &crate_id, parse_depth(&children)?)
}

fn crate_tree(st: &ApiState, crate_id: &str, depth: usize) -> ApiResult {
    let tree = st.meta.get_crate(crate_id, depth).map_err(|e| ApiError::from_store(e, "crate_id"))?;
    Ok(Json(tree).into_response())
}

async fn floor_svg(State(st): State<ApiState>, Path(floor): Path<String>) -> ApiResult {
    let floor: i64 = floor
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("floor must be an integer, got {floor:?}")))?;
    let crates = st.meta.crates_on_floor(floor);
    let body = svg::floor_svg(&crates, floor, st.svg_scale);
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], body).into_response())
}

async fn sensor_get(State(st): State<ApiState>, Path(acp_id): Path<String>) -> ApiResult {
    let sensor = st.meta.get_sensor(&acp_id).map_err(|e| ApiError::from_store(e, "acp_id"))?;
    Ok(Json(sensor).into_response())
}

async fn sensors_in_crate(State(st): State<ApiState>, Path(crate_id): Path<String>) -> ApiResult {
    let sensors = st
        .meta
        .sensors_in_crate(&crate_id, true)
        .map_err(|e| ApiError::from_store(e, "crate_id"))?;
    Ok(Json(sensors).into_response())
}

#[derive(Debug, Deserialize)]
struct RangeQuery {
    from: Option<String>,
    to: Option<String>,
}

fn parse_ts(raw: &str, field: &str) -> Result<Timestamp, ApiError> {
    Timestamp::parse_field(raw, field).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn readings_get(State(st): State<ApiState>, Path(acp_id): Path<String>, Query(q): Query<RangeQuery>) -> ApiResult {
    let no_data = || ApiError::NotFound { key: "acp_id", id: acp_id.clone(), what: "no readings".into() };
    if q.from.is_none() && q.to.is_none() {
        let latest = st
            .readings
            .latest_reading(&acp_id)
            .map_err(|e| ApiError::from_store(e, "acp_id"))?
            .ok_or_else(no_data)?;
        return Ok(Json(latest).into_response());
    }
    let from = q.from.as_deref().map(|s| parse_ts(s, "from")).transpose()?.unwrap_or(Timestamp::EPOCH);
    let to = q
        .to
        .as_deref()
        .map(|s| parse_ts(s, "to"))
        .transpose()?
        .unwrap_or(Timestamp::from_micros(u64::MAX));
    if from > to {
        return Err(ApiError::BadRequest(format!("from {from} is after to {to}")));
    }
    let readings = st
        .readings
        .readings_range(&acp_id, from, to)
        .map_err(|e| ApiError::from_store(e, "acp_id"))?;
    if readings.is_empty() && !st.meta.has_sensor(&acp_id) {
        return Err(no_data());
    }
    Ok(Json(readings).into_response())
}
