//! HTTP API. Every response carries an `x-latency-ms` header with the time
//! spent handling the request.

use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gesturegen_core::pipeline::{Pipeline, TimingSource};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::output::{BmlBody, Outcome, SelectBody};

pub const LATENCY_HEADER: &str = "x-latency-ms";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectRequest {
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BmlRequest {
    text: String,
    #[serde(default)]
    timings: Option<Value>,
}

pub fn router(pipeline: Pipeline) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/select", post(select))
        .route("/v1/bml", post(bml))
        .layer(middleware::from_fn(latency))
        .with_state(Arc::new(pipeline))
}

pub async fn serve(pipeline: Pipeline, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(pipeline))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn latency(request: Request, next: Next) -> Response {
    let started = Instant::now();
    let mut response = next.run(request).await;
    let ms = format!("{:.3}", started.elapsed().as_secs_f64() * 1000.0);
    if let Ok(value) = HeaderValue::from_str(&ms) {
        response.headers_mut().insert(LATENCY_HEADER, value);
    }
    response
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, format!("malformed request body: {e}")))
}

fn status_for(outcome: Outcome) -> StatusCode {
    match outcome {
        Outcome::Ok => StatusCode::OK,
        Outcome::InputFailure => StatusCode::UNPROCESSABLE_ENTITY,
        Outcome::BackendFailure => StatusCode::BAD_GATEWAY,
    }
}

async fn health(State(pipeline): State<Arc<Pipeline>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "backend": pipeline.backend().name(),
        "model": pipeline.backend().model_id(),
    }))
}

async fn select(State(pipeline): State<Arc<Pipeline>>, body: Bytes) -> Response {
    let request: SelectRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(response) => return response,
    };
    let results = pipeline.select_text(&request.text).await;
    let status = status_for(Outcome::of(&results));
    (status, Json(SelectBody::new(&results))).into_response()
}

async fn bml(State(pipeline): State<Arc<Pipeline>>, body: Bytes) -> Response {
    let request: BmlRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(response) => return response,
    };
    let timings = match request.timings.map(TimingSource::from_value).transpose() {
        Ok(t) => t,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad timings: {e}")),
    };
    let results = pipeline.bml_text(&request.text, false, timings.as_ref()).await;
    let status = status_for(Outcome::of(&results));
    (status, Json(BmlBody::new(&results))).into_response()
}
