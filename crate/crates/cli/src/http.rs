//! JSON-over-HTTP API of a labeling session.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use plotsieve::cascade::PlotLabel;
use plotsieve::gan::sample_generator;
use plotsieve::raster::{png_bytes, to_tern_string};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::commands::TrainSpec;
use crate::service::{JobError, JobKind, Service};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    fields: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    fn invalid(field: &str, message: impl Into<String>) -> Self {
        Self {
            fields: vec![field.to_string()],
            ..Self::new(StatusCode::BAD_REQUEST, "validation", message)
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }
}

impl From<plotsieve::Error> for ApiError {
    fn from(e: plotsieve::Error) -> Self {
        use plotsieve::Error as E;
        let message = e.to_string();
        match e {
            E::Unknown { .. } | E::DanglingReference { .. } => Self::not_found(message),
            E::Conflict(_) => Self::conflict(message),
            E::Config(_) | E::Empty(_) | E::Geometry { .. } | E::OutOfRange { .. } | E::Schema { .. } => {
                Self::new(StatusCode::BAD_REQUEST, "validation", message)
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        match e {
            JobError::NotFound(id) => Self::not_found(format!("unknown job: {id}")),
            JobError::Conflict(m) => Self::conflict(m),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.code, "message": self.message, "fields": self.fields});
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body, naming the offending field on failure.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        let message = e.to_string();
        let fields = message
            .split('`')
            .nth(1)
            .filter(|_| message.contains("field"))
            .map(|f| vec![f.to_string()])
            .unwrap_or_default();
        ApiError {
            fields,
            ..ApiError::new(StatusCode::BAD_REQUEST, "validation", message)
        }
    })
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/plots", get(list_plots))
        .route("/plots/{id}/image.png", get(plot_png))
        .route("/plots/{id}/image.tern", get(plot_tern))
        .route("/labels", post(post_label))
        .route("/sets", post(post_set))
        .route("/jobs", get(list_jobs).post(post_job))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/continue", post(continue_job))
        .route("/jobs/{id}/stop", post(stop_job))
        .route("/jobs/{id}/generator-samples", get(generator_samples))
        .route("/cascade", get(get_cascade))
        .route("/scan", post(post_scan))
        .with_state(svc)
}

#[derive(Deserialize)]
struct PlotQuery {
    state: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn list_plots(State(svc): State<Arc<Service>>, Query(q): Query<PlotQuery>) -> ApiResult<Json<Value>> {
    let session = svc.session();
    let ids = session.cascade().ids();
    let partition = session.partition();
    let bucket_of = |id: &str| partition.and_then(|p| p.scores.get(id)).and_then(|s| s.bucket);
    let filter: Box<dyn Fn(&str) -> bool> = match q.state.as_deref() {
        None | Some("all") => Box::new(|_| true),
        Some("residual") => {
            if partition.is_none() && !session.cascade().is_empty() {
                return Err(ApiError::conflict("no scan since recognizers were attached; POST /scan first"));
            }
            Box::new(move |id| bucket_of(id).is_none())
        }
        Some(s) if s.starts_with("bucket:") => {
            let want = &s["bucket:".len()..];
            let index = ids
                .iter()
                .position(|r| r == want)
                .or_else(|| want.parse::<usize>().ok().filter(|i| *i < ids.len()))
                .ok_or_else(|| ApiError::not_found(format!("unknown bucket: {want}")))?;
            Box::new(move |id| bucket_of(id) == Some(index))
        }
        Some(s) if s.starts_with("label:") => {
            let label: PlotLabel = s["label:".len()..]
                .parse()
                .map_err(|e: plotsieve::Error| ApiError::invalid("state", e.to_string()))?;
            let labels = session.labels();
            Box::new(move |id| labels.get(id).unwrap_or(&PlotLabel::Unlabeled) == &label)
        }
        Some(other) => return Err(ApiError::invalid("state", format!("unknown state filter: {other}"))),
    };
    let matching: Vec<&String> = session.plot_ids().iter().filter(|id| filter(id)).collect();
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(100).min(1000);
    let items: Vec<Value> = matching
        .iter()
        .skip(offset)
        .take(limit)
        .map(|id| {
            let score = partition.and_then(|p| p.scores.get(id.as_str()));
            json!({
                "id": id,
                "label": session.label(id),
                "bucket": score.and_then(|s| s.bucket).map(|b| ids[b].clone()),
                "score": score.map(|s| s.score),
            })
        })
        .collect();
    Ok(Json(json!({"total": matching.len(), "offset": offset, "limit": limit, "items": items})))
}

async fn plot_png(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = png_bytes(svc.session().plot(&id)?, 4)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn plot_tern(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Response> {
    let text = to_tern_string(svc.session().plot(&id)?);
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    plot_id: String,
    label: String,
}

async fn post_label(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: LabelBody = parse_body(&body)?;
    let label: PlotLabel = b.label.parse().map_err(|e: plotsieve::Error| ApiError::invalid("label", e.to_string()))?;
    let mut session = svc.session();
    session.plot(&b.plot_id)?;
    let changed = session.label_plot(&b.plot_id, label.clone())?;
    Ok(Json(json!({"plot_id": b.plot_id, "label": label, "changed": changed})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetBody {
    class: String,
    train_ids: Vec<String>,
    val_ids: Vec<String>,
}

async fn post_set(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: SetBody = parse_body(&body)?;
    if b.class.trim().is_empty() {
        return Err(ApiError::invalid("class", "class must not be empty"));
    }
    if b.train_ids.is_empty() {
        return Err(ApiError::invalid("train_ids", "training set must not be empty"));
    }
    let mut session = svc.session();
    for id in b.train_ids.iter().chain(&b.val_ids) {
        session.plot(id)?;
    }
    let draft = session.draft_sets(&b.class, b.train_ids, b.val_ids)?;
    Ok(Json(serde_json::to_value(draft).expect("draft serializes")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobBody {
    kind: JobKind,
    class: Option<String>,
    config: Option<TrainSpec>,
}

async fn post_job(State(svc): State<Arc<Service>>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let b: JobBody = parse_body(&body)?;
    let desc = match b.kind {
        JobKind::Train => {
            let class = b.class.ok_or_else(|| ApiError::invalid("class", "training jobs need a class"))?;
            if !svc.session().drafts().contains_key(&class) {
                return Err(ApiError::not_found(format!("no training/validation draft for class {class}")));
            }
            svc.submit(JobKind::Train, Some(class), b.config)
        }
        JobKind::Scan => svc.submit(JobKind::Scan, None, None),
    };
    Ok((StatusCode::ACCEPTED, Json(serde_json::to_value(desc).expect("job serializes"))))
}

async fn list_jobs(State(svc): State<Arc<Service>>) -> Json<Value> {
    Json(json!({ "jobs": svc.jobs() }))
}

async fn get_job(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let desc = svc.job(&id).ok_or_else(|| ApiError::not_found(format!("unknown job: {id}")))?;
    Ok(Json(serde_json::to_value(desc).expect("job serializes")))
}

async fn continue_job(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(svc.continue_job(&id)?).expect("job serializes")))
}

async fn stop_job(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(svc.stop_job(&id)?).expect("job serializes")))
}

#[derive(Deserialize)]
struct SampleQuery {
    n: Option<usize>,
}

async fn generator_samples(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    Query(q): Query<SampleQuery>,
) -> ApiResult<Json<Value>> {
    let n = q.n.unwrap_or(5);
    if !(1..=64).contains(&n) {
        return Err(ApiError::invalid("n", "n must lie in 1..=64"));
    }
    let (iteration, generator) = svc
        .generator(&id)?
        .ok_or_else(|| ApiError::conflict(format!("job {id} has no generator snapshot yet")))?;
    let seed = plotsieve::rng::hash64(id.as_bytes());
    let engine = base64::engine::general_purpose::STANDARD;
    let images = sample_generator(&generator, n, seed)?
        .iter()
        .map(|im| Ok(format!("data:image/png;base64,{}", engine.encode(png_bytes(im, 4)?))))
        .collect::<ApiResult<Vec<String>>>()?;
    Ok(Json(json!({"job_id": id, "iteration": iteration, "images": images})))
}

async fn get_cascade(State(svc): State<Arc<Service>>) -> Json<Value> {
    let session = svc.session();
    let cascade = session.cascade();
    let recognizers: Vec<Value> = cascade
        .recognizers()
        .iter()
        .zip(cascade.ids())
        .map(|(r, id)| {
            json!({
                "id": id,
                "class": r.class_name(),
                "kind": r.kind(),
                "tau": r.tau(),
                "provenance": r.provenance(),
            })
        })
        .collect();
    let coverage = session.partition().filter(|p| p.recognizers == cascade.ids()).map(|p| {
        let sizes: BTreeMap<&String, usize> = p.recognizers.iter().zip(p.buckets.iter().map(Vec::len)).collect();
        json!({
            "total": p.total(),
            "bucket_sizes": sizes,
            "residual": p.residual.len(),
            "prefix_coverage": p.prefix_coverage(),
        })
    });
    Json(json!({
        "side": cascade.side(),
        "policy": cascade.policy(),
        "recognizers": recognizers,
        "coverage": coverage,
    }))
}

async fn post_scan(State(svc): State<Arc<Service>>) -> ApiResult<Json<Value>> {
    let partition = tokio::task::spawn_blocking(move || svc.session().scan().cloned())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(serde_json::to_value(partition).expect("partition serializes")))
}

/// Serves `router` on `127.0.0.1:port` until the process ends.
pub async fn serve(svc: Arc<Service>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    axum::serve(listener, router(svc)).await
}
