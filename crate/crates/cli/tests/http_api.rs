use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use plotsieve::cascade::{CascadeSession, PlotKind};
use plotsieve::raster::PlotImage;
use plotsieve_cli::http::router;
use plotsieve_cli::service::{JobState, Service};
use serde_json::{json, Value};
use tower::ServiceExt;

fn ring(side: usize, r0: f64, r1: f64) -> PlotImage {
    let c = (side as f64 - 1.0) / 2.0;
    let px = (0..side * side)
        .map(|i| {
            let d = (((i / side) as f64 - c).powi(2) + ((i % side) as f64 - c).powi(2)).sqrt();
            if d < r0 { -1 } else if d < r1 { 1 } else { 0 }
        })
        .collect();
    PlotImage::new(side, px).unwrap()
}

fn session(dir: &std::path::Path) -> CascadeSession {
    let plots = (0..12).map(|i| (format!("w{i:02}"), ring(48, 14.0 + (i % 6) as f64, 23.0))).collect();
    CascadeSession::create(dir, PlotKind::Wafer, "ternary-48", plots).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, to_bytes(res.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn quick_config(max_iterations: usize) -> Value {
    json!({
        "rotations": 1,
        "training": {
            "max_iterations": max_iterations, "check_period": 2, "tau": 0.5, "feature_layer": null,
            "proxy_tolerance": 0.0, "batch_limit": 64,
            "d_adam": {"lr": 0.0002, "beta1": 0.5, "beta2": 0.999, "epsilon": 1e-8},
            "g_adam": {"lr": 0.002, "beta1": 0.5, "beta2": 0.999, "epsilon": 1e-8},
            "seed": 3
        }
    })
}

async fn label_and_draft(app: &Router) {
    for i in 0..10 {
        let (s, _) = call_json(app, "POST", "/labels", Some(json!({"plot_id": format!("w{i:02}"), "label": "interesting:ring"}))).await;
        assert_eq!(s, StatusCode::OK);
    }
    let train: Vec<String> = (0..5).map(|i| format!("w{i:02}")).collect();
    let val: Vec<String> = (5..10).map(|i| format!("w{i:02}")).collect();
    let (s, v) = call_json(app, "POST", "/sets", Some(json!({"class": "ring", "train_ids": train, "val_ids": val}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
}

fn wait(svc: &Service, id: &str, state: JobState) -> Value {
    let desc = svc
        .wait_for(id, Duration::from_secs(120), |d| d.state == state || d.state == JobState::Failed)
        .unwrap();
    assert_eq!(desc.state, state, "{desc:?}");
    serde_json::to_value(desc).unwrap()
}

#[tokio::test]
async fn plots_and_images() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(Service::start(session(tmp.path()), Duration::ZERO));
    let (s, v) = call_json(&app, "GET", "/plots?limit=5&offset=10", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], 12);
    assert_eq!(v["items"].as_array().unwrap().len(), 2);
    assert_eq!(v["items"][0]["id"], "w10");
    assert_eq!(v["items"][0]["label"], "unlabeled");

    let (s, png) = call(&app, "GET", "/plots/w03/image.png", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");
    let (s, tern) = call(&app, "GET", "/plots/w03/image.tern", None).await;
    assert_eq!(s, StatusCode::OK);
    let parsed = plotsieve::raster::parse_tern(std::str::from_utf8(&tern).unwrap(), "http").unwrap();
    assert!(parsed.same_pixels(&ring(48, 17.0, 23.0)));

    let (s, v) = call_json(&app, "GET", "/plots/nope/image.png", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "not_found");
    let (s, v) = call_json(&app, "GET", "/plots?state=sideways", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["fields"], json!(["state"]));
    let (s, v) = call_json(&app, "GET", "/plots?state=residual", None).await;
    assert_eq!((s, v["total"].clone()), (StatusCode::OK, json!(12)));
}

#[tokio::test]
async fn labels_are_idempotent_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(Service::start(session(tmp.path()), Duration::ZERO));
    let body = json!({"plot_id": "w01", "label": "non-interesting"});
    let (s1, v1) = call_json(&app, "POST", "/labels", Some(body.clone())).await;
    let (s2, v2) = call_json(&app, "POST", "/labels", Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!((v1["changed"].clone(), v2["changed"].clone()), (json!(true), json!(false)));
    let (_, v) = call_json(&app, "GET", "/plots?state=label:non-interesting", None).await;
    assert_eq!(v["total"], 1);

    let (s, v) = call_json(&app, "POST", "/labels", Some(json!({"plot_id": "w01"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["fields"], json!(["label"]));
    let (s, v) = call_json(&app, "POST", "/labels", Some(json!({"plot_id": "w01", "label": "maybe"}))).await;
    assert_eq!((s, v["fields"].clone()), (StatusCode::BAD_REQUEST, json!(["label"])));
    let (s, _) = call_json(&app, "POST", "/labels", Some(json!({"plot_id": "zz", "label": "novel"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    drop(app);
    let reopened = CascadeSession::open(tmp.path()).unwrap();
    assert_eq!(reopened.audit().len(), 1);
}

#[tokio::test]
async fn set_conflicts() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(Service::start(session(tmp.path()), Duration::ZERO));
    label_and_draft(&app).await;
    let (s, _) = call_json(&app, "POST", "/labels", Some(json!({"plot_id": "w00", "label": "novel"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call_json(
        &app,
        "POST",
        "/sets",
        Some(json!({"class": "ring", "train_ids": ["w00", "w01"], "val_ids": ["w01"]})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call_json(&app, "POST", "/sets", Some(json!({"class": "x", "train_ids": ["w11"], "val_ids": []}))).await;
    assert_eq!(s, StatusCode::CONFLICT, "unlabeled plots cannot be drafted");
    let (s, _) = call_json(&app, "POST", "/sets", Some(json!({"class": "x", "train_ids": ["nope"], "val_ids": []}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call_json(&app, "POST", "/sets", Some(json!({"class": "", "train_ids": ["w00"], "val_ids": []}))).await;
    assert_eq!((s, v["fields"].clone()), (StatusCode::BAD_REQUEST, json!(["class"])));
}

#[tokio::test]
async fn training_job_pauses_for_inspection_then_stops() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = Service::start(session(tmp.path()), Duration::from_secs(120));
    let app = router(Arc::clone(&svc));
    label_and_draft(&app).await;

    let (s, v) = call_json(&app, "POST", "/jobs", Some(json!({"kind": "train", "class": "ring", "config": quick_config(60)}))).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let id = v["id"].as_str().unwrap().to_string();
    // A second submission waits behind the first.
    let (_, second) = call_json(&app, "POST", "/jobs", Some(json!({"kind": "scan"}))).await;
    let second = second["id"].as_str().unwrap().to_string();

    wait(&svc, &id, JobState::AwaitingInspection);
    let (_, queued) = call_json(&app, "GET", &format!("/jobs/{second}"), None).await;
    assert_eq!(queued["state"], "queued");
    let (s, samples) = call_json(&app, "GET", &format!("/jobs/{id}/generator-samples?n=5"), None).await;
    assert_eq!(s, StatusCode::OK);
    let images = samples["images"].as_array().unwrap();
    assert_eq!(images.len(), 5);
    assert!(images[0].as_str().unwrap().starts_with("data:image/png;base64,"));

    let (s, _) = call_json(&app, "POST", &format!("/jobs/{id}/continue"), None).await;
    assert_eq!(s, StatusCode::OK);
    let desc = svc
        .wait_for(&id, Duration::from_secs(120), |d| d.inspections >= 2 && d.state == JobState::AwaitingInspection)
        .unwrap();
    assert_eq!(desc.inspections, 2, "{desc:?}");
    let (s, _) = call_json(&app, "POST", &format!("/jobs/{id}/stop"), None).await;
    assert_eq!(s, StatusCode::OK);

    let done = wait(&svc, &id, JobState::Done);
    assert_eq!(done["result"]["report"]["stop_reason"], "manual");
    assert!(done["result"]["report"]["checks"].as_array().unwrap().len() >= 2);
    assert_eq!(done["result"]["cascade_length"], 1);
    let (s, _) = call_json(&app, "POST", &format!("/jobs/{id}/stop"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    wait(&svc, &second, JobState::Done);
    let (_, cascade) = call_json(&app, "GET", "/cascade", None).await;
    assert_eq!(cascade["recognizers"].as_array().unwrap().len(), 1);
    assert_eq!(cascade["recognizers"][0]["id"], "0:ring");
    assert_eq!(cascade["recognizers"][0]["kind"], "interesting");
    let coverage = &cascade["coverage"];
    assert_eq!(coverage["total"], 12);

    let (s, partition) = call_json(&app, "POST", "/scan", None).await;
    assert_eq!(s, StatusCode::OK);
    let bucket = partition["buckets"][0].as_array().unwrap().len();
    let (_, listed) = call_json(&app, "GET", "/plots?state=bucket:0:ring", None).await;
    assert_eq!(listed["total"], bucket);
    let (_, residual) = call_json(&app, "GET", "/plots?state=residual", None).await;
    assert_eq!(residual["total"].as_u64().unwrap() as usize + bucket, 12);

    // Every mutation replays from the audit log.
    let reopened = CascadeSession::open(tmp.path()).unwrap();
    assert_eq!(reopened.cascade().len(), 1);
    assert_eq!(reopened.labels().len(), 10);
}

#[tokio::test]
async fn proxy_decides_without_a_client() {
    let tmp = tempfile::tempdir().unwrap();
    let svc = Service::start(session(tmp.path()), Duration::ZERO);
    let app = router(Arc::clone(&svc));
    label_and_draft(&app).await;
    let (_, v) = call_json(&app, "POST", "/jobs", Some(json!({"kind": "train", "class": "ring", "config": quick_config(4)}))).await;
    let id = v["id"].as_str().unwrap().to_string();
    let desc = svc.wait_for(&id, Duration::from_secs(120), |d| matches!(d.state, JobState::Done | JobState::Failed)).unwrap();
    assert_eq!(desc.inspections, 0);
    // proxy_tolerance 0 never fires, so the budget ends the run.
    let report = &desc.result.as_ref().unwrap()["report"];
    assert_eq!(report["stop_reason"], "budget");
    assert_eq!(report["iterations"], 4);
}

#[tokio::test]
async fn job_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(Service::start(session(tmp.path()), Duration::ZERO));
    let (s, _) = call_json(&app, "GET", "/jobs/job-9999", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, "POST", "/jobs", Some(json!({"kind": "train", "class": "ghost"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call_json(&app, "POST", "/jobs", Some(json!({"kind": "train"}))).await;
    assert_eq!((s, v["fields"].clone()), (StatusCode::BAD_REQUEST, json!(["class"])));
    let (s, _) = call_json(&app, "POST", "/jobs", Some(json!({"kind": "bake"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call_json(&app, "POST", "/jobs/job-9999/continue", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call_json(&app, "GET", "/cascade", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["recognizers"], json!([]));
    assert_eq!(v["side"], 48);
}
