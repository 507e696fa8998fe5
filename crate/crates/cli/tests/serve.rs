use std::fs;
use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use clap::Parser;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use clauseplan::corpus::Corpus;
use clauseplan_cli::serve::{router, AppState};
use clauseplan_cli::Cli;

fn fx(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel).display().to_string()
}

fn plan_into(out: &Path, corpus: &str) -> u8 {
    let cli = Cli::try_parse_from([
        "clauseplan",
        "plan",
        "--corpus",
        &fx(corpus),
        "--master",
        &fx("walkthrough/master_data.json"),
        "--instance",
        &fx("walkthrough/instance.json"),
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    clauseplan_cli::run(cli)
}

/// A runs directory holding one gated and one finished walkthrough run.
fn runs_dir() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    assert_eq!(plan_into(&runs.join("gated"), "walkthrough/corpus_gated.json"), 2);
    assert_eq!(plan_into(&runs.join("done"), "walkthrough/corpus.json"), 0);
    (tmp, runs)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn only_gate(app: &Router) -> (String, String, String) {
    let (status, gates) = call(app, "GET", "/gates", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(gates.as_array().unwrap().len(), 1);
    let gate = &gates[0];
    let opt = gate["options"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| o["label"].as_str().unwrap().contains("Addendum-3"))
        .unwrap();
    (
        gate["gate_id"].as_str().unwrap().to_string(),
        gate["run_id"].as_str().unwrap().to_string(),
        opt["option_id"].as_str().unwrap().to_string(),
    )
}

#[tokio::test]
async fn lists_runs_and_the_open_gate() {
    let (_tmp, runs) = runs_dir();
    let app = router(AppState::load(&runs).unwrap());

    let (status, list) = call(&app, "GET", "/runs", None).await;
    assert_eq!(status, StatusCode::OK);
    let mut statuses: Vec<&str> = list.as_array().unwrap().iter().map(|r| r["status"].as_str().unwrap()).collect();
    statuses.sort();
    assert_eq!(statuses, ["done", "gated"]);

    let (gate_id, run_id, _) = only_gate(&app).await;
    let (status, gate) = call(&app, "GET", &format!("/gates/{gate_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(gate["state"], "open");
    assert_eq!(gate["reason"], "ambiguity");
    assert_eq!(gate["run_id"], run_id.as_str());

    let (status, run) = call(&app, "GET", &format!("/runs/{run_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(run["status"], "gated");
    assert_eq!(run["open_gates"].as_array().unwrap().len(), 1);

    assert_eq!(call(&app, "GET", "/runs/run-nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/runs/run-nope/cards", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/gates/gate-nope", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn resolution_resumes_run_and_persists() {
    let (_tmp, runs) = runs_dir();
    let app = router(AppState::load(&runs).unwrap());
    let (gate_id, run_id, opt) = only_gate(&app).await;
    let uri = format!("/gates/{gate_id}/resolution");

    let (status, _) = call(&app, "POST", &uri, Some("not json")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", &uri, Some("{}")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", &uri, Some(r#"{"option_id": "opt-99"}"#)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", &uri, Some(r#"{"option_id": 7}"#)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/gates/gate-nope/resolution", Some(r#"{"option_id": "opt-1"}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let body = json!({ "option_id": opt, "note": "addendum governs" }).to_string();
    let (status, run) = call(&app, "POST", &uri, Some(&body)).await;
    assert_eq!(status, StatusCode::OK, "{run}");
    assert_eq!(run["status"], "done");

    let (_, run) = call(&app, "GET", &format!("/runs/{run_id}"), None).await;
    assert_eq!(run["status"], "done");
    let (_, cards) = call(&app, "GET", &format!("/runs/{run_id}/cards"), None).await;
    let moq = cards[0]["binding_constraints"]
        .as_array()
        .unwrap()
        .iter()
        .find(|b| b["family"] == "moq")
        .unwrap();
    assert_eq!(moq["evidence"], json!(["Addendum-3:L1"]));
    let (_, gates) = call(&app, "GET", "/gates", None).await;
    assert_eq!(gates, json!([]));
    let (status, gate) = call(&app, "GET", &format!("/gates/{gate_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(gate["state"], "resolved");

    let (status, _) = call(&app, "POST", &uri, Some(&body)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let dir = runs.join("gated");
    let outcome: Value = serde_json::from_str(&fs::read_to_string(dir.join("outcome.json")).unwrap()).unwrap();
    assert_eq!(outcome["status"], "done");
    let config: Value = serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(config["run"]["resolutions"][0]["gate_id"], gate_id.as_str());
    assert!(dir.join("resolutions.json").is_file());

    let reloaded = router(AppState::load(&runs).unwrap());
    let (_, run) = call(&reloaded, "GET", &format!("/runs/{run_id}"), None).await;
    assert_eq!(run["status"], "done");
}

#[tokio::test]
async fn persisted_config_reruns_to_the_same_bundle() {
    let (tmp, runs) = runs_dir();
    let app = router(AppState::load(&runs).unwrap());
    let (gate_id, _, opt) = only_gate(&app).await;
    let body = json!({ "option_id": opt }).to_string();
    assert_eq!(call(&app, "POST", &format!("/gates/{gate_id}/resolution"), Some(&body)).await.0, StatusCode::OK);

    let config = runs.join("gated/config.json");
    let rerun = tmp.path().join("rerun");
    let cli = Cli::try_parse_from(["clauseplan", "plan", "--config", config.to_str().unwrap(), "--out", rerun.to_str().unwrap()]).unwrap();
    assert_eq!(clauseplan_cli::run(cli), 0);
    for f in ["plan.json", "cards.json", "constraints.json", "gates.json", "config.json"] {
        assert_eq!(
            fs::read(runs.join("gated").join(f)).unwrap(),
            fs::read(rerun.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[tokio::test]
async fn concurrent_resolutions_accept_exactly_one() {
    let (_tmp, runs) = runs_dir();
    let app = router(AppState::load(&runs).unwrap());
    let (gate_id, _, opt) = only_gate(&app).await;
    let uri = format!("/gates/{gate_id}/resolution");
    let body = json!({ "option_id": opt }).to_string();
    let (a, b) = tokio::join!(
        call(&app, "POST", &uri, Some(&body)),
        call(&app, "POST", &uri, Some(&body))
    );
    let mut codes = [a.0, b.0];
    codes.sort();
    assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT]);
}

#[tokio::test]
async fn span_endpoint_returns_exact_evidence_text() {
    let (_tmp, runs) = runs_dir();
    let app = router(AppState::load(&runs).unwrap());
    let corpus = Corpus::load(fx("walkthrough/corpus.json")).unwrap();
    let chunk = corpus.chunk_by_label("Addendum-3", "1", "L1").unwrap();
    let s = &chunk.span;

    let (status, v) = call(&app, "GET", &format!("/documents/Addendum-3/1/span?start={}&end={}", s.start, s.end), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["text"].as_str().unwrap(), corpus.resolve_span(s).unwrap());
    assert!(v["text"].as_str().unwrap().contains("MOQ per PO line is 150 units"));

    let (status, _) = call(&app, "GET", "/documents/Nope/1/span?start=0&end=1", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/documents/Addendum-3/1/span?start=0&end=999999", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "GET", "/documents/Addendum-3/1/span?start=x", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn empty_runs_directory_serves_empty_lists() {
    let tmp = tempfile::tempdir().unwrap();
    let app = router(AppState::load(tmp.path()).unwrap());
    assert_eq!(call(&app, "GET", "/runs", None).await.1, json!([]));
    assert_eq!(call(&app, "GET", "/gates", None).await.1, json!([]));
}

#[test]
fn port_in_use_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let cli = Cli::try_parse_from(["clauseplan", "serve", "--runs", tmp.path().to_str().unwrap(), "--port", &port]).unwrap();
    assert_eq!(clauseplan_cli::run(cli), 1);
}
