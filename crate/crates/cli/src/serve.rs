//! Local HTTP service over a directory of run bundles.
//!
//! Reads are served from memory; a gate resolution resumes the run,
//! rewrites its bundle and appends the resolution to the run's recorded
//! configuration. Mutations of one run are serialized by its mutex.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use clauseplan::corpus::{Corpus, EvidenceSpan};
use clauseplan::orchestrate::{read_state, write_bundle, BundleSummary, GateResolution, Pipeline, ResumeError, RunState};
use clauseplan::planmodel::PlanningInstance;
use clauseplan::schema::MasterData;

use crate::commands::{load_corpus, load_instance, load_master, write_json};
use crate::{PlanConfig, ServeArgs, EXIT_OK};

struct Live {
    state: RunState,
    config: PlanConfig,
    summary: BundleSummary,
    plan: Value,
    cards: Value,
    diagnosis: Option<Value>,
}

struct Run {
    dir: PathBuf,
    corpus: Arc<Corpus>,
    master: MasterData,
    instance: PlanningInstance,
    live: Mutex<Live>,
}

#[derive(Clone, Default)]
pub struct AppState {
    runs: Arc<BTreeMap<String, Arc<Run>>>,
}

fn read_value(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn bundle_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join("state.json").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("state.json").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

impl AppState {
    /// Loads every bundle under `root` (or `root` itself when it is a
    /// bundle) together with the inputs named in its `config.json`.
    pub fn load(root: &Path) -> Result<Self> {
        let mut corpora: HashMap<PathBuf, Arc<Corpus>> = HashMap::new();
        let mut runs = BTreeMap::new();
        for dir in bundle_dirs(root)? {
            let state = read_state(&dir).with_context(|| format!("reading {}/state.json", dir.display()))?;
            let config: PlanConfig = serde_json::from_value(read_value(&dir.join("config.json"))?)
                .with_context(|| format!("{}/config.json is not a plan configuration", dir.display()))?;
            let corpus = match corpora.get(&config.corpus) {
                Some(c) => c.clone(),
                None => {
                    let c = Arc::new(load_corpus(&config.corpus)?);
                    corpora.insert(config.corpus.clone(), c.clone());
                    c
                }
            };
            let master = load_master(&config.master)?;
            let instance = load_instance(&config.instance)?;
            let summary: BundleSummary = serde_json::from_value(read_value(&dir.join("outcome.json"))?)?;
            let diagnosis = dir.join("diagnosis.json");
            let live = Live {
                plan: read_value(&dir.join("plan.json"))?,
                cards: read_value(&dir.join("cards.json"))?,
                diagnosis: if diagnosis.is_file() { Some(read_value(&diagnosis)?) } else { None },
                state,
                config,
                summary,
            };
            let id = live.state.run_id.clone();
            if runs.contains_key(&id) {
                bail!("run {id} appears twice under {}", root.display());
            }
            runs.insert(
                id,
                Arc::new(Run {
                    dir,
                    corpus,
                    master,
                    instance,
                    live: Mutex::new(live),
                }),
            );
        }
        Ok(Self { runs: Arc::new(runs) })
    }

    pub fn run_ids(&self) -> Vec<String> {
        self.runs.keys().cloned().collect()
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_found(what: &str, id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
}

fn run_view(live: &Live) -> Value {
    let mut v = serde_json::to_value(&live.summary).unwrap_or_default();
    if let Value::Object(map) = &mut v {
        map.insert("open_gates".into(), json!(live.state.open_gates));
        map.insert("resolutions".into(), json!(live.state.resolutions));
        map.insert("history".into(), json!(live.state.history));
        map.insert("plan".into(), live.plan.clone());
        if let Some(d) = &live.diagnosis {
            map.insert("diagnosis".into(), d.clone());
        }
    }
    v
}

fn gate_view(run_id: &str, live: &Live, gate_id: &str) -> Option<Value> {
    if let Some(g) = live.state.open_gates.iter().find(|g| g.gate_id == gate_id) {
        let mut v = json!(g);
        v["run_id"] = json!(run_id);
        v["run_status"] = json!(live.state.status);
        v["state"] = json!("open");
        return Some(v);
    }
    live.state.resolutions.iter().find(|r| r.gate_id == gate_id).map(|r| {
        json!({
            "gate_id": gate_id,
            "run_id": run_id,
            "run_status": live.state.status,
            "state": "resolved",
            "resolution": r,
        })
    })
}

async fn list_runs(State(app): State<AppState>) -> Json<Vec<BundleSummary>> {
    let mut out = Vec::new();
    for run in app.runs.values() {
        out.push(run.live.lock().await.summary.clone());
    }
    Json(out)
}

async fn get_run(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match app.runs.get(&id) {
        Some(run) => Json(run_view(&*run.live.lock().await)).into_response(),
        None => not_found("run", &id),
    }
}

async fn get_cards(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    match app.runs.get(&id) {
        Some(run) => Json(run.live.lock().await.cards.clone()).into_response(),
        None => not_found("run", &id),
    }
}

async fn list_gates(State(app): State<AppState>) -> Json<Vec<Value>> {
    let mut out = Vec::new();
    for (id, run) in app.runs.iter() {
        let live = run.live.lock().await;
        for g in &live.state.open_gates {
            out.extend(gate_view(id, &live, &g.gate_id));
        }
    }
    Json(out)
}

async fn get_gate(State(app): State<AppState>, UrlPath(gate_id): UrlPath<String>) -> Response {
    for (id, run) in app.runs.iter() {
        if let Some(v) = gate_view(id, &*run.live.lock().await, &gate_id) {
            return Json(v).into_response();
        }
    }
    not_found("gate", &gate_id)
}

fn parse_resolution(gate_id: &str, body: &[u8]) -> Result<GateResolution, String> {
    let mut value: Value = serde_json::from_slice(body).map_err(|e| format!("body is not JSON: {e}"))?;
    let Value::Object(map) = &mut value else {
        return Err("body must be a JSON object".into());
    };
    if let Some(other) = map.get("gate_id").and_then(Value::as_str) {
        if other != gate_id {
            return Err(format!("body names gate `{other}`, path names `{gate_id}`"));
        }
    }
    map.insert("gate_id".into(), json!(gate_id));
    if !map.contains_key("option_id") && !map.contains_key("attested_value") {
        return Err("either option_id or attested_value is required".into());
    }
    serde_json::from_value(value).map_err(|e| e.to_string())
}

fn resume_status(e: &ResumeError) -> StatusCode {
    match e {
        ResumeError::UnknownGate(_) => StatusCode::NOT_FOUND,
        ResumeError::ClosedGate(_) | ResumeError::NotGated(_) => StatusCode::CONFLICT,
        ResumeError::Malformed(_) => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

async fn resolve_gate(State(app): State<AppState>, UrlPath(gate_id): UrlPath<String>, body: Bytes) -> Response {
    let mut owner = None;
    for run in app.runs.values() {
        let live = run.live.lock().await;
        let known = live.state.open_gates.iter().any(|g| g.gate_id == gate_id)
            || live.state.resolutions.iter().any(|r| r.gate_id == gate_id);
        if known {
            owner = Some(run.clone());
            break;
        }
    }
    let Some(run) = owner else {
        return not_found("gate", &gate_id);
    };
    let resolution = match parse_resolution(&gate_id, &body) {
        Ok(r) => r,
        Err(msg) => return error(StatusCode::UNPROCESSABLE_ENTITY, msg),
    };

    let mut live = run.live.lock().await;
    let pipeline = Pipeline::new(&run.corpus, &run.master, &run.instance, &live.config.run);
    let outcome = match pipeline.resume(live.state.clone(), resolution.clone()) {
        Ok(o) => o,
        Err(e) => return error(resume_status(&e), e.to_string()),
    };
    let mut config = live.config.clone();
    config.run.resolutions.push(resolution);
    let persisted = write_bundle(&outcome, &config, &run.dir)
        .map_err(anyhow::Error::from)
        .and_then(|_| write_json(&run.dir.join("resolutions.json"), &config.run.resolutions));
    if let Err(e) = persisted {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"));
    }
    *live = Live {
        summary: BundleSummary::of(&outcome),
        plan: json!(outcome.plan),
        cards: json!(outcome.cards),
        diagnosis: outcome.diagnosis.as_ref().map(|d| json!(d)),
        state: outcome.state,
        config,
    };
    Json(run_view(&live)).into_response()
}

async fn get_span(
    State(app): State<AppState>,
    UrlPath((doc_id, version)): UrlPath<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    let bound = |k: &str| q.get(k).and_then(|v| v.parse::<usize>().ok());
    let (Some(start), Some(end)) = (bound("start"), bound("end")) else {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "start and end must be byte offsets");
    };
    let Some(corpus) = app
        .runs
        .values()
        .map(|r| &r.corpus)
        .find(|c| c.document(&doc_id, &version).is_some())
    else {
        return not_found("document", &format!("{doc_id}@{version}"));
    };
    let span = EvidenceSpan::new(doc_id, version, start, end);
    match corpus.resolve_span(&span) {
        Ok(text) => Json(json!({
            "doc_id": span.doc_id,
            "version": span.version,
            "start": start,
            "end": end,
            "text": text,
        }))
        .into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/cards", get(get_cards))
        .route("/gates", get(list_gates))
        .route("/gates/{id}", get(get_gate))
        .route("/gates/{id}/resolution", post(resolve_gate))
        .route("/documents/{doc_id}/{version}/span", get(get_span))
        .with_state(state)
}

pub fn serve(args: &ServeArgs) -> Result<u8> {
    let state = AppState::load(&args.runs)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("serving {} runs on http://{addr}", state.runs.len());
        axum::serve(listener, router(state)).await?;
        Ok(EXIT_OK)
    })
}
