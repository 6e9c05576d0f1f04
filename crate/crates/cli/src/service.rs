//! HTTP session service for the kitchen task. Each session is an
//! append-only demonstration log under the data directory; posteriors are
//! recomputed from the logged events on every request.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State as AxumState};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gem_core::domains::kitchen::{kitchen_blind_spot_support, Kitchen, KitchenConfig, DISHES, FEATURE_COUNT};
use gem_core::inference::{
    aggregate_feature_marginal, gibbs_posterior, GibbsConfig, InferenceMethod, JointPosterior,
    PosteriorEntry, Selection,
};
use gem_core::io::{read_session, AnyDomain, DomainSpec, LogHeader, LogRecord, SessionInfo, FORMAT_VERSION};
use gem_core::{DataSource, Dataset, Demonstration, Domain, GemError, Priors, NOISE_SUPPORT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use tokio::sync::{Mutex, RwLock};

use crate::error::{CliError, CliResult};

pub const ORDERS_PER_SESSION: usize = 25;
const DEFAULT_TOP: usize = 10;
const POSTERIOR_SEED: u64 = 0;

struct Session {
    path: PathBuf,
    info: SessionInfo,
    demos: Vec<Demonstration>,
    last_timestamp: Option<u64>,
}

pub struct AppState {
    data_dir: PathBuf,
    kitchen: Kitchen,
    priors: Priors,
    gibbs: GibbsConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    /// Loads every `*.jsonl` session under `data_dir`. Files that fail to
    /// parse are renamed to `*.jsonl.corrupt` and skipped; their paths are
    /// returned.
    pub fn open(data_dir: &Path, kitchen: KitchenConfig) -> CliResult<(Arc<AppState>, Vec<PathBuf>)> {
        fs::create_dir_all(data_dir).map_err(|e| CliError::io(data_dir, e))?;
        let kitchen = Kitchen::new(kitchen)?;
        let priors = Priors::uniform_support(FEATURE_COUNT, kitchen_blind_spot_support())?;
        let spec = DomainSpec::Kitchen(kitchen.config().clone());
        let mut sessions = HashMap::new();
        let mut quarantined = Vec::new();
        let entries = fs::read_dir(data_dir).map_err(|e| CliError::io(data_dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| CliError::io(data_dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            match load_session(&path, &spec) {
                Ok(session) => {
                    sessions.insert(session.info.session_id.clone(), Arc::new(Mutex::new(session)));
                }
                Err(e) => {
                    let mut target = path.clone().into_os_string();
                    target.push(".corrupt");
                    tracing::warn!("quarantining {}: {e}", path.display());
                    fs::rename(&path, &target).map_err(|e| CliError::io(&path, e))?;
                    quarantined.push(PathBuf::from(target));
                }
            }
        }
        let state = AppState {
            data_dir: data_dir.to_path_buf(),
            kitchen,
            priors,
            gibbs: GibbsConfig::seeded(POSTERIOR_SEED),
            sessions: RwLock::new(sessions),
        };
        Ok((Arc::new(state), quarantined))
    }
}

fn load_session(path: &Path, spec: &DomainSpec) -> Result<Session, String> {
    let file = fs::File::open(path).map_err(|e| e.to_string())?;
    let log = read_session(BufReader::new(file)).map_err(|e| e.to_string())?;
    if log.header.domain != *spec {
        return Err("recorded with a different kitchen".into());
    }
    let info = log.header.session.clone().ok_or("header has no session")?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    if info.session_id != stem {
        return Err(format!("session id `{}` does not match the file name", info.session_id));
    }
    Ok(Session {
        path: path.to_path_buf(),
        info,
        demos: log.dataset.demonstrations().to_vec(),
        last_timestamp: log.records.iter().filter_map(|r| r.timestamp).last(),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/config", get(config))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/events", post(post_event))
        .route("/api/sessions/{id}/posterior", get(posterior))
        .with_state(state)
}

pub async fn serve(port: u16, data_dir: &Path) -> CliResult<()> {
    let (state, quarantined) = AppState::open(data_dir, KitchenConfig::default())?;
    for q in &quarantined {
        tracing::warn!("quarantined {}", q.display());
    }
    let addr = std::net::SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::Usage(format!("cannot listen on port {port}: {e}")))?;
    tracing::info!("listening on {addr}, sessions in {}", data_dir.display());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::io(data_dir, e))
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn invalid(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid-json", r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn layout_view(k: &Kitchen) -> Vec<Value> {
    // the two confusable ingredients get the same tile
    let confusable = k.confusable();
    let mut tiles: Vec<(usize, String)> = (0..k.config().layout.len())
        .map(|ingredient| {
            let display = if confusable.contains(&ingredient) {
                "white-granules"
            } else {
                k.ingredient_name(ingredient)
            };
            (k.location_of(ingredient) + 1, display.to_string())
        })
        .collect();
    tiles.sort();
    tiles
        .into_iter()
        .map(|(location, display)| json!({"location": location, "display": display}))
        .collect()
}

fn menu(k: &Kitchen) -> Value {
    json!(k.config().menu)
}

fn orders(k: &Kitchen, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..ORDERS_PER_SESSION)
        .map(|_| k.config().menu[rng.gen_range(0..DISHES)].name.clone())
        .collect()
}

async fn config(AxumState(app): AxumState<Arc<AppState>>) -> Json<Value> {
    let k = &app.kitchen;
    Json(json!({
        "format-version": FORMAT_VERSION,
        "schema": k.schema(),
        "actions": k.actions(),
        "menu": menu(k),
        "layout-view": layout_view(k),
        "noise-support": NOISE_SUPPORT,
        "blind-spot-support-size": kitchen_blind_spot_support().len(),
        "orders-per-session": ORDERS_PER_SESSION,
        "gibbs": app.gibbs,
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct NewSession {
    participant_id: Option<String>,
    seed: Option<u64>,
}

async fn create_session(
    AxumState(app): AxumState<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let request: NewSession = if body.iter().all(u8::is_ascii_whitespace) {
        NewSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-json", e.to_string()))?
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let seed = request.seed.unwrap_or_else(|| rand::thread_rng().gen());
    let info = SessionInfo {
        session_id: id.clone(),
        participant_id: request.participant_id,
        order_seed: Some(seed),
    };
    let domain = AnyDomain::from(app.kitchen.clone());
    let header = LogHeader::new(&domain, DataSource::Ingested).with_session(info.clone());
    let path = app.data_dir.join(format!("{id}.jsonl"));
    let line = serde_json::to_string(&header).map_err(|e| ApiError::internal(e.to_string()))?;
    fs::write(&path, line + "\n").map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;

    let session = Session {
        path,
        info,
        demos: Vec::new(),
        last_timestamp: None,
    };
    app.sessions.write().await.insert(id.clone(), Arc::new(Mutex::new(session)));
    let k = &app.kitchen;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "format-version": FORMAT_VERSION,
            "session-id": id,
            "menu": menu(k),
            "layout-view": layout_view(k),
            "orders": orders(k, seed),
        })),
    ))
}

async fn session(app: &AppState, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
    app.sessions
        .read()
        .await
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-session", format!("no session `{id}`")))
}

/// An event as posted by a client. The error flag is optional and derived
/// when absent; location features default to the kitchen layout.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct Event {
    schema_id: Option<String>,
    state: Map<String, Value>,
    action: String,
    error: Option<u8>,
    timestamp: Option<u64>,
    meta: Option<Value>,
}

async fn post_event(
    AxumState(app): AxumState<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<Event>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(event) = body?;
    let session = session(&app, &id).await?;
    let k = &app.kitchen;
    let schema = k.schema();

    let mut state = event.state;
    let true_layout = k.encode(&k.start_dish(0));
    for j in gem_core::domains::kitchen::FIRST_LOCATION_FEATURE..schema.len() {
        let name = &schema.features()[j].name;
        let expected = schema.value_name(j, true_layout.get(j));
        match state.get(name) {
            None => {
                state.insert(name.clone(), json!(expected));
            }
            Some(Value::String(v)) if v == expected => {}
            Some(other) => {
                return Err(ApiError::invalid(
                    "layout-mismatch",
                    format!("{name} holds {expected}, not {other}"),
                ))
            }
        }
    }
    let mut record = LogRecord {
        schema_id: event.schema_id.unwrap_or_else(|| schema.id().to_string()),
        state,
        action: event.action,
        error: 0,
        timestamp: event.timestamp,
        meta: event.meta,
    };
    let parsed = record
        .parse_state(schema)
        .and_then(|s| record.parse_action(k).map(|a| (s, a)));
    let (state, action) = parsed.map_err(|m| ApiError::invalid("invalid-event", m))?;
    let demo = Demonstration::derived(k, state, action);
    if let Some(stored) = event.error {
        if stored > 1 || (stored == 1) != demo.error {
            return Err(ApiError::invalid(
                "error-flag-mismatch",
                format!("stored error flag {stored} disagrees with derived flag {}", demo.error as u8),
            ));
        }
    }
    record.error = demo.error as u8;

    let mut s = session.lock().await;
    if let (Some(t), Some(prev)) = (record.timestamp, s.last_timestamp) {
        if t < prev {
            return Err(ApiError::invalid(
                "timestamp-order",
                format!("timestamp {t} precedes the previous event at {prev}"),
            ));
        }
    }
    let line = serde_json::to_string(&record).map_err(|e| ApiError::internal(e.to_string()))? + "\n";
    let mut file = OpenOptions::new()
        .append(true)
        .open(&s.path)
        .map_err(|e| ApiError::internal(format!("{}: {e}", s.path.display())))?;
    file.write_all(line.as_bytes())
        .map_err(|e| ApiError::internal(format!("{}: {e}", s.path.display())))?;
    if record.timestamp.is_some() {
        s.last_timestamp = record.timestamp;
    }
    s.demos.push(demo);
    let index = s.demos.len() - 1;
    Ok((
        StatusCode::CREATED,
        Json(json!({"session-id": s.info.session_id, "index": index, "events": index + 1})),
    ))
}

#[derive(Debug, Deserialize)]
struct PosteriorQuery {
    top: Option<usize>,
}

fn prior_posterior(priors: &Priors) -> gem_core::Result<JointPosterior> {
    let masks = priors.mask_support(usize::MAX)?;
    let etas = priors.noise_support();
    let entries = masks
        .iter()
        .flat_map(|(m, lm)| {
            etas.iter().map(move |(e, le)| PosteriorEntry {
                mask: m.clone(),
                eta: *e,
                p: (lm + le).exp(),
            })
        })
        .collect();
    JointPosterior::new(entries, InferenceMethod::Exact)
}

fn marginal_json(k: &Kitchen, marginal: &[f64], used: usize) -> Value {
    if used == 0 {
        return Value::Null;
    }
    let values: Vec<Value> = marginal
        .iter()
        .enumerate()
        .map(|(i, p)| json!({"ingredient": k.ingredient_name(i), "p": p}))
        .collect();
    let mode = (0..marginal.len()).max_by(|a, b| marginal[*a].total_cmp(&marginal[*b]));
    json!({"datapoints": used, "values": values, "mode": mode.map(|i| k.ingredient_name(i))})
}

fn compute_posterior(app: &AppState, demos: Vec<Demonstration>, top: usize) -> Result<Value, GemError> {
    let k = &app.kitchen;
    let events = demos.len();
    let salt = k.ingredient_index("salt");
    let salt_feature = salt.map(|s| Kitchen::location_feature(k.location_of(s)));
    let (post, salt_location) = if demos.is_empty() {
        (prior_posterior(&app.priors)?, Value::Null)
    } else {
        let data = Dataset::new(k, demos, DataSource::Ingested)?;
        let post = gibbs_posterior(&data, &app.priors, k, &app.gibbs)?;
        let salt_location = match (salt, salt_feature) {
            (Some(s), Some(f)) => {
                let (all, n_all) = aggregate_feature_marginal(&data, &post, k, f, Selection::All)?;
                let (err, n_err) = aggregate_feature_marginal(&data, &post, k, f, Selection::ErrorsOnly)?;
                json!({
                    "location": k.location_of(s) + 1,
                    "feature": k.schema().features()[f].name,
                    "all": marginal_json(k, &all, n_all),
                    "errors-only": marginal_json(k, &err, n_err),
                })
            }
            _ => Value::Null,
        };
        (post, salt_location)
    };
    let schema = k.schema();
    let top_entries: Vec<Value> = post
        .top(top)
        .into_iter()
        .map(|e| {
            let hidden: Vec<&str> = e.mask.hidden().map(|j| schema.features()[j].name.as_str()).collect();
            json!({"mask": e.mask.to_bit_string(), "hidden": hidden, "eta": e.eta.value(), "p": e.p})
        })
        .collect();
    let argmax = post.argmax();
    Ok(json!({
        "format-version": FORMAT_VERSION,
        "kind": "session-posterior",
        "events": events,
        "method": post.method(),
        "support-size": post.entries().len(),
        "top": top_entries,
        "argmax": {
            "mask": argmax.mask.to_bit_string(),
            "eta": argmax.eta.value(),
            "mask-tie": argmax.mask_tie,
            "eta-tie": argmax.eta_tie,
        },
        "eta-marginal": post
            .eta_marginal()
            .into_iter()
            .map(|(e, p)| json!({"eta": e.value(), "p": p}))
            .collect::<Vec<_>>(),
        "salt-location": salt_location,
    }))
}

async fn posterior(
    AxumState(app): AxumState<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PosteriorQuery>,
) -> ApiResult<Json<Value>> {
    let top = q.top.unwrap_or(DEFAULT_TOP);
    if top == 0 {
        return Err(ApiError::invalid("invalid-query", "top must be at least 1"));
    }
    let session = session(&app, &id).await?;
    // copy the events so ingestion can continue while inference runs
    let demos = session.lock().await.demos.clone();
    let worker = app.clone();
    let mut body = tokio::task::spawn_blocking(move || compute_posterior(&worker, demos, top))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::invalid("inference-failed", e.to_string()))?;
    body["session-id"] = json!(id);
    Ok(Json(body))
}
