//! The trial-conduct HTTP API.
//!
//! Writes to a session are serialized by a per-session async mutex held
//! from validation until any refit the write triggers has been persisted.
//! Reads take a snapshot of the folded state and never wait on a refit;
//! while one runs, recommendations report `pending`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use combitrial::conduct::{
    CurveSummary, Event, OutcomeEntry, Recommendation, StateDocument, SurfaceView, Trial, TrialState,
};
use combitrial::config::{design_schema, Design};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uuid::Uuid;

use crate::error::ServiceError;
use crate::store::EventStore;

type ApiResult<T> = Result<T, ServiceError>;

pub struct Session {
    trial: RwLock<Trial>,
    writer: Arc<tokio::sync::Mutex<()>>,
    refit_pending: AtomicBool,
    last_error: Mutex<Option<String>>,
}

impl Session {
    fn new(trial: Trial) -> Self {
        Session {
            trial: RwLock::new(trial),
            writer: Arc::new(tokio::sync::Mutex::new(())),
            refit_pending: AtomicBool::new(false),
            last_error: Mutex::new(None),
        }
    }

    fn snapshot(&self) -> TrialState {
        self.trial.read().expect("trial lock").state().clone()
    }

    fn pending(&self) -> bool {
        self.refit_pending.load(Ordering::SeqCst)
    }

    fn recommendation(&self) -> Recommendation {
        let s = self.snapshot();
        if self.pending() {
            Recommendation::pending(s.status)
        } else {
            s.recommendation()
        }
    }

    fn view(&self, id: Uuid) -> TrialView {
        let mut state = self.snapshot().document();
        let refit_pending = self.pending();
        if refit_pending {
            state.recommendation = Recommendation::pending(state.status);
        }
        TrialView {
            id,
            refit_pending,
            last_error: self.last_error.lock().expect("error lock").clone(),
            state,
        }
    }
}

pub struct AppState {
    store: EventStore,
    sessions: RwLock<HashMap<Uuid, Arc<Session>>>,
    default_design: Design,
}

pub type Shared = Arc<AppState>;

impl AppState {
    /// Replays every stored trial.
    pub fn load(store: EventStore, default_design: Design) -> Result<Shared, ServiceError> {
        let mut sessions = HashMap::new();
        for id in store.ids()? {
            let trial = Trial::from_events(store.load(id)?)?;
            sessions.insert(id, Arc::new(Session::new(trial)));
        }
        Ok(Arc::new(AppState {
            store,
            sessions: RwLock::new(sessions),
            default_design,
        }))
    }

    fn session(&self, id: Uuid) -> ApiResult<Arc<Session>> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(&id)
            .cloned()
            .ok_or_else(|| combitrial::Error::NotFound(format!("trial {id}")).into())
    }

    pub fn trial_ids(&self) -> Vec<Uuid> {
        let mut ids: Vec<Uuid> = self.sessions.read().expect("sessions lock").keys().copied().collect();
        ids.sort();
        ids
    }

    /// Events of a trial as stored in memory.
    pub fn events(&self, id: Uuid) -> ApiResult<Vec<Event>> {
        Ok(self.session(id)?.trial.read().expect("trial lock").events().to_vec())
    }

    /// Restarts refits that were due when the process last stopped.
    pub async fn resume_pending(self: &Shared) {
        let ids = self.trial_ids();
        for id in ids {
            let Ok(session) = self.session(id) else { continue };
            if session.snapshot().advance_due() {
                log::info!("resuming refit for trial {id}");
                let guard = session.writer.clone().lock_owned().await;
                session.refit_pending.store(true, Ordering::SeqCst);
                tokio::spawn(refit(self.clone(), id, session, guard));
            }
        }
    }
}

async fn refit(app: Shared, id: Uuid, session: Arc<Session>, _guard: tokio::sync::OwnedMutexGuard<()>) {
    let mut snapshot = session.snapshot();
    let result = tokio::task::spawn_blocking(move || snapshot.advance()).await;
    let outcome = match result {
        Ok(Ok(events)) => app
            .store
            .append(id, &events)
            .and_then(|_| Ok(session.trial.write().expect("trial lock").append(events)?)),
        Ok(Err(e)) => Err(e.into()),
        Err(e) => Err(ServiceError::Refit(e.to_string())),
    };
    if let Err(e) = outcome {
        log::error!("trial {id}: {e}");
        *session.last_error.lock().expect("error lock") = Some(e.to_string());
    }
    session.refit_pending.store(false, Ordering::SeqCst);
}

/// State document plus session bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize, schemars::JsonSchema)]
pub struct TrialView {
    pub id: Uuid,
    pub refit_pending: bool,
    pub last_error: Option<String>,
    #[serde(flatten)]
    pub state: StateDocument,
}

#[derive(Debug, Deserialize)]
struct CreateQuery {
    seed: Option<u64>,
}

async fn create_trial(
    State(app): State<Shared>,
    Query(q): Query<CreateQuery>,
    body: String,
) -> ApiResult<impl IntoResponse> {
    let design = if body.trim().is_empty() {
        app.default_design.clone()
    } else {
        Design::from_json(&body)?
    };
    let seed = q.seed.unwrap_or_else(rand::random);
    let trial = Trial::new(design, seed)?;
    let id = Uuid::new_v4();
    app.store.create(id, trial.events())?;
    let session = Arc::new(Session::new(trial));
    let view = session.view(id);
    app.sessions.write().expect("sessions lock").insert(id, session);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn list_trials(State(app): State<Shared>) -> Json<Value> {
    Json(json!({ "trials": app.trial_ids() }))
}

async fn get_trial(State(app): State<Shared>, Path(id): Path<Uuid>) -> ApiResult<Json<TrialView>> {
    Ok(Json(app.session(id)?.view(id)))
}

async fn get_events(State(app): State<Shared>, Path(id): Path<Uuid>) -> ApiResult<Json<Vec<Event>>> {
    Ok(Json(app.events(id)?))
}

async fn get_recommendation(State(app): State<Shared>, Path(id): Path<Uuid>) -> ApiResult<Json<Recommendation>> {
    Ok(Json(app.session(id)?.recommendation()))
}

#[derive(Debug, Serialize, Deserialize, schemars::JsonSchema)]
pub struct SurfaceResponse {
    pub refit_pending: bool,
    pub curve: Option<CurveSummary>,
    pub surface: Option<SurfaceView>,
}

async fn get_surface(State(app): State<Shared>, Path(id): Path<Uuid>) -> ApiResult<Json<SurfaceResponse>> {
    let session = app.session(id)?;
    let doc = session.snapshot().document();
    Ok(Json(SurfaceResponse {
        refit_pending: session.pending(),
        curve: doc.curve,
        surface: doc.surface,
    }))
}

#[derive(Debug, Default, Deserialize)]
struct OutcomeQuery {
    #[serde(default)]
    dry_run: bool,
    #[serde(default)]
    wait: bool,
}

#[derive(Debug, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutcomeBatch {
    pub outcomes: Vec<OutcomeEntry>,
}

#[derive(Debug, Serialize, Deserialize, schemars::JsonSchema)]
pub struct OutcomeResponse {
    pub id: Uuid,
    pub dry_run: bool,
    pub refit_pending: bool,
    pub recommendation: Recommendation,
    /// Events a dry run would have appended.
    pub events: Option<Vec<Event>>,
}

async fn post_outcomes(
    State(app): State<Shared>,
    Path(id): Path<Uuid>,
    Query(q): Query<OutcomeQuery>,
    body: String,
) -> ApiResult<impl IntoResponse> {
    let batch: OutcomeBatch =
        serde_json::from_str(&body).map_err(|e| ServiceError::BadRequest(format!("outcomes: {e}")))?;
    let session = app.session(id)?;

    if q.dry_run {
        let snapshot = session.snapshot();
        let dr = tokio::task::spawn_blocking(move || snapshot.dry_run(&batch.outcomes))
            .await
            .map_err(|e| ServiceError::Refit(e.to_string()))??;
        return Ok((
            StatusCode::OK,
            Json(OutcomeResponse {
                id,
                dry_run: true,
                refit_pending: session.pending(),
                recommendation: dr.recommendation,
                events: Some(dr.events),
            }),
        ));
    }

    let guard = session.writer.clone().lock_owned().await;
    let events = session.snapshot().record_outcomes(&batch.outcomes)?;
    app.store.append(id, &events)?;
    session.trial.write().expect("trial lock").append(events)?;
    *session.last_error.lock().expect("error lock") = None;

    if session.snapshot().advance_due() {
        session.refit_pending.store(true, Ordering::SeqCst);
        let task = tokio::spawn(refit(app.clone(), id, session.clone(), guard));
        if q.wait {
            task.await.map_err(|e| ServiceError::Refit(e.to_string()))?;
        }
    } else {
        drop(guard);
    }
    let if_error = session.last_error.lock().expect("error lock").clone();
    if let Some(e) = if_error {
        return Err(ServiceError::Refit(e));
    }
    let refit_pending = session.pending();
    let status = if refit_pending { StatusCode::ACCEPTED } else { StatusCode::OK };
    Ok((
        status,
        Json(OutcomeResponse {
            id,
            dry_run: false,
            refit_pending,
            recommendation: session.recommendation(),
            events: None,
        }),
    ))
}

/// Published JSON schemas by name.
pub fn schemas() -> Value {
    let s = |v: schemars::Schema| serde_json::to_value(v).expect("schema serializes");
    json!({
        "config": design_schema(),
        "state": s(schemars::schema_for!(TrialView)),
        "event": s(schemars::schema_for!(Event)),
        "outcomes": s(schemars::schema_for!(OutcomeBatch)),
        "outcome_response": s(schemars::schema_for!(OutcomeResponse)),
        "recommendation": s(schemars::schema_for!(Recommendation)),
        "surface": s(schemars::schema_for!(SurfaceResponse)),
    })
}

async fn get_schemas() -> Json<Value> {
    Json(schemas())
}

async fn get_schema(Path(name): Path<String>) -> ApiResult<Json<Value>> {
    schemas()
        .get(&name)
        .cloned()
        .map(Json)
        .ok_or_else(|| combitrial::Error::NotFound(format!("schema {name}")).into())
}

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/trials", post(create_trial).get(list_trials))
        .route("/trials/{id}", get(get_trial))
        .route("/trials/{id}/events", get(get_events))
        .route("/trials/{id}/outcomes", post(post_outcomes))
        .route("/trials/{id}/recommendation", get(get_recommendation))
        .route("/trials/{id}/surface", get(get_surface))
        .route("/schema", get(get_schemas))
        .route("/schema/{name}", get(get_schema))
        .with_state(app)
}

/// Serves the API on `listener` until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, app: Shared) -> std::io::Result<()> {
    app.resume_pending().await;
    axum::serve(listener, router(app)).await
}
