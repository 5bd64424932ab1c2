//! HTTP ask/tell API.
//!
//! Reads come straight from the store. Mutations hold the campaign's lock
//! for the whole load-modify-save cycle, so concurrent writers to one
//! campaign are serialized and later ones see the state left by earlier ones.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sparsebo::engine::{Campaign, CampaignConfig, CampaignStatus, Origin, Proposal, TellRequest};
use sparsebo::experiment::CSV_HEADER;

use crate::error::{ApiError, ErrorCode};
use crate::slice::{self, SliceQuery};
use crate::store::Store;

/// Fits slower than this turn an ask into a background job.
pub const ASK_WAIT: Duration = Duration::from_secs(2);

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub ask_wait: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { ask_wait: ASK_WAIT }
    }
}

#[derive(Clone, Debug)]
enum JobState {
    Running,
    Done(Result<Suggestion, ApiError>),
}

#[derive(Debug)]
struct Job {
    campaign: String,
    state: JobState,
}

pub struct AppState {
    store: Store,
    config: ServerConfig,
    jobs: Mutex<HashMap<String, Job>>,
}

impl AppState {
    pub fn new(store: Store, config: ServerConfig) -> Arc<Self> {
        Arc::new(Self {
            store,
            config,
            jobs: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    fn running_job(&self, id: &str) -> Option<String> {
        let jobs = self.jobs.lock().unwrap();
        jobs.iter()
            .find(|(_, j)| j.campaign == id && matches!(j.state, JobState::Running))
            .map(|(t, _)| t.clone())
    }
}

type Shared = State<Arc<AppState>>;

/// A committed suggestion as returned by ask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub campaign_id: String,
    pub point: Vec<f64>,
    pub origin: Origin,
    pub flags: Vec<String>,
    /// Set when the model could not be fitted and the point is a fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<ApiError>,
}

impl Suggestion {
    pub fn new(id: &str, p: Proposal) -> Self {
        let warning = (p.origin == Origin::Fallback).then(|| {
            let reason = p.flags.iter().find(|f| f.starts_with("model_failure")).cloned().unwrap_or_default();
            ApiError::new(ErrorCode::ModelFailure, id, reason)
        });
        Self {
            campaign_id: id.to_string(),
            point: p.point,
            origin: p.origin,
            flags: p.flags,
            warning,
        }
    }
}

/// Returned with 202 while a suggestion is still being computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AskPending {
    pub campaign_id: String,
    pub token: String,
    pub poll: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub y: f64,
    pub incumbent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regret: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct TraceQuery {
    pub format: Option<String>,
}

fn json_body<T>(id: &str, body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| ApiError::invalid(id, e.body_text()))
}

fn query<T>(id: &str, q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::invalid(id, e.body_text()))
}

fn with_status(campaign: &Campaign) -> Value {
    let mut v = serde_json::to_value(campaign).unwrap_or(Value::Null);
    if let Value::Object(map) = &mut v {
        map.insert("status".into(), serde_json::to_value(campaign.status()).unwrap_or(Value::Null));
    }
    v
}

async fn blocking<T: Send + 'static>(id: &str, f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::ModelFailure, id, format!("worker failed: {e}")))?
}

async fn list(State(app): Shared) -> Result<Json<Vec<CampaignStatus>>, ApiError> {
    let mut out = Vec::new();
    for id in app.store.list()? {
        if let Ok(c) = app.store.load(&id) {
            out.push(c.status());
        }
    }
    Ok(Json(out))
}

async fn create(State(app): Shared, body: Result<Json<CampaignConfig>, JsonRejection>) -> Result<Response, ApiError> {
    let config = json_body("", body)?;
    let campaign = Campaign::new(config).map_err(|e| ApiError::from_engine("", e))?;
    let _guard = app.store.lock(&campaign.id).await;
    if app.store.exists(&campaign.id) {
        return Err(ApiError::conflict(&campaign.id, "a campaign with this id already exists"));
    }
    app.store.save(&campaign)?;
    log::info!("created campaign {}", campaign.id);
    Ok((StatusCode::CREATED, Json(with_status(&campaign))).into_response())
}

async fn fetch(State(app): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(with_status(&app.store.load(&id)?)))
}

async fn remove(State(app): Shared, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let _guard = app.store.lock(&id).await;
    app.store.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn ask(State(app): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    if let Some(token) = app.running_job(&id) {
        return Ok(pending_response(&id, token));
    }
    let guard = app.store.lock(&id).await;
    let campaign = app.store.load(&id)?;
    if campaign.pending().is_some() {
        return Err(ApiError::from_engine(&id, sparsebo::Error::PendingSuggestionExists));
    }
    let token = uuid::Uuid::new_v4().simple().to_string();
    app.jobs.lock().unwrap().insert(
        token.clone(),
        Job {
            campaign: id.clone(),
            state: JobState::Running,
        },
    );
    let (tx, rx) = tokio::sync::oneshot::channel();
    let worker = app.clone();
    let jobs = app.clone();
    let job_token = token.clone();
    let job_id = id.clone();
    tokio::spawn(async move {
        let result = blocking(&job_id.clone(), move || {
            let mut campaign = campaign;
            let proposal = campaign.propose().map_err(|e| ApiError::from_engine(&job_id, e))?;
            campaign.commit(proposal.clone()).map_err(|e| ApiError::from_engine(&job_id, e))?;
            worker.store.save(&campaign)?;
            Ok(Suggestion::new(&job_id, proposal))
        })
        .await;
        if let Some(job) = jobs.jobs.lock().unwrap().get_mut(&job_token) {
            job.state = JobState::Done(result.clone());
        }
        drop(guard);
        let _ = tx.send(result);
    });
    if app.config.ask_wait.is_zero() {
        return Ok(pending_response(&id, token));
    }
    match tokio::time::timeout(app.config.ask_wait, rx).await {
        Ok(Ok(result)) => {
            app.jobs.lock().unwrap().remove(&token);
            result.map(|s| Json(s).into_response())
        }
        Ok(Err(_)) => Err(ApiError::new(ErrorCode::ModelFailure, &id, "suggestion worker vanished")),
        // the job stays registered so the client can poll for it
        Err(_) => Ok(pending_response(&id, token)),
    }
}

fn pending_response(id: &str, token: String) -> Response {
    let body = AskPending {
        campaign_id: id.to_string(),
        poll: format!("/campaigns/{id}/ask/{token}"),
        token,
    };
    (StatusCode::ACCEPTED, Json(body)).into_response()
}

async fn poll(State(app): Shared, Path((id, token)): Path<(String, String)>) -> Result<Response, ApiError> {
    let jobs = app.jobs.lock().unwrap();
    let job = jobs
        .get(&token)
        .filter(|j| j.campaign == id)
        .ok_or_else(|| ApiError::new(ErrorCode::NotFound, &id, format!("no suggestion job {token:?}")))?;
    match &job.state {
        JobState::Running => Ok(pending_response(&id, token)),
        JobState::Done(Ok(s)) => Ok(Json(s.clone()).into_response()),
        JobState::Done(Err(e)) => Err(e.clone()),
    }
}

async fn tell(State(app): Shared, Path(id): Path<String>, body: Result<Json<TellRequest>, JsonRejection>) -> Result<Json<CampaignStatus>, ApiError> {
    let req = json_body(&id, body)?;
    if app.running_job(&id).is_some() {
        return Err(ApiError::conflict(&id, "a suggestion is still being computed"));
    }
    let _guard = app.store.lock(&id).await;
    let mut campaign = app.store.load(&id)?;
    campaign.tell(req).map_err(|e| ApiError::from_engine(&id, e))?;
    app.store.save(&campaign)?;
    Ok(Json(campaign.status()))
}

async fn skip(State(app): Shared, Path(id): Path<String>) -> Result<Json<CampaignStatus>, ApiError> {
    let _guard = app.store.lock(&id).await;
    let mut campaign = app.store.load(&id)?;
    campaign.skip().map_err(|e| ApiError::from_engine(&id, e))?;
    app.store.save(&campaign)?;
    Ok(Json(campaign.status()))
}

fn trace_points(campaign: &Campaign) -> Vec<TracePoint> {
    let incumbent = campaign.incumbent_trace();
    let regret = campaign.regret_trace();
    campaign
        .observations
        .iter()
        .enumerate()
        .map(|(i, o)| TracePoint {
            iter: i + 1,
            y: o.y,
            incumbent: incumbent[i],
            regret: regret.as_ref().map(|r| r[i]),
        })
        .collect()
}

async fn trace(State(app): Shared, Path(id): Path<String>, q: Result<Query<TraceQuery>, QueryRejection>) -> Result<Response, ApiError> {
    let q = query(&id, q)?;
    let campaign = app.store.load(&id)?;
    let points = trace_points(&campaign);
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(points).into_response()),
        Some("csv") => {
            let mut out = format!("{CSV_HEADER}\n");
            for p in &points {
                out.push_str(&format!("{},{},incumbent,{},0\n", p.iter, campaign.seed, p.incumbent));
                if let Some(r) = p.regret {
                    out.push_str(&format!("{},{},regret,{r},0\n", p.iter, campaign.seed));
                }
            }
            Ok(([(header::CONTENT_TYPE, "text/csv")], out).into_response())
        }
        Some(other) => Err(ApiError::invalid(&id, format!("unknown trace format {other:?}"))),
    }
}

async fn posterior(State(app): Shared, Path(id): Path<String>, q: Result<Query<SliceQuery>, QueryRejection>) -> Result<Response, ApiError> {
    let q = query(&id, q)?;
    let campaign = app.store.load(&id)?;
    let out = blocking(&id, move || slice::posterior_slice(&campaign, &q)).await?;
    Ok(Json(out).into_response())
}

async fn acquisition(State(app): Shared, Path(id): Path<String>, q: Result<Query<SliceQuery>, QueryRejection>) -> Result<Response, ApiError> {
    let q = query(&id, q)?;
    let campaign = app.store.load(&id)?;
    let out = blocking(&id, move || slice::acquisition_slice(&campaign, &q)).await?;
    Ok(Json(out).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/campaigns", get(list).post(create))
        .route("/campaigns/{id}", get(fetch).delete(remove))
        .route("/campaigns/{id}/ask", post(ask))
        .route("/campaigns/{id}/ask/{token}", get(poll))
        .route("/campaigns/{id}/tell", post(tell))
        .route("/campaigns/{id}/skip", post(skip))
        .route("/campaigns/{id}/trace", get(trace))
        .route("/campaigns/{id}/posterior", get(posterior))
        .route("/campaigns/{id}/acquisition", get(acquisition))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "", "no such endpoint") })
        .method_not_allowed_fallback(|| async { ApiError::new(ErrorCode::Invalid, "", "method not allowed on this endpoint") })
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
