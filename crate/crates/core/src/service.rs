//! Local HTTP/JSON inference service.
//!
//! `POST /v1/transfer`, `POST /v1/embed`, `GET /v1/exemplar-sets`,
//! `POST /v1/sweep`, `GET /v1/health`. Requests are stateless; sampling is
//! keyed by the client-supplied seed.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use crate::classify::is_shouting;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evalharness::{interpolation_sweep, sweep_csv, SweepRow};
use crate::metrics::ScoreVector;
use crate::model::Checkpoint;
use crate::pipeline::{Pipeline, TransferOptions};

pub const ENV_BIND: &str = "RESTYLE_BIND";
pub const ENV_CHECKPOINT: &str = "RESTYLE_CHECKPOINT";
const MAX_RERANK_K: usize = 64;
const PREVIEW: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub id: String,
    pub texts: Vec<String>,
}

/// Every `*.jsonl` file in `dirs`, keyed by file stem. Lines are
/// `{"text": ...}` objects; other fields are ignored.
pub fn load_exemplar_sets(dirs: &[impl AsRef<Path>]) -> Result<BTreeMap<String, ExemplarSet>> {
    let mut sets = BTreeMap::new();
    for dir in dirs {
        let dir = dir.as_ref();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        for f in files {
            let id = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let texts = load_texts(&f)?;
            sets.insert(id.clone(), ExemplarSet { id, texts });
        }
    }
    Ok(sets)
}

fn load_texts(path: &Path) -> Result<Vec<String>> {
    #[derive(Deserialize)]
    struct Line {
        text: String,
    }
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut texts = Vec::new();
    for l in raw.lines().filter(|l| !l.trim().is_empty()) {
        let line: Line = serde_json::from_str(l)?;
        if !line.text.trim().is_empty() {
            texts.push(line.text);
        }
    }
    if texts.is_empty() {
        return Err(Error::EmptyCorpus(path.to_path_buf()));
    }
    Ok(texts)
}

pub struct ServiceState {
    pub pipeline: Arc<Pipeline>,
    pub exemplar_sets: BTreeMap<String, ExemplarSet>,
    pub defaults: TransferOptions,
    pub config_hash: String,
    pub model_id: String,
    workers: Arc<Semaphore>,
}

impl ServiceState {
    pub fn new(
        pipeline: Pipeline,
        exemplar_sets: BTreeMap<String, ExemplarSet>,
        config: &PipelineConfig,
    ) -> Result<Self> {
        Ok(Self {
            model_id: pipeline.model.model_id()?,
            pipeline: Arc::new(pipeline),
            exemplar_sets,
            defaults: config.transfer.clone(),
            config_hash: config.config_hash()?,
            workers: Arc::new(Semaphore::new(config.service.workers.max(1))),
        })
    }

    /// Loads the checkpoint and exemplar sets named in `config`.
    pub fn from_config(config: &PipelineConfig, checkpoint: &Path) -> Result<Self> {
        config.validate()?;
        let ckpt = Checkpoint::load(checkpoint)?;
        let sets = load_exemplar_sets(&config.paths.exemplar_sets)?;
        let embedder = config
            .embedder
            .build(sets.values().flat_map(|s| s.texts.iter().map(String::as_str)))?;
        let scorers = config.scorers(embedder, std::iter::empty())?;
        let pipeline = Pipeline::new(
            Arc::new(ckpt),
            config.paraphraser.build()?,
            config.paraphrase.clone(),
            scorers,
        )?;
        Self::new(pipeline, sets, config)
    }
}

/// An HTTP error with a JSON body. 500s carry no detail.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    field: Option<String>,
    message: String,
}

impl ApiError {
    fn schema(field: Option<String>, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            field,
            message: message.into(),
        }
    }

    fn constraint(field: &str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            field: Some(field.into()),
            message: message.into(),
        }
    }

    fn internal() -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            field: None,
            message: "internal error".into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument { field, reason } => ApiError::constraint(field, reason),
            Error::EmptyInput(what) => ApiError::constraint(what, "must not be empty"),
            other => {
                log::error!("request failed: {other}");
                ApiError::internal()
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": self.status.canonical_reason().unwrap_or("error"),
            "field": self.field,
            "message": self.message,
        });
        (self.status, Json(body)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("field"))
            .map(str::to_string);
        ApiError::schema(field, msg)
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferRequest {
    pub source_text: String,
    pub target_exemplars: Option<Vec<String>>,
    pub exemplar_set_id: Option<String>,
    pub lam: Option<f64>,
    pub rerank_k: Option<usize>,
    pub seed: Option<u64>,
    pub top_p: Option<f64>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub text: String,
    pub scores: ScoreVector,
    pub rerank_score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResponse {
    pub output_text: String,
    pub scores: ScoreVector,
    pub candidates: Vec<RankedCandidate>,
    pub timing_ms: f64,
    pub model_id: String,
    pub seed: u64,
}

fn exemplars_for(
    state: &ServiceState,
    inline: Option<Vec<String>>,
    set_id: Option<String>,
) -> std::result::Result<Vec<String>, ApiError> {
    let texts = match (inline, set_id) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(ApiError::schema(
                Some("target_exemplars".into()),
                "exactly one of `target_exemplars` and `exemplar_set_id` is required",
            ))
        }
        (Some(t), None) => t,
        (None, Some(id)) => match state.exemplar_sets.get(&id) {
            Some(s) => s.texts.clone(),
            None => {
                return Err(ApiError::constraint(
                    "exemplar_set_id",
                    format!("unknown exemplar set `{id}`"),
                ))
            }
        },
    };
    if texts.is_empty() || texts.iter().all(|t| t.trim().is_empty()) {
        return Err(ApiError::constraint("target_exemplars", "must contain at least one text"));
    }
    Ok(texts)
}

fn options_for(
    state: &ServiceState,
    lam: Option<f64>,
    rerank_k: Option<usize>,
    seed: Option<u64>,
    top_p: Option<f64>,
    tau: Option<f64>,
) -> std::result::Result<TransferOptions, ApiError> {
    let d = &state.defaults;
    let o = TransferOptions {
        lam: lam.unwrap_or(d.lam),
        rerank_k: rerank_k.unwrap_or(d.rerank_k),
        seed: seed.unwrap_or(d.seed),
        top_p: top_p.unwrap_or(d.top_p),
        tau: tau.unwrap_or(d.tau),
        ..d.clone()
    };
    if !(0.0..=1.0).contains(&o.lam) {
        return Err(ApiError::constraint("lam", format!("must lie in [0, 1], got {}", o.lam)));
    }
    if o.rerank_k == 0 || o.rerank_k > MAX_RERANK_K {
        return Err(ApiError::constraint(
            "rerank_k",
            format!("must lie in [1, {MAX_RERANK_K}], got {}", o.rerank_k),
        ));
    }
    if !(o.top_p > 0.0 && o.top_p <= 1.0) {
        return Err(ApiError::constraint("top_p", "must lie in (0, 1]"));
    }
    if !(o.tau > 0.0 && o.tau.is_finite()) {
        return Err(ApiError::constraint("tau", "must be positive"));
    }
    Ok(o)
}

/// Runs `f` on the blocking pool once a worker slot is free.
async fn run_blocking<T, F>(state: &Arc<ServiceState>, f: F) -> std::result::Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> std::result::Result<T, ApiError> + Send + 'static,
{
    let _permit = state
        .workers
        .clone()
        .acquire_owned()
        .await
        .map_err(|_| ApiError::internal())?;
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        log::error!("worker panicked: {e}");
        ApiError::internal()
    })?
}

/// Candidates by rerank score, highest first; ties keep generation order.
pub fn rank_candidates(out: &crate::pipeline::TransferOutput) -> Vec<RankedCandidate> {
    let mut order: Vec<usize> = (0..out.candidates.len()).collect();
    order.sort_by(|&a, &b| {
        out.candidates[b]
            .rerank_score
            .total_cmp(&out.candidates[a].rerank_score)
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(rank, i)| {
            let c = &out.candidates[i];
            RankedCandidate {
                text: c.output_text.clone(),
                scores: c.scores.clone(),
                rerank_score: c.rerank_score,
                rank: rank + 1,
            }
        })
        .collect()
}

async fn transfer(State(state): State<Arc<ServiceState>>, body: Bytes) -> std::result::Result<Json<TransferResponse>, ApiError> {
    let req: TransferRequest = parse(&body)?;
    if req.source_text.trim().is_empty() {
        return Err(ApiError::constraint("source_text", "must not be empty"));
    }
    let exemplars = exemplars_for(&state, req.target_exemplars, req.exemplar_set_id)?;
    let opts = options_for(&state, req.lam, req.rerank_k, req.seed, req.top_p, req.tau)?;
    let st = state.clone();
    let seed = opts.seed;
    let t0 = Instant::now();
    let out = run_blocking(&state, move || {
        let refs: Vec<&str> = exemplars.iter().map(String::as_str).collect();
        Ok(st.pipeline.transfer(&req.source_text, &refs, &opts)?)
    })
    .await?;
    let candidates = rank_candidates(&out);
    Ok(Json(TransferResponse {
        output_text: out.output.clone(),
        scores: out.scores.clone(),
        candidates,
        timing_ms: t0.elapsed().as_secs_f64() * 1e3,
        model_id: state.model_id.clone(),
        seed,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbedRequest {
    text: String,
}

async fn embed(State(state): State<Arc<ServiceState>>, body: Bytes) -> std::result::Result<Json<serde_json::Value>, ApiError> {
    let req: EmbedRequest = parse(&body)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::constraint("text", "must not be empty"));
    }
    let e = state.pipeline.scorers.embedder.embed(&req.text)?;
    Ok(Json(json!({
        "embedder_id": e.embedder_id,
        "dim": e.dim(),
        "embedding": e.values,
    })))
}

async fn exemplar_sets(State(state): State<Arc<ServiceState>>) -> Json<serde_json::Value> {
    let sets: Vec<_> = state
        .exemplar_sets
        .values()
        .map(|s| {
            json!({
                "id": s.id,
                "size": s.texts.len(),
                "preview": s.texts.iter().take(PREVIEW).collect::<Vec<_>>(),
            })
        })
        .collect();
    Json(json!({ "exemplar_sets": sets }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepRequest {
    inputs: Vec<String>,
    target_exemplars: Option<Vec<String>>,
    exemplar_set_id: Option<String>,
    lam_grid: Vec<f64>,
    rerank_k: Option<usize>,
    seed: Option<u64>,
    top_p: Option<f64>,
    tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub rows: Vec<SweepRow>,
    pub csv: String,
    pub model_id: String,
}

/// True when `text` has the casing most of the exemplars have.
pub fn case_matches(exemplars: &[&str]) -> impl Fn(&str) -> bool + Send + Sync {
    let loud = exemplars.iter().filter(|t| is_shouting(t)).count() * 2 > exemplars.len();
    move |t: &str| is_shouting(t) == loud
}

async fn sweep(State(state): State<Arc<ServiceState>>, body: Bytes) -> std::result::Result<Json<SweepResponse>, ApiError> {
    let req: SweepRequest = parse(&body)?;
    if req.inputs.is_empty() || req.inputs.iter().any(|t| t.trim().is_empty()) {
        return Err(ApiError::constraint("inputs", "must be non-empty texts"));
    }
    if req.lam_grid.is_empty() {
        return Err(ApiError::constraint("lam_grid", "must not be empty"));
    }
    if req.lam_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(ApiError::constraint("lam_grid", "values must lie in [0, 1]"));
    }
    if req.lam_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(ApiError::constraint("lam_grid", "must be sorted"));
    }
    let exemplars = exemplars_for(&state, req.target_exemplars, req.exemplar_set_id)?;
    let opts = options_for(&state, None, req.rerank_k, req.seed, req.top_p, req.tau)?;
    let st = state.clone();
    let rows = run_blocking(&state, move || {
        let ex: Vec<&str> = exemplars.iter().map(String::as_str).collect();
        let inputs: Vec<&str> = req.inputs.iter().map(String::as_str).collect();
        let accept = case_matches(&ex);
        Ok(interpolation_sweep(
            &st.pipeline,
            &inputs,
            &ex,
            &req.lam_grid,
            &opts,
            st.pipeline.scorers.embedder.as_ref(),
            &accept,
        )?)
    })
    .await?;
    Ok(Json(SweepResponse {
        csv: sweep_csv(&rows),
        rows,
        model_id: state.model_id.clone(),
    }))
}

async fn health(State(state): State<Arc<ServiceState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "model_id": state.model_id,
        "config_hash": state.config_hash,
        "embedder_id": state.pipeline.scorers.embedder.embedder_id(),
        "mode": state.pipeline.model.meta.mode,
    }))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/transfer", post(transfer))
        .route("/v1/embed", post(embed))
        .route("/v1/exemplar-sets", get(exemplar_sets))
        .route("/v1/sweep", post(sweep))
        .route("/v1/health", get(health))
        .with_state(state)
}

/// Bind address and checkpoint path after environment overrides.
pub fn resolve_endpoints(config: &PipelineConfig, checkpoint: Option<&Path>) -> Result<(String, std::path::PathBuf)> {
    let bind = std::env::var(ENV_BIND).unwrap_or_else(|_| config.service.bind.clone());
    let ckpt = std::env::var_os(ENV_CHECKPOINT)
        .map(Into::into)
        .or_else(|| checkpoint.map(Path::to_path_buf))
        .or_else(|| config.paths.checkpoint.clone())
        .ok_or_else(|| Error::invalid("checkpoint", "no checkpoint path given"))?;
    Ok((bind, ckpt))
}

/// Serves until the listener fails or the process receives Ctrl-C.
pub async fn serve(state: ServiceState, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
