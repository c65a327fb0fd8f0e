//! `/v1` routes. Each handler is a thin adapter over one library call.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderName, HeaderValue};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};
use tower_http::set_header::SetResponseHeaderLayer;

use aoglab::aog::{ParseTree, SemanticPartAOG};
use aoglab::eval::{evaluate, EvalReport};
use aoglab::geometry::Rect;
use aoglab::interaction::{AnnotatedRegionSet, InteractionSession, PruneEvidence};
use aoglab::tensor_store::{Dataset, GroupKind, ImageRecord, LayerGroups, Split};
use aoglab::viz::{render_parse, OverlayLayout};

use crate::error::{ApiError, ApiResult};
use crate::state::{aog_hash, AppState, SessionEntry};

pub const API_VERSION: u32 = 1;

/// Build the service router over a shared state.
pub fn router(state: Arc<AppState>) -> Router {
    let v1 = Router::new()
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}/images", get(list_images))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/parse", post(parse_image))
        .route("/sessions/{id}/overlay/{image_id}", get(overlay))
        .route("/sessions/{id}/annotate", post(annotate))
        .route("/sessions/{id}/prune", post(prune))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/metrics", get(metrics));
    Router::new()
        .nest("/v1", v1)
        .layer(SetResponseHeaderLayer::overriding(
            HeaderName::from_static("x-schema-version"),
            HeaderValue::from(API_VERSION),
        ))
        .layer(CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any))
        .with_state(state)
}

/// JSON body whose decode errors become 422 with the failing field path.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::unprocessable("", e.body_text()))?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(de)
            .map(ApiJson)
            .map_err(|e| ApiError::unprocessable(e.path().to_string(), e.inner().to_string()))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub category: String,
    pub n_images: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub layers: Vec<String>,
    pub layer_groups: LayerGroups,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetList {
    pub schema_version: u32,
    pub datasets: Vec<DatasetSummary>,
}

async fn list_datasets(State(st): State<Arc<AppState>>) -> ApiResult<Json<DatasetList>> {
    let mut datasets = Vec::new();
    for id in st.dataset_ids() {
        let m = st.manifest(&id)?;
        datasets.push(DatasetSummary {
            dataset_id: id,
            category: m.category.clone(),
            n_images: m.records.len(),
            n_train: m.records_in(Split::Train).count(),
            n_test: m.records_in(Split::Test).count(),
            layers: m.layer_geometries.iter().map(|g| g.layer_id.clone()).collect(),
            layer_groups: m.layer_groups.clone(),
        });
    }
    Ok(Json(DatasetList {
        schema_version: API_VERSION,
        datasets,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageList {
    pub schema_version: u32,
    pub dataset_id: String,
    pub images: Vec<ImageRecord>,
}

async fn list_images(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<ImageList>> {
    let m = st.manifest(&id)?;
    Ok(Json(ImageList {
        schema_version: API_VERSION,
        dataset_id: id,
        images: m.records,
    }))
}

/// A file name relative to the dataset directory, or the AOG itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AogRef {
    Path(String),
    Inline(Box<SemanticPartAOG>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset_id: String,
    pub aog: AogRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub pattern_id: String,
    pub template_id: String,
    pub layer_id: String,
    pub group: Option<GroupKind>,
    pub active: bool,
    /// Contribution in the active image's parse, if the pattern is in it.
    pub contribution: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub schema_version: u32,
    pub session_id: String,
    pub dataset_id: String,
    pub aog_ref: String,
    /// SHA-256 of the current AOG.
    pub aog_hash: String,
    pub active_image: Option<String>,
    pub n_ops: usize,
    pub parsed_images: Vec<String>,
    pub patterns: Vec<PatternSummary>,
}

/// Descriptor of a session against its dataset's layer groups.
pub fn describe(entry: &SessionEntry, groups: &LayerGroups) -> SessionDescriptor {
    let s = &entry.session;
    let aog = s.current_aog();
    let tree = entry.active_image.as_deref().and_then(|id| s.parses.get(id));
    let patterns = aog
        .templates
        .iter()
        .flat_map(|t| {
            t.patterns.iter().map(move |p| PatternSummary {
                pattern_id: p.pattern_id.clone(),
                template_id: t.template_id.clone(),
                layer_id: p.layer_id.clone(),
                group: groups.group_of(&p.layer_id),
                active: p.active,
                contribution: tree.and_then(|t| t.assignment(&p.pattern_id)).map(|a| a.contribution),
            })
        })
        .collect();
    SessionDescriptor {
        schema_version: API_VERSION,
        session_id: s.session_id.clone(),
        dataset_id: entry.dataset_id.clone(),
        aog_ref: entry.aog_ref.clone(),
        aog_hash: aog_hash(aog),
        active_image: entry.active_image.clone(),
        n_ops: s.ops.len(),
        parsed_images: s.parses.keys().cloned().collect(),
        patterns,
    }
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    ApiJson(req): ApiJson<CreateSession>,
) -> ApiResult<Response> {
    let data = st.dataset(&req.dataset_id)?;
    let (aog, aog_ref) = match req.aog {
        AogRef::Path(p) => (st.load_aog(&req.dataset_id, &p)?, p),
        AogRef::Inline(a) => (*a, "inline".to_string()),
    };
    aog.validate_against(data.layers())?;
    let entry = SessionEntry {
        dataset_id: req.dataset_id,
        aog_ref,
        active_image: None,
        session: InteractionSession::new(st.fresh_session_id(), aog)?,
    };
    let desc = describe(&entry, &data.manifest.layer_groups);
    st.create_session(entry)?;
    Ok((axum::http::StatusCode::CREATED, Json(desc)).into_response())
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionDescriptor>> {
    let entry = st.session(&id)?;
    let e = entry.lock().await;
    let groups = st.manifest(&e.dataset_id)?.layer_groups;
    Ok(Json(describe(&e, &groups)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseRequest {
    pub image_id: String,
}

/// Parse with the session's current AOG, through the content-hash cache.
pub fn cached_parse(st: &AppState, e: &mut SessionEntry, data: &Dataset, image_id: &str) -> ApiResult<ParseTree> {
    let hash = aog_hash(e.session.current_aog());
    let tree = match st.cached_parse(&e.dataset_id, image_id, &hash) {
        Some(t) => {
            data.manifest.record(image_id)?;
            e.session.parses.insert(image_id.to_string(), t.clone());
            t
        }
        None => {
            let t = e.session.parse_image(data, image_id)?.clone();
            st.cache_parse(&e.dataset_id, &hash, &t);
            t
        }
    };
    e.active_image = Some(image_id.to_string());
    Ok(tree)
}

async fn parse_image(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<ParseRequest>,
) -> ApiResult<Json<ParseTree>> {
    let entry = st.session(&id)?;
    let mut guard = entry
        .try_lock_owned()
        .map_err(|_| ApiError::conflict(format!("session `{id}` is being modified")))?;
    let data = st.dataset(&guard.dataset_id)?;
    let tree = blocking(move || {
        let tree = cached_parse(&st, &mut guard, &data, &req.image_id)?;
        st.persist(&guard)?;
        Ok(tree)
    })
    .await?;
    Ok(Json(tree))
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct OverlayQuery {
    pub group: Option<String>,
    /// `json` (default) or `png`.
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayResponse {
    pub schema_version: u32,
    pub layout: OverlayLayout,
    pub png_base64: String,
}

async fn overlay(
    State(st): State<Arc<AppState>>,
    Path((id, image_id)): Path<(String, String)>,
    Query(q): Query<OverlayQuery>,
) -> ApiResult<Response> {
    let group = q
        .group
        .as_deref()
        .map(|g| g.parse::<GroupKind>())
        .transpose()
        .map_err(|e| ApiError::unprocessable("group", e.to_string()))?;
    let as_png = match q.format.as_deref() {
        None | Some("json") => false,
        Some("png") => true,
        Some(other) => return Err(ApiError::unprocessable("format", format!("unknown format `{other}`"))),
    };
    let entry = st.session(&id)?;
    let guard = entry.lock_owned().await;
    let data = st.dataset(&guard.dataset_id)?;
    let o = blocking(move || {
        let s = &guard.session;
        let tree = s.parse_of(&image_id)?;
        let record = data.manifest.record(&image_id)?;
        Ok(render_parse(
            data.features(&image_id)?,
            s.current_aog(),
            tree,
            data.layers(),
            &data.manifest.layer_groups,
            &record.frame(),
            group,
        )?)
    })
    .await?;
    if as_png {
        Ok(([(header::CONTENT_TYPE, "image/png")], o.png).into_response())
    } else {
        Ok(Json(OverlayResponse {
            schema_version: API_VERSION,
            layout: o.layout,
            png_base64: base64::engine::general_purpose::STANDARD.encode(&o.png),
        })
        .into_response())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotateRequest {
    pub image_id: String,
    pub rectangles: Vec<Rect>,
    pub scope: GroupKind,
}

impl AnnotateRequest {
    pub fn regions(&self) -> AnnotatedRegionSet {
        AnnotatedRegionSet {
            image_id: self.image_id.clone(),
            rectangles: self.rectangles.clone(),
            layer_group_scope: self.scope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalList {
    pub schema_version: u32,
    pub image_id: String,
    pub scope: GroupKind,
    pub evidence: Vec<PruneEvidence>,
}

async fn annotate(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<AnnotateRequest>,
) -> ApiResult<Json<ProposalList>> {
    let entry = st.session(&id)?;
    let guard = entry.lock_owned().await;
    let data = st.dataset(&guard.dataset_id)?;
    let list = blocking(move || {
        let regions = req.regions();
        let evidence = guard.session.propose_prunes(&data, &regions, &data.manifest)?;
        Ok(ProposalList {
            schema_version: API_VERSION,
            image_id: req.image_id,
            scope: req.scope,
            evidence,
        })
    })
    .await?;
    Ok(Json(list))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PruneRequest {
    pub pattern_ids: Vec<String>,
    /// The annotation the prunes came from, kept in the op log.
    #[serde(default)]
    pub annotation: Option<AnnotateRequest>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UndoRequest {
    #[serde(default = "one")]
    pub k: usize,
}

fn one() -> usize {
    1
}

// Run a mutation under the writer lock, refresh the cache, persist, describe.
async fn mutate(
    st: Arc<AppState>,
    id: String,
    f: impl FnOnce(&mut SessionEntry, &Dataset) -> aoglab::Result<()> + Send + 'static,
) -> ApiResult<Json<SessionDescriptor>> {
    let entry = st.session(&id)?;
    let mut guard = entry
        .try_lock_owned()
        .map_err(|_| ApiError::conflict(format!("session `{id}` is being modified")))?;
    let data = st.dataset(&guard.dataset_id)?;
    let desc = blocking(move || {
        f(&mut guard, &data)?;
        let hash = aog_hash(guard.session.current_aog());
        for t in guard.session.parses.values() {
            st.cache_parse(&guard.dataset_id, &hash, t);
        }
        st.persist(&guard)?;
        Ok(describe(&guard, &data.manifest.layer_groups))
    })
    .await?;
    Ok(Json(desc))
}

async fn prune(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<PruneRequest>,
) -> ApiResult<Json<SessionDescriptor>> {
    mutate(st, id, move |e, data| {
        let regions = req.annotation.as_ref().map(AnnotateRequest::regions);
        e.session.apply_prunes(data, &req.pattern_ids, regions.as_ref())
    })
    .await
}

async fn undo(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<UndoRequest>,
) -> ApiResult<Json<SessionDescriptor>> {
    mutate(st, id, move |e, data| e.session.undo(data, req.k)).await
}

async fn metrics(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<EvalReport>> {
    let entry = st.session(&id)?;
    let guard = entry.lock_owned().await;
    let data = st.dataset(&guard.dataset_id)?;
    let report = blocking(move || Ok(evaluate(guard.session.current_aog(), &data)?)).await?;
    Ok(Json(report))
}
