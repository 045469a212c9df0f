//! HTTP routes. Handlers translate requests into store or central calls and
//! results back into responses; nothing else happens here.

use std::collections::BTreeSet;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, MatchedPath, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Router};
use etb_core::access::Actor;
use etb_core::central::{Central, CentralError};
use etb_core::error::NodeError;
use etb_core::federation::SyncBatch;
use etb_core::model::{CollectionMeta, LangCode, TermEntry, Visibility};
use etb_core::search::{MatchMode, SearchFilters, SearchQuery};
use etb_core::store::{ExchangeFormat, Node};
use etb_core::validate::ValidationIssue;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::logging::{Level, LogLine, LogSink};
use crate::sync::ResetRequest;

pub const REQUEST_ID: &str = "x-request-id";
const BODY_LIMIT: usize = 64 * 1024 * 1024;

// -- errors -------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub http_status: u16,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub issues: Option<Vec<ValidationIssue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current_revision: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { http_status: status.as_u16(), code, message: message.into(), issues: None, current_revision: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    pub fn not_found() -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such route")
    }

    fn unauthenticated() -> Self {
        NodeError::Unauthenticated.into()
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

impl From<NodeError> for ApiError {
    fn from(e: NodeError) -> Self {
        let status = match &e {
            NodeError::Unauthenticated | NodeError::InvalidCredentials => StatusCode::UNAUTHORIZED,
            NodeError::Unauthorized => StatusCode::FORBIDDEN,
            NodeError::UnknownCollection | NodeError::UnknownEntry | NodeError::UnknownGroup | NodeError::UnknownUser => {
                StatusCode::NOT_FOUND
            }
            NodeError::DuplicateName
            | NodeError::DuplicateUsername
            | NodeError::IdConflict(_)
            | NodeError::StaleRevision { .. }
            | NodeError::AlreadyApproved => StatusCode::CONFLICT,
            NodeError::ValidationFailed(_) => StatusCode::UNPROCESSABLE_ENTITY,
            NodeError::ParseFailed(_) | NodeError::InvalidQuery(_) | NodeError::EmptyBody | NodeError::InvalidInput(_) => {
                StatusCode::BAD_REQUEST
            }
            NodeError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut out = ApiError::new(status, e.code(), e.to_string());
        match e {
            NodeError::ValidationFailed(issues) => out.issues = Some(issues),
            NodeError::StaleRevision { current } => out.current_revision = Some(current),
            _ => {}
        }
        out
    }
}

impl From<CentralError> for ApiError {
    fn from(e: CentralError) -> Self {
        match e {
            CentralError::Unauthenticated => ApiError::unauthenticated(),
            CentralError::InvalidInput(m) => ApiError::bad_request(m),
            CentralError::Storage(m) => NodeError::Storage(m).into(),
        }
    }
}

/// Outcome code recorded by the logging layer.
#[derive(Clone)]
struct ErrorCode(&'static str);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let code = self.code;
        let mut response = (status, axum::Json(self)).into_response();
        response.extensions_mut().insert(ErrorCode(code));
        response
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body whose rejections come back as `400 BAD_REQUEST`.
struct Json<T>(T);

#[axum::async_trait]
impl<T, S> FromRequest<S> for Json<T>
where
    T: serde::de::DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        axum::Json::<T>::from_request(req, state)
            .await
            .map(|axum::Json(v)| Json(v))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

struct Query<T>(T);

#[axum::async_trait]
impl<T, S> FromRequestParts<S> for Query<T>
where
    T: serde::de::DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut axum::http::request::Parts, state: &S) -> Result<Self, Self::Rejection> {
        axum::extract::Query::<T>::from_request_parts(parts, state)
            .await
            .map(|axum::extract::Query(v)| Query(v))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

struct Path<T>(T);

#[axum::async_trait]
impl<T, S> FromRequestParts<S> for Path<T>
where
    T: serde::de::DeserializeOwned + Send,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut axum::http::request::Parts, state: &S) -> Result<Self, Self::Rejection> {
        axum::extract::Path::<T>::from_request_parts(parts, state)
            .await
            .map(|axum::extract::Path(v)| Path(v))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

fn ok_json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    (status, axum::Json(value)).into_response()
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

async fn not_found() -> ApiError {
    ApiError::not_found()
}

// -- callers and request tracking --------------------------------------------

/// Who sent the request, as established from the bearer token.
#[derive(Debug, Clone, PartialEq)]
enum Caller {
    Anonymous,
    User(Actor),
    Node(Uuid),
    Admin,
    BadToken,
}

impl Caller {
    fn label(&self) -> String {
        match self {
            Caller::Anonymous => "anonymous".into(),
            Caller::User(actor) => actor.label().into(),
            Caller::Node(id) => format!("node:{id}"),
            Caller::Admin => "admin".into(),
            Caller::BadToken => "invalid-token".into(),
        }
    }

    fn actor(&self) -> ApiResult<Actor> {
        match self {
            Caller::User(actor) => Ok(actor.clone()),
            Caller::BadToken => Err(ApiError::unauthenticated()),
            _ => Ok(Actor::Anonymous),
        }
    }
}

#[derive(Clone)]
enum Authority {
    Node(Arc<Node>),
    Central(Arc<CentralApp>),
}

impl Authority {
    fn identify(&self, token: Option<&str>) -> Caller {
        let Some(token) = token else { return Caller::Anonymous };
        match self {
            Authority::Node(node) => match node.resolve_token(token) {
                Ok(actor) => Caller::User(actor),
                Err(_) => Caller::BadToken,
            },
            Authority::Central(app) => {
                if app.is_admin(token) {
                    Caller::Admin
                } else {
                    app.central.authenticate_node(token).map_or(Caller::BadToken, Caller::Node)
                }
            }
        }
    }
}

#[derive(Clone)]
struct Tracker {
    authority: Authority,
    log: Arc<LogSink>,
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim()).filter(|t| !t.is_empty())
}

fn request_id(headers: &HeaderMap) -> String {
    headers
        .get(REQUEST_ID)
        .and_then(|v| v.to_str().ok())
        .filter(|v| !v.is_empty() && v.len() <= 128 && v.bytes().all(|b| b.is_ascii_graphic()))
        .map_or_else(|| Uuid::new_v4().to_string(), str::to_string)
}

async fn track(State(tracker): State<Tracker>, mut req: Request, next: Next) -> Response {
    let id = request_id(req.headers());
    let path = req
        .extensions()
        .get::<MatchedPath>()
        .map_or_else(|| req.uri().path().to_string(), |m| m.as_str().to_string());
    let route = format!("{} {path}", req.method());
    let caller = tracker.authority.identify(bearer(req.headers()));
    let actor = caller.label();
    req.extensions_mut().insert(caller);

    let mut response = next.run(req).await;
    let status = response.status().as_u16();
    let detail = response.extensions().get::<ErrorCode>().map(|c| c.0.to_string());
    if let Ok(value) = HeaderValue::from_str(&id) {
        response.headers_mut().insert(REQUEST_ID, value);
    }
    tracker.log.emit(&LogLine {
        ts: chrono::Utc::now(),
        level: Level::for_status(status),
        request_id: Some(id),
        actor,
        route,
        outcome: status.to_string(),
        detail,
    });
    response
}

fn finish<S: Clone + Send + Sync + 'static>(routes: Router<S>, state: S, tracker: Tracker) -> Router {
    routes
        .fallback(not_found)
        .with_state(state)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(middleware::from_fn_with_state(tracker, track))
}

// -- shared query parsing -----------------------------------------------------

#[derive(Debug, Default, Deserialize)]
struct SearchParams {
    q: Option<String>,
    mode: Option<String>,
    /// Comma-separated language codes.
    lang: Option<String>,
    /// Comma-separated domain names.
    domain: Option<String>,
    /// Comma-separated collection ids.
    collection: Option<String>,
    include_drafts: Option<bool>,
    offset: Option<usize>,
    limit: Option<usize>,
}

fn split(list: &Option<String>) -> Option<Vec<&str>> {
    list.as_deref().map(|l| l.split(',').map(str::trim).filter(|s| !s.is_empty()).collect())
}

impl SearchParams {
    fn filters(&self) -> ApiResult<SearchFilters> {
        let collection_ids = match split(&self.collection) {
            None => None,
            Some(ids) => Some(
                ids.into_iter()
                    .map(|s| Uuid::parse_str(s).map_err(|_| NodeError::InvalidQuery(format!("bad collection id {s:?}"))))
                    .collect::<Result<BTreeSet<_>, _>>()?,
            ),
        };
        Ok(SearchFilters {
            collection_ids,
            languages: split(&self.lang).map(|l| l.into_iter().map(LangCode::new).collect()),
            domains: split(&self.domain).map(|d| d.into_iter().map(str::to_string).collect()),
            include_drafts: self.include_drafts.unwrap_or(false),
        })
    }

    fn query(&self) -> ApiResult<SearchQuery> {
        let mode = match &self.mode {
            Some(m) => MatchMode::from_str(m).map_err(NodeError::InvalidQuery)?,
            None => MatchMode::default(),
        };
        let mut query = SearchQuery::new(self.q.clone().unwrap_or_default(), mode);
        query.filters = self.filters()?;
        query.offset = self.offset.unwrap_or(0);
        query.limit = self.limit.unwrap_or(query.limit);
        Ok(query)
    }
}

fn parse_format(format: Option<&str>) -> ApiResult<ExchangeFormat> {
    format
        .ok_or_else(|| ApiError::bad_request("format is required (tbx or csv)"))?
        .parse()
        .map_err(ApiError::bad_request)
}

pub fn content_type(format: ExchangeFormat) -> &'static str {
    match format {
        ExchangeFormat::Tbx => "application/x-tbx+xml; charset=utf-8",
        ExchangeFormat::Csv => "text/csv; charset=utf-8",
    }
}

// -- node routes --------------------------------------------------------------

pub fn node_router(node: Arc<Node>, log: Arc<LogSink>) -> Router {
    let routes = Router::new()
        .route("/api/v1/auth/token", post(issue_token))
        .route("/api/v1/search", get(node_search))
        .route("/api/v1/facets", get(node_facets))
        .route("/api/v1/collections", post(create_collection).get(list_collections))
        .route("/api/v1/collections/:cid", get(get_collection))
        .route("/api/v1/collections/:cid/visibility", axum::routing::patch(set_visibility))
        .route("/api/v1/collections/:cid/entries", post(create_entry))
        .route("/api/v1/collections/:cid/entries/:eid", get(get_entry).put(update_entry).delete(delete_entry))
        .route("/api/v1/collections/:cid/entries/:eid/approve", post(approve_entry))
        .route("/api/v1/collections/:cid/import", post(import))
        .route("/api/v1/collections/:cid/export", get(export))
        .route("/api/v1/entries/:eid/comments", get(list_comments).post(post_comment));
    let tracker = Tracker { authority: Authority::Node(node.clone()), log };
    finish(routes, node, tracker)
}

type NodeState = State<Arc<Node>>;
type Who = Extension<Caller>;

#[derive(Deserialize)]
struct Credentials {
    username: String,
    credential: String,
}

async fn issue_token(State(node): NodeState, Json(c): Json<Credentials>) -> ApiResult<Response> {
    let session = blocking(move || Ok(node.authenticate(&c.username, &c.credential)?)).await?;
    Ok(ok_json(StatusCode::OK, &session))
}

async fn node_search(State(node): NodeState, Extension(who): Who, Query(p): Query<SearchParams>) -> ApiResult<Response> {
    let actor = who.actor()?;
    let query = p.query()?;
    Ok(ok_json(StatusCode::OK, &node.search(&query, &actor)?))
}

async fn node_facets(State(node): NodeState, Extension(who): Who, Query(p): Query<SearchParams>) -> ApiResult<Response> {
    let actor = who.actor()?;
    Ok(ok_json(StatusCode::OK, &node.facet_counts(&p.filters()?, &actor)))
}

#[derive(Deserialize)]
struct NewCollection {
    name: String,
    owner_group: Uuid,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    domains: Vec<String>,
    #[serde(default)]
    declared_languages: Vec<LangCode>,
}

async fn create_collection(State(node): NodeState, Extension(who): Who, Json(body): Json<NewCollection>) -> ApiResult<Response> {
    let actor = who.actor()?;
    let collection = blocking(move || {
        let meta = CollectionMeta {
            id: Uuid::nil(),
            name: body.name,
            description: body.description,
            domains: body.domains,
            declared_languages: body.declared_languages,
        };
        let id = node.create_collection(meta, body.owner_group, &actor)?;
        Ok(node.collection(id, &actor)?)
    })
    .await?;
    Ok(ok_json(StatusCode::CREATED, &collection))
}

async fn list_collections(State(node): NodeState, Extension(who): Who) -> ApiResult<Response> {
    let actor = who.actor()?;
    Ok(ok_json(StatusCode::OK, &node.list_collections(&actor)))
}

async fn get_collection(State(node): NodeState, Extension(who): Who, Path(cid): Path<Uuid>) -> ApiResult<Response> {
    let actor = who.actor()?;
    Ok(ok_json(StatusCode::OK, &node.collection(cid, &actor)?))
}

#[derive(Deserialize)]
struct VisibilityChange {
    visibility: Visibility,
}

async fn set_visibility(
    State(node): NodeState,
    Extension(who): Who,
    Path(cid): Path<Uuid>,
    Json(body): Json<VisibilityChange>,
) -> ApiResult<Response> {
    let actor = who.actor()?;
    let collection = blocking(move || {
        node.set_visibility(cid, body.visibility, &actor)?;
        Ok(node.collection(cid, &actor)?)
    })
    .await?;
    Ok(ok_json(StatusCode::OK, &collection))
}

#[derive(Serialize)]
struct Written {
    entry_id: Uuid,
    revision: u64,
}

/// Entry from a request body; a missing id takes `id`.
fn entry_from(mut body: Value, id: Uuid) -> ApiResult<TermEntry> {
    let Some(fields) = body.as_object_mut() else {
        return Err(ApiError::bad_request("entry must be a JSON object"));
    };
    fields.entry("id").or_insert_with(|| json!(id));
    serde_json::from_value(body).map_err(|e| ApiError::bad_request(format!("invalid entry: {e}")))
}

async fn create_entry(
    State(node): NodeState,
    Extension(who): Who,
    Path(cid): Path<Uuid>,
    Json(body): Json<Value>,
) -> ApiResult<Response> {
    let actor = who.actor()?;
    let entry = entry_from(body, Uuid::new_v4())?;
    let entry_id = entry.id;
    let revision = blocking(move || Ok(node.upsert_entry(cid, entry, &actor)?)).await?;
    let status = if revision == 1 { StatusCode::CREATED } else { StatusCode::OK };
    Ok(ok_json(status, &Written { entry_id, revision }))
}

async fn update_entry(
    State(node): NodeState,
    Extension(who): Who,
    Path((cid, eid)): Path<(Uuid, Uuid)>,
    Json(body): Json<Value>,
) -> ApiResult<Response> {
    let actor = who.actor()?;
    let entry = entry_from(body, eid)?;
    if entry.id != eid {
        return Err(ApiError::bad_request("entry id does not match the path"));
    }
    let revision = blocking(move || Ok(node.upsert_entry(cid, entry, &actor)?)).await?;
    Ok(ok_json(StatusCode::OK, &Written { entry_id: eid, revision }))
}

async fn get_entry(State(node): NodeState, Extension(who): Who, Path((cid, eid)): Path<(Uuid, Uuid)>) -> ApiResult<Response> {
    let actor = who.actor()?;
    Ok(ok_json(StatusCode::OK, &node.get_entry(cid, eid, &actor)?))
}

async fn approve_entry(State(node): NodeState, Extension(who): Who, Path((cid, eid)): Path<(Uuid, Uuid)>) -> ApiResult<Response> {
    let actor = who.actor()?;
    let revision = blocking(move || Ok(node.approve_entry(cid, eid, &actor)?)).await?;
    Ok(ok_json(StatusCode::OK, &Written { entry_id: eid, revision }))
}

async fn delete_entry(State(node): NodeState, Extension(who): Who, Path((cid, eid)): Path<(Uuid, Uuid)>) -> ApiResult<Response> {
    let actor = who.actor()?;
    let tombstone = blocking(move || Ok(node.delete_entry(cid, eid, &actor)?)).await?;
    Ok(ok_json(StatusCode::OK, &tombstone))
}

#[derive(Deserialize)]
struct FormatParams {
    format: Option<String>,
    #[serde(default)]
    include_drafts: bool,
}

async fn import(
    State(node): NodeState,
    Extension(who): Who,
    Path(cid): Path<Uuid>,
    Query(p): Query<FormatParams>,
    body: Bytes,
) -> ApiResult<Response> {
    let actor = who.actor()?;
    let format = parse_format(p.format.as_deref())?;
    let report = blocking(move || Ok(node.import_collection(cid, format, &body, &actor)?)).await?;
    Ok(ok_json(StatusCode::OK, &report))
}

async fn export(
    State(node): NodeState,
    Extension(who): Who,
    Path(cid): Path<Uuid>,
    Query(p): Query<FormatParams>,
) -> ApiResult<Response> {
    let actor = who.actor()?;
    let format = parse_format(p.format.as_deref())?;
    let bytes = blocking(move || Ok(node.export_collection(cid, format, p.include_drafts, &actor)?)).await?;
    let extension = match format {
        ExchangeFormat::Tbx => "tbx",
        ExchangeFormat::Csv => "csv",
    };
    let disposition = format!("attachment; filename=\"{cid}.{extension}\"");
    Ok((
        [(header::CONTENT_TYPE, content_type(format).to_string()), (header::CONTENT_DISPOSITION, disposition)],
        bytes,
    )
        .into_response())
}

async fn list_comments(State(node): NodeState, Extension(who): Who, Path(eid): Path<Uuid>) -> ApiResult<Response> {
    let actor = who.actor()?;
    Ok(ok_json(StatusCode::OK, &node.list_comments(eid, &actor)?))
}

#[derive(Deserialize)]
struct NewComment {
    body: String,
}

async fn post_comment(
    State(node): NodeState,
    Extension(who): Who,
    Path(eid): Path<Uuid>,
    Json(c): Json<NewComment>,
) -> ApiResult<Response> {
    let actor = who.actor()?;
    let comment = blocking(move || Ok(node.post_comment(eid, &c.body, &actor)?)).await?;
    Ok(ok_json(StatusCode::CREATED, &comment))
}

// -- central routes -----------------------------------------------------------

pub struct CentralApp {
    pub central: Arc<Central>,
    admin_digest: Option<[u8; 32]>,
}

impl CentralApp {
    pub fn new(central: Arc<Central>, admin_token: Option<&str>) -> Self {
        let admin_digest = admin_token.filter(|t| !t.is_empty()).map(|t| Sha256::digest(t.as_bytes()).into());
        CentralApp { central, admin_digest }
    }

    /// Compares digests so the comparison time does not depend on the token.
    fn is_admin(&self, token: &str) -> bool {
        let digest: [u8; 32] = Sha256::digest(token.as_bytes()).into();
        self.admin_digest.is_some_and(|d| d.iter().zip(digest).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0)
    }
}

pub fn central_router(app: Arc<CentralApp>, log: Arc<LogSink>) -> Router {
    let routes = Router::new()
        .route("/sync/v1/register", post(register_node))
        .route("/sync/v1/batch", post(receive_batch))
        .route("/sync/v1/reset", post(reset_node))
        .route("/api/v1/network/nodes", get(list_nodes))
        .route("/api/v1/network/nodes/:node_id/entries/:eid", get(network_entry))
        .route("/api/v1/search", get(central_search))
        .route("/api/v1/facets", get(central_facets));
    let tracker = Tracker { authority: Authority::Central(app.clone()), log };
    finish(routes, app, tracker)
}

type CentralState = State<Arc<CentralApp>>;

#[derive(Serialize, Deserialize)]
pub struct Registration {
    pub node_id: Uuid,
    pub display_name: String,
}

#[derive(Serialize, Deserialize)]
pub struct Registered {
    pub node_id: Uuid,
    pub token: String,
}

async fn register_node(State(app): CentralState, Extension(who): Who, Json(r): Json<Registration>) -> ApiResult<Response> {
    if who != Caller::Admin {
        return Err(ApiError::unauthenticated());
    }
    let token = blocking(move || Ok(app.central.register(r.node_id, &r.display_name)?)).await?;
    Ok(ok_json(StatusCode::OK, &Registered { node_id: r.node_id, token }))
}

fn calling_node(who: &Caller) -> ApiResult<Uuid> {
    match who {
        Caller::Node(id) => Ok(*id),
        _ => Err(ApiError::unauthenticated()),
    }
}

async fn receive_batch(State(app): CentralState, Extension(who): Who, Json(batch): Json<SyncBatch>) -> ApiResult<Response> {
    let node_id = calling_node(&who)?;
    let ack = blocking(move || Ok(app.central.apply_batch(node_id, &batch)?)).await?;
    Ok(ok_json(StatusCode::OK, &ack))
}

async fn reset_node(State(app): CentralState, Extension(who): Who, Json(r): Json<ResetRequest>) -> ApiResult<Response> {
    let node_id = calling_node(&who)?;
    if r.node_id != node_id {
        return Err(ApiError::unauthenticated());
    }
    blocking(move || Ok(app.central.reset_node(node_id)?)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn list_nodes(State(app): CentralState) -> Response {
    ok_json(StatusCode::OK, &app.central.nodes())
}

async fn network_entry(State(app): CentralState, Path((node_id, eid)): Path<(Uuid, Uuid)>) -> ApiResult<Response> {
    let (collection_id, entry) = app.central.entry(node_id, eid).ok_or(NodeError::UnknownEntry)?;
    Ok(ok_json(StatusCode::OK, &json!({ "node_id": node_id, "collection_id": collection_id, "entry": entry })))
}

async fn central_search(State(app): CentralState, Query(p): Query<SearchParams>) -> ApiResult<Response> {
    Ok(ok_json(StatusCode::OK, &app.central.search(&p.query()?)?))
}

async fn central_facets(State(app): CentralState, Query(p): Query<SearchParams>) -> ApiResult<Response> {
    Ok(ok_json(StatusCode::OK, &app.central.facet_counts(&p.filters()?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_node_error_has_one_status() {
        let cases = [
            (NodeError::ValidationFailed(vec![]), 422, "VALIDATION_FAILED"),
            (NodeError::Unauthorized, 403, "UNAUTHORIZED"),
            (NodeError::Unauthenticated, 401, "UNAUTHENTICATED"),
            (NodeError::InvalidCredentials, 401, "INVALID_CREDENTIALS"),
            (NodeError::UnknownCollection, 404, "UNKNOWN_COLLECTION"),
            (NodeError::UnknownEntry, 404, "UNKNOWN_ENTRY"),
            (NodeError::UnknownGroup, 404, "UNKNOWN_GROUP"),
            (NodeError::UnknownUser, 404, "UNKNOWN_USER"),
            (NodeError::StaleRevision { current: 3 }, 409, "STALE_REVISION"),
            (NodeError::DuplicateName, 409, "DUPLICATE_NAME"),
            (NodeError::AlreadyApproved, 409, "ALREADY_APPROVED"),
            (NodeError::ParseFailed("x".into()), 400, "PARSE_FAILED"),
            (NodeError::InvalidQuery("x".into()), 400, "INVALID_QUERY"),
            (NodeError::InvalidInput("x".into()), 400, "BAD_REQUEST"),
            (NodeError::Storage("disk".into()), 500, "STORAGE_FAILURE"),
        ];
        for (error, status, code) in cases {
            let api = ApiError::from(error);
            assert_eq!((api.http_status, api.code), (status, code));
        }
        assert_eq!(ApiError::from(NodeError::StaleRevision { current: 3 }).current_revision, Some(3));
    }

    #[test]
    fn bearer_parsing() {
        let mut h = HeaderMap::new();
        assert_eq!(bearer(&h), None);
        h.insert(header::AUTHORIZATION, HeaderValue::from_static("Bearer abc"));
        assert_eq!(bearer(&h), Some("abc"));
        h.insert(header::AUTHORIZATION, HeaderValue::from_static("Basic abc"));
        assert_eq!(bearer(&h), None);
        h.insert(header::AUTHORIZATION, HeaderValue::from_static("bearer   "));
        assert_eq!(bearer(&h), None);
    }

    #[test]
    fn request_ids_are_echoed_or_generated() {
        let mut h = HeaderMap::new();
        assert_eq!(request_id(&h).len(), 36);
        h.insert(REQUEST_ID, HeaderValue::from_static("abc-123"));
        assert_eq!(request_id(&h), "abc-123");
        h.insert(REQUEST_ID, HeaderValue::from_static("has space"));
        assert_ne!(request_id(&h), "has space");
    }

    #[test]
    fn admin_token_check() {
        let app = CentralApp::new(Arc::new(Central::in_memory()), Some("s3cret"));
        assert!(app.is_admin("s3cret"));
        assert!(!app.is_admin("s3cre"));
        let closed = CentralApp::new(Arc::new(Central::in_memory()), None);
        assert!(!closed.is_admin(""));
    }

    #[test]
    fn search_params_build_queries() {
        let p = SearchParams {
            q: Some("dators".into()),
            mode: Some("prefix".into()),
            lang: Some("lv, EN".into()),
            limit: Some(5),
            ..SearchParams::default()
        };
        let q = p.query().unwrap();
        assert_eq!(q.mode, MatchMode::Prefix);
        assert_eq!(q.limit, 5);
        assert_eq!(q.filters.languages.unwrap().len(), 2);
        let bad = SearchParams { mode: Some("fuzzy".into()), ..SearchParams::default() };
        assert_eq!(bad.query().unwrap_err().code, "INVALID_QUERY");
        let bad = SearchParams { collection: Some("nope".into()), ..SearchParams::default() };
        assert_eq!(bad.filters().unwrap_err().code, "INVALID_QUERY");
    }
}
