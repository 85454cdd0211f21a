//! HTTP facade over the interaction engine: serves sub-graphs to an
//! interactor, takes edge proposals into a durable log, and runs the
//! evaluation protocols in the background.
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | POST | `/api/sessions` | `{"split":"E2_1","criterion":"mismatch","interactor":"ann","count":20,"seed":0}` → 201 session |
//! | GET | `/api/session/{id}/next` | sub-graph JSON, 204 when the queue is empty |
//! | POST | `/api/session/{id}/edges` | `[{"subgraph_id":…,"src":"u1","dst":"u4","relation":"interact_uu"}]` → `{accepted, duplicate, rejected}` |
//! | POST | `/api/runs` | `{"protocol":1,"splits":["E1_1","E2_1"],"source":"log"}` → 202 `{id,status}` |
//! | GET | `/api/runs/{id}` | `{id,status,report?,error?}` |
//! | GET | `/api/graph/{split}` | nodes and edges of one split |
//! | GET | `/api/metrics/{split}` | accuracy, macro-F1 and interaction edge count |

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use factnet_core::experiment::{dev_sources, event_members, sample_pairs, simulate_split, ExperimentError};
use factnet_core::graph::{
    Edge, FactualityLabel, GraphError, InfoGraph, NodeId, NodeKind, Partition, Relation, SplitSpec,
};
use factnet_core::interaction::{
    group_by_split, run_protocol, EdgeProposal, InteractionError, InteractionLog, Protocol, ProtocolRun,
    ProtocolSetup, Provenance, ScopeRegistry,
};
use factnet_core::metrics::EvalReport;
use factnet_core::rgcn::{RgcnError, RgcnModel};
use factnet_core::sampler::Criterion;
use factnet_core::subgraph::{attach_metadata, build_subgraph, InteractionSubGraph, SubgraphLimits};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("sub-graph {0} was not served in this session")]
    StaleSubgraph(String),
    #[error("{detail}")]
    Rejected { rejected: usize, detail: String },
    #[error("{0}")]
    BadRequest(String),
    #[error("a protocol run is already in progress")]
    Busy,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] RgcnError),
    #[error(transparent)]
    Interaction(#[from] InteractionError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownRun(_) => StatusCode::NOT_FOUND,
            ServiceError::StaleSubgraph(_) | ServiceError::Busy => StatusCode::CONFLICT,
            ServiceError::Rejected { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Interaction(InteractionError::StaleSubgraph(_)) => StatusCode::CONFLICT,
            ServiceError::Interaction(InteractionError::InvalidEndpoint { .. }) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::UnknownRun(_) => "unknown_run",
            ServiceError::StaleSubgraph(_) | ServiceError::Interaction(InteractionError::StaleSubgraph(_)) => {
                "stale_subgraph"
            }
            ServiceError::Rejected { .. } | ServiceError::Interaction(InteractionError::InvalidEndpoint { .. }) => {
                "invalid_proposal"
            }
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Busy => "run_in_progress",
            _ => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code(), "detail": self.to_string() });
        if let ServiceError::Rejected { rejected, .. } = &self {
            body["accepted"] = json!(0);
            body["duplicate"] = json!(0);
            body["rejected"] = json!(rejected);
        }
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

/// Where the service reads its inputs from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Graph document with splits.
    pub graph: PathBuf,
    pub checkpoint: PathBuf,
    /// Interaction log; created on first accepted proposal.
    pub log: PathBuf,
}

#[derive(Debug)]
struct Session {
    split: Partition,
    criterion: Criterion,
    interactor: String,
    queue: VecDeque<InteractionSubGraph>,
    served: ScopeRegistry,
    served_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase", tag = "status")]
pub enum RunStatus {
    Running,
    Done { report: ProtocolRun },
    Failed { error: String },
}

#[derive(Debug, Default)]
struct Runs {
    next: u64,
    busy: bool,
    all: BTreeMap<String, RunStatus>,
}

#[derive(Debug)]
struct Live {
    graph: InfoGraph,
    sessions: BTreeMap<String, Session>,
    next_session: u64,
}

struct Shared {
    base: InfoGraph,
    splits: SplitSpec,
    model: RgcnModel,
    log: InteractionLog,
    limits: SubgraphLimits,
    live: Mutex<Live>,
    runs: Mutex<Runs>,
    run_gate: Arc<RwLock<()>>,
}

/// Shared service state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Builds the state and replays `log` on top of `graph`.
    pub fn new(
        graph: InfoGraph,
        splits: SplitSpec,
        model: RgcnModel,
            log: InteractionLog,
    ) -> Result<Self, ServiceError> {
        if model.dims() != graph.dims() {
            return Err(ServiceError::BadRequest("checkpoint does not match the graph's feature sizes".into()));
        }
        let mut live = graph.clone();
        log.replay(&mut live)?;
        Ok(Self(Arc::new(Shared {
            base: graph,
            splits,
            model,
            log,
            limits: SubgraphLimits::default(),
            live: Mutex::new(Live {
                graph: live,
                sessions: BTreeMap::new(),
                next_session: 1,
            }),
            runs: Mutex::new(Runs {
                next: 1,
                ..Runs::default()
            }),
            run_gate: Arc::new(RwLock::new(())),
        })))
    }

    pub fn load(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let (graph, splits) = InfoGraph::load(&cfg.graph)?;
        let model = RgcnModel::load(&cfg.checkpoint)?;
        Self::new(graph, splits, model, InteractionLog::new(&cfg.log))
    }

    /// Blocks background runs from starting their work until the guard
    /// is dropped. Lets callers observe a run in the running state.
    pub fn hold_runs(&self) -> std::sync::RwLockWriteGuard<'_, ()> {
        self.0.run_gate.write().expect("run gate poisoned")
    }

    /// Interaction edges currently in the live graph.
    pub fn interaction_edges(&self) -> Vec<Edge> {
        let live = self.0.live.lock().expect("state poisoned");
        live.graph.edges().iter().copied().filter(|e| e.rel.is_interaction()).collect()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/session/{id}/next", get(next_subgraph))
        .route("/api/session/{id}/edges", post(submit_edges))
        .route("/api/runs", post(start_run))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/graph/{split}", get(graph_view))
        .route("/api/metrics/{split}", get(metrics))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: AppState, bind: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}

fn parse_split(s: &str) -> ApiResult<Partition> {
    s.parse().map_err(|e: GraphError| ServiceError::BadRequest(e.to_string()))
}

#[derive(Debug, Deserialize)]
pub struct NewSession {
    pub split: String,
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    #[serde(default)]
    pub interactor: Option<String>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_criterion() -> Criterion {
    Criterion::Mismatch
}

fn default_count() -> usize {
    20
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SessionInfo {
    pub id: String,
    pub split: Partition,
    pub criterion: Criterion,
    pub interactor: String,
    pub queued: usize,
}

async fn create_session(State(st): State<AppState>, Json(req): Json<NewSession>) -> ApiResult<impl IntoResponse> {
    let split = parse_split(&req.split)?;
    if !matches!(split, Partition::E1_1 | Partition::E2_1) {
        return Err(ServiceError::BadRequest(format!("interactions are collected on E1_1 and E2_1, not {split}")));
    }
    let sh = &st.0;
    let mut live = sh.live.lock().expect("state poisoned");
    let pairs = sample_pairs(&live.graph, &sh.splits, &sh.model, split, req.criterion, req.count, req.seed)?;
    let sources = event_members(&sh.splits, NodeKind::Source, split.event());
    let preds = sh.model.predict_sources(&live.graph, &sources)?;
    let mut queue = VecDeque::new();
    for p in pairs {
        let mut sg = build_subgraph(&live.graph, p, &sh.limits)?;
        attach_metadata(&live.graph, &mut sg, Some(&preds))
            .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        queue.push_back(sg);
    }
    let id = format!("sess-{}", live.next_session);
    live.next_session += 1;
    let interactor = req.interactor.unwrap_or_else(|| "anonymous".into());
    let info = SessionInfo {
        id: id.clone(),
        split,
        criterion: req.criterion,
        interactor: interactor.clone(),
        queued: queue.len(),
    };
    live.sessions.insert(
        id,
        Session {
            split,
            criterion: req.criterion,
            interactor,
            queue,
            served: ScopeRegistry::new(),
            served_ids: BTreeSet::new(),
        },
    );
    Ok((StatusCode::CREATED, Json(info)))
}

async fn next_subgraph(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let mut live = st.0.live.lock().expect("state poisoned");
    let session = live.sessions.get_mut(&id).ok_or(ServiceError::UnknownSession(id))?;
    let Some(sg) = session.queue.pop_front() else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    session.served.register_subgraph(&sg);
    session.served_ids.insert(sg.id.clone());
    tracing::debug!(split = %session.split, criterion = %session.criterion, subgraph = %sg.id, "served");
    Ok(Json(sg).into_response())
}

/// Proposal as submitted by a client; provenance and time are filled in
/// by the service when absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposalInput {
    pub subgraph_id: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: Relation,
    #[serde(default)]
    pub provenance: Option<Provenance>,
    #[serde(default)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub accepted: usize,
    pub duplicate: usize,
    pub rejected: usize,
}

async fn submit_edges(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(batch): Json<Vec<ProposalInput>>,
) -> ApiResult<Json<EdgeCounts>> {
    let sh = &st.0;
    let mut live = sh.live.lock().expect("state poisoned");
    let session = live.sessions.get(&id).ok_or_else(|| ServiceError::UnknownSession(id.clone()))?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let proposals: Vec<EdgeProposal> = batch
        .into_iter()
        .map(|p| EdgeProposal {
            subgraph_id: p.subgraph_id,
            src: p.src,
            dst: p.dst,
            relation: p.relation,
            provenance: p.provenance.unwrap_or_else(|| Provenance::Human(session.interactor.clone())),
            timestamp: p.timestamp.unwrap_or(now),
        })
        .collect();
    if let Some(p) = proposals.iter().find(|p| !session.served_ids.contains(&p.subgraph_id)) {
        return Err(ServiceError::StaleSubgraph(p.subgraph_id.clone()));
    }
    let mut invalid = Vec::new();
    for p in &proposals {
        if let Err(e) = session.served.validate(p) {
            invalid.push(e.to_string());
        }
    }
    if !invalid.is_empty() {
        return Err(ServiceError::Rejected {
            rejected: invalid.len(),
            detail: invalid.join("; "),
        });
    }
    let mut counts = EdgeCounts::default();
    let mut seen = BTreeSet::new();
    let mut fresh = Vec::new();
    for p in proposals {
        let (s, d, r) = p.edge_key();
        if live.graph.has_edge(s, d, r) || !seen.insert((s, d, r)) {
            counts.duplicate += 1;
        } else {
            fresh.push(p);
        }
    }
    // durable before the graph changes or the client hears back
    sh.log.append(&fresh)?;
    counts.accepted = factnet_core::interaction::apply_proposals(&mut live.graph, &fresh)?;
    Ok(Json(counts))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ProtocolSpec {
    Number(u8),
    Name(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalSource {
    /// Proposals accepted through the edges endpoint.
    #[default]
    Log,
    /// Fresh sub-graphs answered by the simulated interactor.
    Simulated,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RunRequest {
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub splits: Option<Vec<String>>,
    #[serde(default)]
    pub source: ProposalSource,
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_count")]
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunView {
    pub id: String,
    #[serde(flatten)]
    pub status: RunStatus,
}

fn parse_protocol(spec: &ProtocolSpec) -> ApiResult<Protocol> {
    let bad = |s: String| ServiceError::BadRequest(format!("unknown protocol {s}"));
    match spec {
        ProtocolSpec::Number(n) => Protocol::from_number(*n).ok_or_else(|| bad(n.to_string())),
        ProtocolSpec::Name(s) => s.parse().map_err(|_| bad(s.clone())),
    }
}

/// Proposals for `protocol`, keyed by interaction split.
fn gather_proposals(
    sh: &Shared,
    protocol: Protocol,
    req: &RunRequest,
) -> Result<BTreeMap<Partition, Vec<EdgeProposal>>, ServiceError> {
    let mut out: BTreeMap<Partition, Vec<EdgeProposal>> = BTreeMap::new();
    match req.source {
        ProposalSource::Log => {
            for (split, ps) in group_by_split(&sh.splits, sh.log.read()?)? {
                if protocol.interaction_splits().contains(&split) {
                    out.insert(split, ps);
                }
            }
        }
        ProposalSource::Simulated => {
            for &split in protocol.interaction_splits() {
                let pairs = sample_pairs(&sh.base, &sh.splits, &sh.model, split, req.criterion, req.count, req.seed)?;
                let (_, proposals) = simulate_split(&sh.base, &pairs, &sh.limits)?;
                out.insert(split, proposals);
            }
        }
    }
    Ok(out)
}

fn execute_run(sh: &Shared, protocol: Protocol, req: &RunRequest) -> Result<ProtocolRun, ServiceError> {
    let proposals = gather_proposals(sh, protocol, req)?;
    let dev = dev_sources(&sh.splits);
    let setup = ProtocolSetup {
        graph: &sh.base,
        splits: &sh.splits,
        dev: &dev,
        retrain_epochs: (sh.model.config().epochs / 2).max(1),
        purity: false,
        seed: req.seed,
    };
    Ok(run_protocol(&sh.model, &setup, protocol, &proposals)?.run)
}

async fn start_run(State(st): State<AppState>, Json(req): Json<RunRequest>) -> ApiResult<impl IntoResponse> {
    let protocol = parse_protocol(&req.protocol)?;
    if let Some(splits) = &req.splits {
        let asked: BTreeSet<Partition> = splits.iter().map(|s| parse_split(s)).collect::<Result<_, _>>()?;
        let expected: BTreeSet<Partition> = protocol.interaction_splits().iter().copied().collect();
        if asked != expected {
            let names: Vec<&str> = expected.iter().map(|p| p.as_str()).collect();
            return Err(ServiceError::BadRequest(format!(
                "{protocol} takes interactions on {}",
                names.join(" and ")
            )));
        }
    }
    let id = {
        let mut runs = st.0.runs.lock().expect("state poisoned");
        if runs.busy {
            return Err(ServiceError::Busy);
        }
        runs.busy = true;
        let id = format!("run-{}", runs.next);
        runs.next += 1;
        runs.all.insert(id.clone(), RunStatus::Running);
        id
    };
    let worker = st.clone();
    let run_id = id.clone();
    tokio::task::spawn_blocking(move || {
        let sh = &worker.0;
        let result = {
            let _gate = sh.run_gate.read().expect("run gate poisoned");
            execute_run(sh, protocol, &req)
        };
        let status = match result {
            Ok(report) => RunStatus::Done { report },
            Err(e) => RunStatus::Failed { error: e.to_string() },
        };
        tracing::info!(run = %run_id, "run finished");
        let mut runs = sh.runs.lock().expect("state poisoned");
        runs.all.insert(run_id, status);
        runs.busy = false;
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(RunView {
            id,
            status: RunStatus::Running,
        }),
    ))
}

async fn get_run(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RunView>> {
    let runs = st.0.runs.lock().expect("state poisoned");
    let status = runs.all.get(&id).cloned().ok_or_else(|| ServiceError::UnknownRun(id.clone()))?;
    Ok(Json(RunView { id, status }))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphNodeView {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<FactualityLabel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphView {
    pub split: Partition,
    pub nodes: Vec<GraphNodeView>,
    pub edges: Vec<Edge>,
}

async fn graph_view(State(st): State<AppState>, Path(split): Path<String>) -> ApiResult<Json<GraphView>> {
    let split = parse_split(&split)?;
    let sh = &st.0;
    let live = sh.live.lock().expect("state poisoned");
    let g = &live.graph;
    let mut ids: Vec<NodeId> = NodeKind::ALL.iter().flat_map(|&k| sh.splits.members(k, split)).collect();
    ids.sort_unstable();
    let inside: BTreeSet<NodeId> = ids.iter().copied().collect();
    let nodes = ids
        .iter()
        .map(|&n| GraphNodeView {
            id: n,
            kind: n.kind,
            label: g.label(n),
            metadata: g.metadata(n).map(|m| m.fields.clone()).unwrap_or_default(),
        })
        .collect();
    let edges = g
        .edges()
        .iter()
        .copied()
        .filter(|e| inside.contains(&e.src) && inside.contains(&e.dst))
        .collect();
    Ok(Json(GraphView { split, nodes, edges }))
}

async fn metrics(State(st): State<AppState>, Path(split): Path<String>) -> ApiResult<Json<EvalReport>> {
    let split = parse_split(&split)?;
    let sh = &st.0;
    let live = sh.live.lock().expect("state poisoned");
    let g = &live.graph;
    let sources = sh.splits.members(NodeKind::Source, split);
    let preds = sh.model.predict_sources(g, &sources)?;
    let touches = |e: &&Edge| {
        e.rel.is_interaction()
            && [e.src, e.dst]
                .iter()
                .any(|&n| sh.splits.get(n) == Some(split))
    };
    let added = g.edges().iter().filter(touches).count() - sh.base.edges().iter().filter(touches).count();
    let report = EvalReport::from_predictions(split.display_name(), g, &preds, &sources, added)
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    Ok(Json(report))
}
