//! A pre-screening session: the multi-stage query loop driven by a human.
//!
//! Sessions change only through [`Event`]s. The service appends each event
//! to the session's log before applying it, so replaying the log rebuilds
//! the same `(q, r)`, the same recommendations (they depend only on the
//! spec, the seed and the responses so far) and the same final matching.

use edgequery::matching::MatchingReport;
use edgequery::selection::{greedy_next_edge, mcts_next_edge, Instance, LegalConfig, NextEdge};
use edgequery::uncertainty::{high_risk_edges, make_kpd, make_simple, DistributionFile};
use edgequery::{
    solve_policy, DistributionSpec, EdgeSet, EvalConfig, Evaluator, ExchangeGraph, LegalEdgeSets, MctsConfig, PolicyKind,
    SearchBudget, StructureKind,
};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};

/// Which graph a new session works on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphRef {
    /// A built-in graph by name.
    Fixture(String),
    /// A graph previously stored with `POST /graphs`.
    Uploaded(String),
    Inline(ExchangeGraph),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionRequest {
    #[default]
    Simple,
    /// High-risk edges listed explicitly, or drawn as the edges entering a
    /// random fraction of the pair vertices.
    Kpd {
        #[serde(default)]
        high_risk: Option<Vec<usize>>,
        #[serde(default)]
        high_risk_fraction: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
    Inline(DistributionFile),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMethod {
    #[default]
    Greedy,
    Mcts,
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub graph: GraphRef,
    #[serde(default)]
    pub distribution: DistributionRequest,
    #[serde(default)]
    pub policy: Option<PolicyKind>,
    #[serde(default)]
    pub legal: LegalConfig,
    #[serde(default)]
    pub method: SessionMethod,
    #[serde(default)]
    pub seed: u64,
    /// Tree-search iterations per recommendation; capped by the server.
    #[serde(default)]
    pub mcts_iterations: Option<u64>,
    #[serde(default)]
    pub mcts_lookahead: Option<usize>,
}

/// Everything a session depends on, fully materialized so that replay
/// needs neither fixtures nor uploads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub graph_label: String,
    pub graph: ExchangeGraph,
    pub distribution: DistributionFile,
    pub policy: PolicyKind,
    pub legal: LegalConfig,
    pub method: SessionMethod,
    pub seed: u64,
    pub mcts_iterations: u64,
    pub mcts_lookahead: usize,
}

impl SessionSpec {
    /// Materializes a create request against an already resolved graph.
    pub fn resolve(req: CreateSession, graph: ExchangeGraph, graph_label: String, iteration_cap: u64) -> ApiResult<Self> {
        let spec = match req.distribution {
            DistributionRequest::Simple => make_simple(&graph),
            DistributionRequest::Kpd { high_risk, high_risk_fraction, seed } => {
                let risky = match (high_risk, high_risk_fraction) {
                    (Some(_), Some(_)) => {
                        return Err(ApiError::bad_request(
                            "invalid_distribution",
                            "give either high_risk or high_risk_fraction, not both",
                        ))
                    }
                    (Some(edges), None) => edges,
                    (None, Some(f)) if (0.0..=1.0).contains(&f) => high_risk_edges(&graph, f, seed),
                    (None, Some(f)) => {
                        return Err(ApiError::bad_request(
                            "invalid_distribution",
                            format!("high_risk_fraction {f} is outside [0, 1]"),
                        ))
                    }
                    (None, None) => Vec::new(),
                };
                make_kpd(&graph, &risky, seed)?
            }
            DistributionRequest::Inline(file) => {
                let spec = DistributionSpec::try_from(file)?;
                spec.check_covers(&graph)?;
                spec
            }
        };
        let iterations = req.mcts_iterations.unwrap_or(iteration_cap);
        if iterations == 0 || iterations > iteration_cap {
            return Err(ApiError::bad_request(
                "invalid_config",
                format!("mcts_iterations must be in 1..={iteration_cap}"),
            ));
        }
        let lookahead = req.mcts_lookahead.unwrap_or(1);
        if lookahead == 0 {
            return Err(ApiError::bad_request("invalid_config", "mcts_lookahead must be at least 1"));
        }
        Ok(SessionSpec {
            graph_label,
            distribution: DistributionFile::from(&spec),
            graph,
            policy: req.policy.unwrap_or(PolicyKind::MaxWeight),
            legal: req.legal,
            method: req.method,
            seed: req.seed,
            mcts_iterations: iterations,
            mcts_lookahead: lookahead,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Accepted,
    Rejected,
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created { at_ms: u64, id: String, spec: Box<SessionSpec> },
    Response { at_ms: u64, edge_id: usize, response: Response },
    Finalized { at_ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub edge_id: usize,
    pub response: Response,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureView {
    pub index: usize,
    pub kind: StructureKind,
    pub vertices: Vec<usize>,
    pub edges: Vec<usize>,
    pub nominal_weight: f64,
}

/// The next edge to query and what each answer would lead to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub edge_id: usize,
    pub source: usize,
    pub target: usize,
    pub weight: f64,
    /// Rejection probability of the edge.
    pub p_reject: f64,
    /// Expected final weight if the edge is accepted and querying stops.
    pub accept_value: f64,
    /// Expected final weight if the edge is rejected and querying stops.
    pub reject_value: f64,
    pub expected_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_visits: Option<u64>,
    /// Cycles and chains that use the edge.
    pub structures: Vec<StructureView>,
}

/// Body of `GET /sessions/{id}/recommendation`. `step` is the number of
/// responses the recommendation accounts for; it goes stale as soon as
/// another response is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub session_id: String,
    pub step: usize,
    pub recommendation: Option<Recommendation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub label: String,
    pub vertices: usize,
    pub edges: usize,
    pub ndds: usize,
    pub structures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetView {
    pub used: usize,
    /// Budget Γ, if the session has one.
    pub total: Option<usize>,
    /// Edges that could still be queried legally.
    pub legal_remaining: usize,
}

/// Outcome of finalizing: the policy's matching for the final `(q, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalResult {
    pub matching: MatchingReport,
    /// `W(M(r); q, r)`.
    pub expected_weight: f64,
    /// The objective the policy maximized.
    pub policy_value: f64,
    pub at_ms: u64,
}

/// Body of `GET /sessions/{id}` and of every mutating endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: Status,
    pub created_at_ms: u64,
    pub graph: GraphSummary,
    pub policy: PolicyKind,
    pub method: SessionMethod,
    pub seed: u64,
    pub legal: LegalConfig,
    pub budget: BudgetView,
    /// `V^S(∅)`: expected weight without any queries.
    pub baseline: f64,
    pub queried: Vec<usize>,
    pub rejected: Vec<usize>,
    pub history: Vec<HistoryEntry>,
    /// The policy's matching for the current `(q, r)`.
    pub matching: MatchingReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<FinalResult>,
}

pub struct Session {
    id: String,
    spec: SessionSpec,
    created_at_ms: u64,
    instance: Instance,
    legal: LegalEdgeSets,
    q: EdgeSet,
    r: EdgeSet,
    history: Vec<HistoryEntry>,
    status: Status,
    baseline: f64,
    cached: Option<RecommendationView>,
    result: Option<FinalResult>,
    log: Vec<Event>,
}

impl Session {
    pub fn create(id: String, spec: SessionSpec, at_ms: u64) -> ApiResult<Self> {
        let graph = spec.graph.clone();
        let distribution = DistributionSpec::try_from(spec.distribution.clone())?;
        let legal = LegalEdgeSets::new(&graph, &spec.legal)?;
        let instance = Instance::new(graph, distribution)?;
        let m = instance.edge_count();
        let mut session = Session {
            id,
            spec,
            created_at_ms: at_ms,
            instance,
            legal,
            q: EdgeSet::empty(m),
            r: EdgeSet::empty(m),
            history: Vec::new(),
            status: Status::Active,
            baseline: 0.0,
            cached: None,
            result: None,
            log: Vec::new(),
        };
        session.log.push(session.created_event());
        session.baseline = session.evaluator().outcome_value(&session.q, &session.r)?;
        Ok(session)
    }

    /// Rebuilds a session from its log.
    pub fn replay(events: impl IntoIterator<Item = Event>) -> ApiResult<Self> {
        let mut events = events.into_iter();
        let mut session = match events.next() {
            Some(Event::Created { at_ms, id, spec }) => Session::create(id, *spec, at_ms)?,
            _ => return Err(ApiError::internal("session log does not start with a created event")),
        };
        for event in events {
            session.apply(event)?;
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn status(&self) -> Status {
        self.status
    }

    /// Every event applied so far, starting with the creation.
    pub fn events(&self) -> &[Event] {
        &self.log
    }

    pub fn created_event(&self) -> Event {
        Event::Created { at_ms: self.created_at_ms, id: self.id.clone(), spec: Box::new(self.spec.clone()) }
    }

    fn evaluator(&self) -> Evaluator<'_> {
        Evaluator::new(&self.instance, self.spec.policy, EvalConfig { seed: self.spec.seed, ..EvalConfig::default() })
    }

    fn ensure_active(&self) -> ApiResult<()> {
        match self.status {
            Status::Active => Ok(()),
            Status::Finalized => Err(ApiError::conflict("session_finalized", "the session has been finalized")),
        }
    }

    /// Checks that `event` can be applied now, without changing anything.
    pub fn validate(&self, event: &Event) -> ApiResult<()> {
        match event {
            Event::Created { .. } => Err(ApiError::internal("session already exists")),
            Event::Finalized { .. } => match self.status {
                Status::Active => Ok(()),
                Status::Finalized => Err(ApiError::conflict("already_finalized", "the session was already finalized")),
            },
            Event::Response { edge_id, .. } => {
                self.ensure_active()?;
                let e = *edge_id;
                if e >= self.instance.edge_count() {
                    return Err(ApiError::unprocessable("unknown_edge", format!("edge {e} does not exist"))
                        .with_detail(serde_json::json!({ "edge_id": e, "edges": self.instance.edge_count() })));
                }
                if self.q.contains(e) {
                    let previous = self.history.iter().find(|h| h.edge_id == e).map(|h| h.response);
                    return Err(ApiError::conflict("already_queried", format!("edge {e} was already queried"))
                        .with_detail(serde_json::json!({ "edge_id": e, "response": previous })));
                }
                self.legal.check(&self.q.with(e)).map_err(|err| {
                    let reason = match err {
                        edgequery::Error::IllegalQuerySet(reason) => reason,
                        other => other.to_string(),
                    };
                    ApiError::unprocessable("illegal_query", format!("querying edge {e} is not allowed: {reason}"))
                        .with_detail(serde_json::json!({ "edge_id": e, "reason": reason }))
                })
            }
        }
    }

    pub fn apply(&mut self, event: Event) -> ApiResult<()> {
        self.validate(&event)?;
        self.log.push(event.clone());
        match event {
            Event::Created { .. } => unreachable!("rejected by validate"),
            Event::Response { at_ms, edge_id, response } => {
                self.q.insert(edge_id);
                if response == Response::Rejected {
                    self.r.insert(edge_id);
                }
                self.history.push(HistoryEntry { edge_id, response, at_ms });
                self.cached = None;
            }
            Event::Finalized { at_ms } => {
                let matching = solve_policy(
                    self.spec.policy,
                    &self.instance.graph,
                    &self.instance.structures,
                    &self.instance.spec,
                    &self.q,
                    &self.r,
                );
                let report = self.report(&matching);
                self.result = Some(FinalResult {
                    expected_weight: report.expected_weight,
                    policy_value: matching.value,
                    matching: report,
                    at_ms,
                });
                self.status = Status::Finalized;
                self.cached = None;
            }
        }
        Ok(())
    }

    fn report(&self, matching: &edgequery::Matching) -> MatchingReport {
        matching.report(&self.instance.graph, &self.instance.structures, &self.instance.spec, &self.q, &self.r)
    }

    /// The next edge to query, computed once per step.
    pub fn recommend(&mut self) -> ApiResult<RecommendationView> {
        self.ensure_active()?;
        if let Some(cached) = &self.cached {
            return Ok(cached.clone());
        }
        let step = self.history.len();
        let next = {
            let eval = self.evaluator();
            match self.spec.method {
                SessionMethod::Greedy => greedy_next_edge(&eval, &self.legal, &self.q, &self.r)?,
                SessionMethod::Mcts => {
                    let config = MctsConfig {
                        lookahead: self.spec.mcts_lookahead,
                        budget: SearchBudget::Iterations(self.spec.mcts_iterations),
                        seed: self.spec.seed.wrapping_add(step as u64),
                    };
                    mcts_next_edge(&eval, &self.legal, &self.q, &self.r, &config)?
                }
            }
        };
        let view = RecommendationView {
            session_id: self.id.clone(),
            step,
            recommendation: next.map(|n| self.describe(n)),
        };
        self.cached = Some(view.clone());
        Ok(view)
    }

    fn describe(&self, next: NextEdge) -> Recommendation {
        let edge = self.instance.graph.edge(next.edge);
        Recommendation {
            edge_id: next.edge,
            source: edge.source,
            target: edge.target,
            weight: edge.weight,
            p_reject: next.p_reject,
            accept_value: next.accept_value,
            reject_value: next.reject_value,
            expected_value: next.expected_value,
            search_value: next.search_value,
            search_visits: next.search_visits,
            structures: self
                .instance
                .structures
                .iter()
                .enumerate()
                .filter(|(_, c)| c.contains_edge(next.edge))
                .map(|(index, c)| StructureView {
                    index,
                    kind: c.kind,
                    vertices: c.vertices.clone(),
                    edges: c.edges.clone(),
                    nominal_weight: c.nominal_weight,
                })
                .collect(),
        }
    }

    pub fn view(&self) -> SessionView {
        let g = &self.instance.graph;
        let matching = solve_policy(self.spec.policy, g, &self.instance.structures, &self.instance.spec, &self.q, &self.r);
        let legal_remaining = match self.status {
            Status::Active => self.legal.extensions(&self.q).len(),
            Status::Finalized => 0,
        };
        SessionView {
            id: self.id.clone(),
            status: self.status,
            created_at_ms: self.created_at_ms,
            graph: GraphSummary {
                label: self.spec.graph_label.clone(),
                vertices: g.vertex_count(),
                edges: g.edge_count(),
                ndds: g.ndd_count(),
                structures: self.instance.structures.len(),
            },
            policy: self.spec.policy,
            method: self.spec.method,
            seed: self.spec.seed,
            legal: self.spec.legal.clone(),
            budget: BudgetView { used: self.q.count(), total: self.legal.budget(), legal_remaining },
            baseline: self.baseline,
            queried: self.q.to_vec(),
            rejected: self.r.to_vec(),
            history: self.history.clone(),
            matching: self.report(&matching),
            result: self.result.clone(),
        }
    }
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
