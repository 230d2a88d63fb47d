use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use edgequery::graph::fixtures::{self, COUNTEREXAMPLE_E3};
use edgequery::selection::{EvalConfig, Instance};
use edgequery::uncertainty::{make_simple, DistributionFile};
use edgequery::{EdgeSet, Evaluator, ExchangeGraph, PolicyKind, VertexKind};
use edgequery_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(config: ServiceConfig) -> Router {
    router(AppState::new(config).unwrap())
}

fn memory_app() -> Router {
    app(ServiceConfig::default())
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, Method::GET, uri, None, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    send(app, Method::POST, uri, Some(body), None).await
}

async fn create(app: &Router, body: Value) -> String {
    let (status, view) = post(app, "/sessions", body).await;
    assert_eq!(status, StatusCode::CREATED, "{view}");
    view["id"].as_str().unwrap().to_string()
}

async fn respond(app: &Router, id: &str, edge: usize, response: &str) -> (StatusCode, Value) {
    post(app, &format!("/sessions/{id}/responses"), json!({ "edge_id": edge, "response": response })).await
}

fn close(a: &Value, b: f64) -> bool {
    (a.as_f64().unwrap() - b).abs() < 1e-9
}

fn counterexample_request(budget: usize) -> Value {
    json!({ "graph": { "fixture": "counterexample" }, "legal": { "budget": budget } })
}

#[tokio::test]
async fn create_reports_baseline_and_distinct_ids() {
    let app = memory_app();
    let (status, view) = post(&app, "/sessions", counterexample_request(2)).await;
    assert_eq!(status, StatusCode::CREATED);
    assert!(close(&view["baseline"], 7.0 / 8.0));
    assert_eq!(view["status"], "active");
    assert_eq!(view["budget"]["total"], 2);
    assert_eq!(view["graph"]["structures"], 3);
    let other = create(&app, counterexample_request(2)).await;
    assert_ne!(view["id"].as_str().unwrap(), other);
    let (_, list) = get(&app, "/sessions").await;
    assert_eq!(list.as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn empty_graph_has_no_recommendation() {
    let app = memory_app();
    let id = create(&app, json!({ "graph": { "inline": { "vertices": [], "edges": [] } } })).await;
    let (status, rec) = get(&app, &format!("/sessions/{id}/recommendation")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rec["recommendation"], Value::Null);
    let (status, fin) = post(&app, &format!("/sessions/{id}/finalize"), json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert!(close(&fin["expected_weight"], 0.0));
}

/// With one query left, greedy picks the edge with the best one-step
/// expectation, lowest id on ties.
#[tokio::test]
async fn greedy_recommendation_matches_one_step_enumeration() {
    let app = memory_app();
    let id = create(&app, counterexample_request(1)).await;
    let (status, rec) = get(&app, &format!("/sessions/{id}/recommendation")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rec["step"], 0);

    let g = fixtures::counterexample();
    let spec = make_simple(&g);
    let inst = Instance::new(g, spec).unwrap();
    let eval = Evaluator::new(&inst, PolicyKind::MaxWeight, EvalConfig::default());
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for e in 0..inst.edge_count() {
        let q = EdgeSet::from_edges(8, [e]);
        let acc = eval.outcome_value(&q, &EdgeSet::empty(8)).unwrap();
        let rej = eval.outcome_value(&q, &q).unwrap();
        let expected = 0.5 * acc + 0.5 * rej;
        if best.is_none_or(|b| expected > b.3) {
            best = Some((e, acc, rej, expected));
        }
    }
    let (edge, acc, rej, expected) = best.unwrap();
    let r = &rec["recommendation"];
    assert_eq!(r["edge_id"], edge);
    assert!(close(&r["accept_value"], acc));
    assert!(close(&r["reject_value"], rej));
    assert!(close(&r["expected_value"], expected));
    assert!(close(&r["p_reject"], 0.5));
    let edge_json = &inst.graph.edges()[edge];
    assert_eq!(r["source"], edge_json.source);
    assert_eq!(r["target"], edge_json.target);
    let listed: Vec<usize> = r["structures"].as_array().unwrap().iter().map(|s| s["index"].as_u64().unwrap() as usize).collect();
    let want: Vec<usize> = (0..inst.structures.len()).filter(|&i| inst.structures[i].edges.contains(&edge)).collect();
    assert_eq!(listed, want);

    // asking again gives the identical recommendation
    let (_, again) = get(&app, &format!("/sessions/{id}/recommendation")).await;
    assert_eq!(again, rec);
}

#[tokio::test]
async fn counterexample_branches() {
    let app = memory_app();
    let rejected = create(&app, counterexample_request(1)).await;
    let (status, view) = respond(&app, &rejected, COUNTEREXAMPLE_E3, "rejected").await;
    assert_eq!(status, StatusCode::OK, "{view}");
    assert_eq!(view["rejected"], json!([COUNTEREXAMPLE_E3]));
    let structures = view["matching"]["structures"].as_array().unwrap();
    assert_eq!(structures.len(), 1);
    assert_eq!(structures[0]["vertices"], json!([1, 2, 4]));
    let (status, fin) = post(&app, &format!("/sessions/{rejected}/finalize"), json!({})).await;
    assert_eq!(status, StatusCode::OK);
    // below the 7/8 baseline: rejections can hurt under max-weight clearing
    assert!(close(&fin["expected_weight"], 3.5 / 8.0));
    assert_eq!(fin["session_id"], rejected);

    let accepted = create(&app, counterexample_request(1)).await;
    respond(&app, &accepted, COUNTEREXAMPLE_E3, "accepted").await;
    let (_, fin) = post(&app, &format!("/sessions/{accepted}/finalize"), json!({})).await;
    assert!(close(&fin["expected_weight"], 5.0 / 4.0));
    let mut vertices: Vec<Value> =
        fin["matching"]["structures"].as_array().unwrap().iter().map(|s| s["vertices"].clone()).collect();
    vertices.sort_by_key(|v| v.to_string());
    assert_eq!(vertices, vec![json!([0, 1]), json!([2, 3, 5])]);
}

#[tokio::test]
async fn conflicts_and_illegal_queries() {
    let app = memory_app();
    let id = create(&app, counterexample_request(1)).await;
    assert_eq!(respond(&app, &id, 0, "accepted").await.0, StatusCode::OK);

    let (status, err) = respond(&app, &id, 0, "rejected").await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "already_queried");
    assert_eq!(err["detail"]["response"], "accepted");

    let (status, err) = respond(&app, &id, 1, "accepted").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "illegal_query");

    let (status, err) = respond(&app, &id, 42, "accepted").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "unknown_edge");

    assert_eq!(post(&app, &format!("/sessions/{id}/finalize"), json!({})).await.0, StatusCode::OK);
    let (status, err) = post(&app, &format!("/sessions/{id}/finalize"), json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "already_finalized");
    assert_eq!(respond(&app, &id, 2, "accepted").await.0, StatusCode::CONFLICT);
    assert_eq!(get(&app, &format!("/sessions/{id}/recommendation")).await.0, StatusCode::CONFLICT);

    let (_, events) = get(&app, &format!("/sessions/{id}/events")).await;
    let kinds: Vec<&str> = events.as_array().unwrap().iter().map(|e| e["event"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["created", "response", "finalized"]);
}

/// A queried, accepted edge of a 2-cycle is certain to succeed when the
/// distribution says so.
#[tokio::test]
async fn inline_distribution_applies_success_probabilities() {
    let app = memory_app();
    let graph = ExchangeGraph::from_parts(&[VertexKind::Pair; 2], &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
    let mut dist = DistributionFile::from(&make_simple(&graph));
    for p in dist.per_edge.values_mut() {
        p.p_reject = 0.2;
        p.p_success_queried = 1.0;
        p.p_success_unqueried = 0.6;
    }
    let id = create(
        &app,
        json!({
            "graph": { "inline": graph },
            "distribution": { "inline": dist },
            "policy": "failure_aware",
        }),
    )
    .await;
    let (_, view) = get(&app, &format!("/sessions/{id}")).await;
    assert!(close(&view["baseline"], 2.0 * 0.36));
    respond(&app, &id, 0, "accepted").await;
    let (_, view) = respond(&app, &id, 1, "accepted").await;
    assert!(close(&view["matching"]["expected_weight"], 2.0));

    let (status, err) = post(
        &app,
        "/sessions",
        json!({ "graph": { "fixture": "counterexample" }, "distribution": { "inline": dist } }),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");
}

#[tokio::test]
async fn rejected_chain_edge_removes_its_structures() {
    let app = memory_app();
    let id = create(&app, json!({ "graph": { "fixture": "chain-example" } })).await;
    let (_, view) = respond(&app, &id, 0, "rejected").await;
    for s in view["matching"]["structures"].as_array().unwrap() {
        assert!(!s["edges"].as_array().unwrap().contains(&json!(0)), "{s}");
    }
    let (_, fin) = post(&app, &format!("/sessions/{id}/finalize"), json!({})).await;
    for s in fin["matching"]["structures"].as_array().unwrap() {
        assert!(!s["edges"].as_array().unwrap().contains(&json!(0)), "{s}");
    }
}

#[tokio::test]
async fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { data_dir: Some(dir.path().to_path_buf()), ..ServiceConfig::default() };
    let (id, view, rec, events) = {
        let app = app(config.clone());
        let id = create(&app, counterexample_request(2)).await;
        respond(&app, &id, COUNTEREXAMPLE_E3, "accepted").await;
        let (_, rec) = get(&app, &format!("/sessions/{id}/recommendation")).await;
        let (_, view) = get(&app, &format!("/sessions/{id}")).await;
        let (_, events) = get(&app, &format!("/sessions/{id}/events")).await;
        (id, view, rec, events)
    };
    let app = app(config);
    assert_eq!(get(&app, &format!("/sessions/{id}")).await.1, view);
    assert_eq!(get(&app, &format!("/sessions/{id}/recommendation")).await.1, rec);
    assert_eq!(get(&app, &format!("/sessions/{id}/events")).await.1, events);
    let (status, fin) = post(&app, &format!("/sessions/{id}/finalize"), json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert!(close(&fin["expected_weight"], 5.0 / 4.0));
}

#[tokio::test]
async fn error_bodies() {
    let app = memory_app();
    let req = Request::builder()
        .method(Method::POST)
        .uri("/sessions")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&res.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["code"], "invalid_body");
    assert!(body["message"].is_string());
    assert!(body.get("detail").is_some());

    let (status, err) = post(&app, "/sessions", json!({ "graph": { "fixture": "nope" } })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "unknown_graph");

    let (status, err) = post(&app, "/sessions", json!({ "graph": { "fixture": "counterexample" }, "mcts_iterations": 1_000_000 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");

    let (status, err) = get(&app, "/sessions/missing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
    assert_eq!(get(&app, "/nowhere").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bearer_token_is_required_when_configured() {
    let app = app(ServiceConfig { token: Some("s3cret".into()), ..ServiceConfig::default() });
    let (status, err) = get(&app, "/sessions").await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(err["code"], "unauthorized");
    assert_eq!(send(&app, Method::GET, "/sessions", None, Some("wrong")).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(send(&app, Method::GET, "/sessions", None, Some("s3cret")).await.0, StatusCode::OK);
}

#[tokio::test]
async fn graphs_list_fixtures_and_uploads() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { data_dir: Some(dir.path().to_path_buf()), ..ServiceConfig::default() };
    let upload_id = {
        let app = app(config.clone());
        let (status, entry) = post(&app, "/graphs", json!({ "graph": fixtures::chain_example() })).await;
        assert_eq!(status, StatusCode::CREATED);
        assert_eq!(entry["ndds"], 1);
        entry["id"].as_str().unwrap().to_string()
    };
    let app = app(config);
    let (_, list) = get(&app, "/graphs").await;
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|g| g["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["counterexample", "chain-example", upload_id.as_str()]);
    let (status, graph) = get(&app, &format!("/graphs/{upload_id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<ExchangeGraph>(graph).unwrap(), fixtures::chain_example());
    let id = create(&app, json!({ "graph": { "uploaded": upload_id } })).await;
    let (_, view) = get(&app, &format!("/sessions/{id}")).await;
    assert_eq!(view["graph"]["label"], format!("upload:{upload_id}"));
}

#[tokio::test]
async fn mcts_sessions_respect_iteration_cap() {
    let app = app(ServiceConfig { mcts_iteration_cap: 50, ..ServiceConfig::default() });
    let id = create(&app, json!({ "graph": { "fixture": "counterexample" }, "method": "mcts", "legal": { "budget": 2 } })).await;
    let (status, rec) = get(&app, &format!("/sessions/{id}/recommendation")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(rec["recommendation"]["search_visits"].as_u64().unwrap() <= 50);
    let (status, _) =
        post(&app, "/sessions", json!({ "graph": { "fixture": "counterexample" }, "method": "mcts", "mcts_iterations": 51 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

/// Under failure-aware clearing, following the recommendations and
/// answering with the distribution's probabilities does not lose value on
/// average.
#[tokio::test]
async fn failure_aware_sessions_do_not_lose_value_on_average() {
    let app = memory_app();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut finals = Vec::new();
    let mut baseline = 0.0;
    for seed in 0..200u64 {
        let id = create(
            &app,
            json!({ "graph": { "fixture": "counterexample" }, "policy": "failure_aware", "legal": { "budget": 3 }, "seed": seed }),
        )
        .await;
        loop {
            let (_, rec) = get(&app, &format!("/sessions/{id}/recommendation")).await;
            let Some(r) = rec["recommendation"].as_object() else { break };
            let answer = if rng.random_bool(r["p_reject"].as_f64().unwrap()) { "rejected" } else { "accepted" };
            let (status, view) = respond(&app, &id, r["edge_id"].as_u64().unwrap() as usize, answer).await;
            assert_eq!(status, StatusCode::OK);
            baseline = view["baseline"].as_f64().unwrap();
        }
        let (_, fin) = post(&app, &format!("/sessions/{id}/finalize"), json!({})).await;
        finals.push(fin["expected_weight"].as_f64().unwrap());
    }
    let n = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let se = (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!(mean >= baseline - 3.0 * se, "mean {mean} (se {se}) below baseline {baseline}");
}
