use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use choicebo_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn small_session(id: &str, seed: u64) -> Value {
    json!({
        "id": id,
        "bounds": [[0.0, 1.0], [0.0, 1.0]],
        "n_e": 2,
        "n_init": 8,
        "n_init_queries": 2,
        "max_iterations": 1,
        "seed": seed,
        "fit": { "vi_steps": 40, "ess_burnin": 20, "ess_samples": 30, "ess_thin": 1 },
        "acquisition": { "n_sobol": 32, "refine_steps": 2, "max_draws": 16 }
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn raw_post(app: &Router, uri: &str, text: &str) -> StatusCode {
    let req = Request::builder()
        .method("POST")
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(text.to_string()))
        .unwrap();
    app.clone().oneshot(req).await.unwrap().status()
}

/// Polls the state endpoint until the session leaves `fitting`.
async fn wait_settled(app: &Router, id: &str) -> Value {
    let start = Instant::now();
    loop {
        let (status, state) = call(app, "GET", &format!("/v1/sessions/{id}/state"), None).await;
        assert_eq!(status, StatusCode::OK);
        if state["state"] != "fitting" {
            return state;
        }
        assert!(state["last_error"].is_null(), "fit failed: {}", state["last_error"]);
        assert!(start.elapsed() < Duration::from_secs(120), "fit did not finish");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[tokio::test]
async fn create_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    let (status, body) = call(&app, "POST", "/v1/sessions", Some(small_session("a", 1))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["state"], "awaiting-choice");
    assert_eq!(body["query"]["options"].as_array().unwrap().len(), 5);

    let (status, q) = call(&app, "GET", "/v1/sessions/a/query", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(q["seq"], 1);
    assert_eq!(q["options"][0]["display_payload"], Value::Null);

    let (status, st) = call(&app, "GET", "/v1/sessions/a/state", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(st["history"].as_array().unwrap().len(), 0);

    let (status, _) = call(&app, "GET", "/v1/sessions/a/pareto", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "GET", "/v1/sessions/nope/query", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/v1/sessions/nope/state", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn creation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    let mut zero_dim = small_session("z", 1);
    zero_dim["bounds"] = json!([]);
    assert_eq!(call(&app, "POST", "/v1/sessions", Some(zero_dim)).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(raw_post(&app, "/v1/sessions", "{not json").await, StatusCode::BAD_REQUEST);
    let mut bad_id = small_session("../x", 1);
    bad_id["id"] = json!("../x");
    assert_eq!(call(&app, "POST", "/v1/sessions", Some(bad_id)).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "POST", "/v1/sessions", Some(small_session("d", 1))).await.0, StatusCode::CREATED);
    assert_eq!(call(&app, "POST", "/v1/sessions", Some(small_session("d", 2))).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn same_seed_same_initial_options() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    call(&app, "POST", "/v1/sessions", Some(small_session("p", 7))).await;
    call(&app, "POST", "/v1/sessions", Some(small_session("q", 7))).await;
    let a = call(&app, "GET", "/v1/sessions/p/state", None).await.1;
    let b = call(&app, "GET", "/v1/sessions/q/state", None).await.1;
    assert_eq!(a["options"], b["options"]);
    assert_eq!(a["pending_query"], b["pending_query"]);
}

#[tokio::test]
async fn choice_validation() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    call(&app, "POST", "/v1/sessions", Some(small_session("c", 3))).await;
    let q = call(&app, "GET", "/v1/sessions/c/query", None).await.1;
    let ids: Vec<u64> = q["options"].as_array().unwrap().iter().map(|o| o["id"].as_u64().unwrap()).collect();
    let uri = "/v1/sessions/c/choice";

    let empty = json!({ "seq": 1, "chosen": [] });
    assert_eq!(call(&app, "POST", uri, Some(empty)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let outside = (0..8).find(|i| !ids.contains(i)).unwrap();
    let stale = json!({ "seq": 1, "chosen": [outside] });
    assert_eq!(call(&app, "POST", uri, Some(stale)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let wrong_seq = json!({ "seq": 9, "chosen": [ids[0]] });
    assert_eq!(call(&app, "POST", uri, Some(wrong_seq)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(raw_post(&app, uri, "[1,2").await, StatusCode::BAD_REQUEST);

    // choosing every option is a valid choice-function answer
    let all = json!({ "seq": 1, "chosen": ids });
    let (status, ack) = call(&app, "POST", uri, Some(all.clone())).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(ack["accepted"], 1);
    // resubmitting the same query is rejected whatever the fit's progress
    let again = call(&app, "POST", uri, Some(all)).await.0;
    assert!(again == StatusCode::CONFLICT || again == StatusCode::UNPROCESSABLE_ENTITY);
    let st = wait_settled(&app, "c").await;
    assert_eq!(st["history"].as_array().unwrap().len(), 1);
    assert_eq!(st["pending_query"]["seq"], 2);
}

async fn answer_first(app: &Router, id: &str) -> Value {
    let q = call(app, "GET", &format!("/v1/sessions/{id}/query"), None).await.1;
    let body = json!({ "seq": q["seq"], "chosen": [q["options"][0]["id"]] });
    let (status, _) = call(app, "POST", &format!("/v1/sessions/{id}/choice"), Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    wait_settled(app, id).await
}

#[tokio::test]
async fn full_session_and_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    call(&app, "POST", "/v1/sessions", Some(small_session("f", 5))).await;

    // two initial queries, then a fit and one BO query
    let st = answer_first(&app, "f").await;
    assert_eq!(st["state"], "awaiting-choice");
    let st = answer_first(&app, "f").await;
    assert_eq!(st["state"], "awaiting-choice");
    assert_eq!(st["fits"], 1);
    assert_eq!(st["history"].as_array().unwrap().len(), 2);
    assert_eq!(st["pending_query"]["kind"], "bo");

    let (status, pareto) = call(&app, "GET", "/v1/sessions/f/pareto", None).await;
    assert_eq!(status, StatusCode::OK);
    for p in pareto["probs"].as_array().unwrap() {
        let p = p.as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    let before = call(&app, "GET", "/v1/sessions/f/state", None).await.1;
    drop(app);
    let restarted = router(AppState::open(dir.path()).unwrap());
    let after = call(&restarted, "GET", "/v1/sessions/f/state", None).await.1;
    assert_eq!(before, after);
    assert_eq!(call(&restarted, "GET", "/v1/sessions/f/pareto", None).await.1, pareto);

    // the budget of one BO iteration ends the session
    let st = answer_first(&restarted, "f").await;
    assert_eq!(st["state"], "done");
    assert!(st["pending_query"].is_null());
    assert_eq!(st["history"].as_array().unwrap().len(), 3);
    assert_eq!(call(&restarted, "GET", "/v1/sessions/f/query", None).await.0, StatusCode::CONFLICT);
    let late = json!({ "seq": 3, "chosen": [0] });
    assert_eq!(call(&restarted, "POST", "/v1/sessions/f/choice", Some(late)).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn restart_mid_fit_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::open(dir.path()).unwrap();
    let app = router(state.clone());
    call(&app, "POST", "/v1/sessions", Some(small_session("r", 6))).await;
    answer_first(&app, "r").await;
    // Write a fitting-state document by hand, as if the process died mid-fit.
    let entry = state.store.get("r").unwrap();
    let mut s = entry.lock().unwrap().session.clone();
    let q = s.pending_query.clone().unwrap();
    s.submit_choice(q.seq, &q.ids[..1]).unwrap();
    state.store.persist(&s).unwrap();
    drop(app);

    let reopened = AppState::open(dir.path()).unwrap();
    let app = router(reopened.clone());
    assert_eq!(call(&app, "GET", "/v1/sessions/r/state", None).await.1["state"], "fitting");
    assert_eq!(call(&app, "GET", "/v1/sessions/r/query", None).await.0, StatusCode::CONFLICT);
    reopened.resume_fitting();
    let st = wait_settled(&app, "r").await;
    assert_eq!(st["state"], "awaiting-choice");
    assert_eq!(st["fits"], 1);
}

#[tokio::test]
async fn reads_are_fast() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::open(dir.path()).unwrap());
    call(&app, "POST", "/v1/sessions", Some(small_session("t", 2))).await;
    for uri in ["/v1/sessions/t/state", "/v1/sessions/t/query", "/v1/sessions"] {
        let start = Instant::now();
        assert_eq!(call(&app, "GET", uri, None).await.0, StatusCode::OK);
        assert!(start.elapsed() < Duration::from_millis(100));
    }
}
