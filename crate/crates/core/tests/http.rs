use std::path::PathBuf;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

use ital_core::session::{replay_log, router, AppState, SessionConfig, SessionLearner, TeachingSession};

async fn start(log_dir: Option<PathBuf>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(AppState::new(log_dir))).await.unwrap();
    });
    format!("http://{addr}/api/v1")
}

async fn create(client: &Client, base: &str, body: Value) -> (StatusCode, Value) {
    let r = client
        .post(format!("{base}/sessions"))
        .json(&body)
        .send()
        .await
        .unwrap();
    let status = r.status();
    (status, r.json().await.unwrap())
}

async fn select(client: &Client, base: &str, id: &str, index: usize) -> (StatusCode, Value) {
    let r = client
        .post(format!("{base}/sessions/{id}/select"))
        .json(&json!({ "candidate_index": index }))
        .send()
        .await
        .unwrap();
    let status = r.status();
    (status, r.json().await.unwrap())
}

async fn get(client: &Client, url: String) -> (StatusCode, Value) {
    let r = client.get(url).send().await.unwrap();
    let status = r.status();
    (status, r.json().await.unwrap())
}

#[tokio::test]
async fn session_lifecycle() {
    let base = start(None).await;
    let c = Client::new();
    let (s, v) = create(&c, &base, json!({"map_id": "A", "learner_kind": "aware", "seed": 3})).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = v["session_id"].as_str().unwrap().to_string();
    assert_eq!(v["view"]["candidates"].as_array().unwrap().len(), 10);
    assert_eq!(v["view"]["width"], 5);
    assert_eq!(v["view"]["beta"], 30000.0);

    let (_, m) = get(&c, format!("{base}/sessions/{id}/metrics")).await;
    assert_eq!(m["metrics"].as_array().unwrap().len(), 1);

    let (s1, c1) = get(&c, format!("{base}/sessions/{id}/candidates")).await;
    let (_, c2) = get(&c, format!("{base}/sessions/{id}/candidates")).await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!(c1, c2);

    let (s, view) = select(&c, &base, &id, 4).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(view["step"], 1);
    let (_, m) = get(&c, format!("{base}/sessions/{id}/metrics")).await;
    assert_eq!(m["metrics"].as_array().unwrap().len(), 2);
    assert_eq!(m["metrics"][1], view["metrics"]);

    let (s, state) = get(&c, format!("{base}/sessions/{id}/state")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(state, view);

    let r = c.post(format!("{base}/sessions/{id}/finish")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let (s, e) = get(&c, format!("{base}/sessions/{id}/candidates")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(e["error"].is_string());
    assert_eq!(select(&c, &base, &id, 0).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let base = start(None).await;
    let c = Client::new();
    let (s, _) = create(&c, &base, json!({"map_id": "Q", "learner_kind": "naive"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = create(&c, &base, json!({"map_id": "A", "learner_kind": "sometimes"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let r = c.post(format!("{base}/sessions")).body("{oops").send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let (s, _) = create(
        &c,
        &base,
        json!({"map_id": "A", "learner_kind": "naive", "pair_with": "s999"}),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (_, v) = create(&c, &base, json!({"map_id": "A", "learner_kind": "naive"})).await;
    let id = v["session_id"].as_str().unwrap();
    assert_eq!(select(&c, &base, id, 10).await.0, StatusCode::BAD_REQUEST);
    let r = c
        .post(format!("{base}/sessions/{id}/select"))
        .json(&json!({"index": 1}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    assert_eq!(
        get(&c, format!("{base}/sessions/nope/state")).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        get(&c, format!("{base}/sessions/nope/candidates")).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn paired_sessions_share_the_start_and_differ_only_by_awareness() {
    let base = start(None).await;
    let c = Client::new();
    let (_, a) = create(&c, &base, json!({"map_id": "D", "learner_kind": "naive", "seed": 21})).await;
    let a_id = a["session_id"].as_str().unwrap().to_string();
    let (_, b) = create(
        &c,
        &base,
        json!({"map_id": "D", "learner_kind": "aware", "pair_with": a_id}),
    )
    .await;
    let b_id = b["session_id"].as_str().unwrap().to_string();
    assert_eq!(a["view"]["estimates"], b["view"]["estimates"]);
    assert_eq!(a["view"]["candidates"], b["view"]["candidates"]);

    for k in [2usize, 7, 0] {
        let (_, va) = select(&c, &base, &a_id, k).await;
        let (_, vb) = select(&c, &base, &b_id, k).await;
        assert_eq!(va["candidates"], vb["candidates"]);
        assert_ne!(va["estimates"], vb["estimates"]);
    }

    // the naive session equals an in-process naive run with the same picks
    let cfg = SessionConfig::for_map("D", SessionLearner::Naive, 21).unwrap();
    let mut local = TeachingSession::new("x", cfg).unwrap();
    for k in [2usize, 7, 0] {
        local.select(k).unwrap();
    }
    let (_, va) = get(&c, format!("{base}/sessions/{a_id}/state")).await;
    let est: Vec<f64> = serde_json::from_value(va["estimates"].clone()).unwrap();
    assert_eq!(est, local.params().as_slice());
}

#[tokio::test]
async fn logs_replay_to_the_served_state() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(Some(dir.path().to_path_buf())).await;
    let c = Client::new();
    let (_, v) = create(
        &c,
        &base,
        json!({"map_id": "C", "learner_kind": "aware", "seed": 8, "step_cap": 6}),
    )
    .await;
    let id = v["session_id"].as_str().unwrap().to_string();
    let mut last = Value::Null;
    for k in 0..6 {
        let (s, view) = select(&c, &base, &id, (k * 3) % 10).await;
        assert_eq!(s, StatusCode::OK);
        last = view;
    }
    assert_eq!(last["finished"], true);
    assert_eq!(last["candidates"].as_array().unwrap().len(), 0);

    let log = dir.path().join(format!("{id}.jsonl"));
    let lines = std::fs::read_to_string(&log).unwrap();
    assert_eq!(lines.lines().count(), 8);
    let replayed = replay_log(&log).unwrap();
    assert!(replayed.session.is_finished());
    let est: Vec<f64> = serde_json::from_value(last["estimates"].clone()).unwrap();
    assert_eq!(replayed.session.params().as_slice(), &est[..]);
    let m: ital_core::session::MetricPoint = serde_json::from_value(last["metrics"].clone()).unwrap();
    assert_eq!(*replayed.session.metrics().last().unwrap(), m);
}

#[tokio::test]
async fn custom_maps_maps_listing_and_cors() {
    let base = start(None).await;
    let c = Client::new();
    let (s, maps) = get(&c, format!("{base}/maps")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(maps.as_array().unwrap().len(), 5);

    let text = "WWBWW\nWRWWW\nWWWWB\nRWWWW\nWWRWW\n";
    let (s, v) = create(
        &c,
        &base,
        json!({"map_id": "custom", "learner_kind": "naive", "map": text}),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["view"]["ground_truth"][2], 1.0);
    assert_eq!(v["view"]["ground_truth"][6], -1.0);

    let r = c
        .get(format!("{base}/health"))
        .header("Origin", "http://localhost:5173")
        .send()
        .await
        .unwrap();
    assert_eq!(r.headers()["access-control-allow-origin"], "*");
}

#[tokio::test]
async fn concurrent_sessions_do_not_interfere() {
    let base = start(None).await;
    let c = Client::new();
    let mut ids = Vec::new();
    for seed in 0..4u64 {
        let (_, v) = create(&c, &base, json!({"map_id": "E", "learner_kind": "aware", "seed": seed})).await;
        ids.push((seed, v["session_id"].as_str().unwrap().to_string()));
    }
    let tasks: Vec<_> = ids
        .iter()
        .cloned()
        .map(|(seed, id)| {
            let (c, base) = (c.clone(), base.clone());
            tokio::spawn(async move {
                for k in 0..5 {
                    select(&c, &base, &id, (k + seed as usize) % 10).await;
                }
                get(&c, format!("{base}/sessions/{id}/state")).await.1
            })
        })
        .collect();
    for ((seed, _), t) in ids.iter().zip(tasks) {
        let view = t.await.unwrap();
        let cfg = SessionConfig::for_map("E", SessionLearner::Aware, *seed).unwrap();
        let mut local = TeachingSession::new("x", cfg).unwrap();
        for k in 0..5 {
            local.select((k + *seed as usize) % 10).unwrap();
        }
        let est: Vec<f64> = serde_json::from_value(view["estimates"].clone()).unwrap();
        assert_eq!(est, local.params().as_slice());
    }
}
