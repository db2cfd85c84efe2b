use std::net::SocketAddr;
use std::sync::Arc;

use futures_util::{SinkExt, StreamExt};
use multicake::geometry::{CakeConfig, PieceSelection};
use multicake::preferences::{log_utility_model, LogUtilityModel, PreferenceModel};
use multicake_service::engine::{replay_report, Answer, Query, QueryKind, Snapshot, Status};
use multicake_service::{router, Store};
use serde_json::{json, Value};

async fn spawn(store: Arc<Store>) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(store)).await.unwrap() });
    addr
}

fn prism() -> CakeConfig {
    CakeConfig::new(vec![2, 3]).unwrap()
}

struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    fn new(addr: SocketAddr) -> Self {
        Self {
            http: reqwest::Client::new(),
            base: format!("http://{addr}"),
        }
    }

    async fn create(&self, body: Value) -> (u16, Value) {
        let r = self
            .http
            .post(format!("{}/sessions", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    async fn state(&self, id: &str) -> Snapshot {
        self.http
            .get(format!("{}/sessions/{id}", self.base))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap()
    }

    async fn query(&self, id: &str, player: &str, token: &str) -> Option<Query> {
        let v: Value = self
            .http
            .get(format!("{}/sessions/{id}/query?player={player}", self.base))
            .bearer_auth(token)
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        serde_json::from_value(v["query"].clone()).unwrap()
    }

    async fn answer(&self, id: &str, token: &str, body: Value) -> (u16, Value) {
        let r = self
            .http
            .post(format!("{}/sessions/{id}/answer", self.base))
            .bearer_auth(token)
            .json(&body)
            .send()
            .await
            .unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }
}

fn human_pair_body() -> Value {
    json!({
        "config": [2, 3],
        "players": [{"kind": "human"}, {"kind": "human"}],
        "schedule": [2, 4],
        "tol": 1e-3,
        "client": "tests"
    })
}

/// Answers every pending query from hidden models until nobody owes anything.
/// Returns the numbers of label and confirmation queries answered.
async fn play(c: &Client, id: &str, token: &str, hidden: &[LogUtilityModel; 2]) -> (usize, usize) {
    let config = prism();
    let mut answered = (0, 0);
    let mut last = 0;
    loop {
        let mut any = false;
        for (p, name) in ["A", "B"].iter().enumerate() {
            if let Some(q) = c.query(id, name, token).await {
                assert!(
                    q.admissible.len() > 1,
                    "single-choice divisions answer themselves"
                );
                let pick = hidden[p].prefer(&config, &q.division).unwrap();
                let (code, ack) = c
                    .answer(
                        id,
                        token,
                        json!({"player": name, "query_id": q.query_id, "selection": pick}),
                    )
                    .await;
                assert_eq!(code, 200, "{ack}");
                match q.kind {
                    QueryKind::Label => answered.0 += 1,
                    QueryKind::Confirm => answered.1 += 1,
                }
                any = true;
            }
        }
        let s = c.state(id).await;
        assert!(s.progress.answered >= last);
        last = s.progress.answered;
        if !any {
            return answered;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn two_humans_solve_the_prism_and_replay_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("sessions.jsonl");
    let store = Arc::new(Store::open(&journal).unwrap());
    let c = Client::new(spawn(store).await);
    let (code, created) = c.create(human_pair_body()).await;
    assert_eq!(code, 201, "{created}");
    let id = created["id"].as_str().unwrap().to_string();
    let token = created["token"].as_str().unwrap().to_string();

    let fresh = c.state(&id).await;
    assert_eq!(fresh.v, 1);
    assert_eq!(fresh.status, Status::Querying);
    assert_eq!(fresh.progress.answered, 0);
    assert_eq!(fresh.pending.len(), 2);

    let hidden = [
        log_utility_model(&prism(), 4, 0.5).unwrap(),
        log_utility_model(&prism(), 5, 0.5).unwrap(),
    ];
    let (labels, confirms) = play(&c, &id, &token, &hidden).await;
    // 18 + 75 vertices over the two meshes, less six pure vertices per mesh
    assert!(labels <= 18 + 75 - 12, "{labels}");
    assert!(confirms >= 2);
    assert!(labels + confirms <= 18 + 90 - 12, "{labels} + {confirms}");

    let done = c.state(&id).await;
    assert_eq!(done.status, Status::Solved);
    assert_eq!(
        done.transitions,
        vec![Status::Configuring, Status::Querying, Status::Solved]
    );
    let result = done.result.clone().unwrap();
    assert!(result.report.disjoint && result.report.converged);
    assert_eq!(result.confirmations.len(), 2);
    for conf in &result.confirmations {
        assert!(conf.confirmed);
        let hidden_model = &hidden[if conf.player == "A" { 0 } else { 1 }];
        let best =
            multicake::verifier::preferred_set(hidden_model, &prism(), &result.report.division)
                .unwrap();
        assert!(best.contains(conf.chosen.as_ref().unwrap()));
        assert!(!conf.rejected.contains(conf.chosen.as_ref().unwrap()));
    }

    let r: Value = c
        .http
        .get(format!("{}/sessions/{id}/result", c.base))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(r["status"], "solved");

    // replay through scripted oracles
    let lines = std::fs::read_to_string(&journal).unwrap();
    let answers: Vec<Answer> = {
        let store = Store::open(&journal).unwrap();
        let handle = store.get(&id).unwrap();
        let s = handle.session.lock().unwrap();
        assert_eq!(
            serde_json::to_string(&s.snapshot()).unwrap(),
            serde_json::to_string(&done).unwrap()
        );
        s.answers().to_vec()
    };
    assert_eq!(lines.lines().count(), 1 + answers.len());
    let spec = multicake_service::SessionSpec {
        config: prism(),
        players: vec![
            multicake::preferences::ModelSpec::Human,
            multicake::preferences::ModelSpec::Human,
        ],
        schedule: vec![2, 4],
        tol: 1e-3,
    };
    let replayed = replay_report(&spec, &answers).unwrap();
    assert_eq!(
        serde_json::to_string(&replayed).unwrap(),
        serde_json::to_string(&result.report).unwrap()
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn unconfirmed_candidates_end_in_failure() {
    let c = Client::new(spawn(Arc::new(Store::in_memory())).await);
    let (_, created) = c.create(human_pair_body()).await;
    let id = created["id"].as_str().unwrap();
    let token = created["token"].as_str().unwrap();
    let hidden = [
        log_utility_model(&prism(), 0, 0.5).unwrap(),
        log_utility_model(&prism(), 1, 0.5).unwrap(),
    ];
    let (_, confirms) = play(&c, id, token, &hidden).await;
    assert!(confirms >= 1);
    let done = c.state(id).await;
    assert_eq!(done.status, Status::Failed);
    assert_eq!(
        done.transitions,
        vec![Status::Configuring, Status::Querying, Status::Failed]
    );
    let result = done.result.unwrap();
    assert!(!result.report.converged);
    assert!(result.report.flags.iter().any(|f| f == "not converged"));
    assert!(result.confirmations.iter().any(|c| !c.confirmed));
}

#[tokio::test(flavor = "multi_thread")]
async fn creation_guards() {
    let c = Client::new(spawn(Arc::new(Store::in_memory())).await);
    let (code, body) = c
        .create(json!({"config": [4, 4, 4], "players": [{"kind": "human"}, {"kind": "human"}], "schedule": [2], "tol": 0.05}))
        .await;
    assert_eq!(code, 422);
    assert_eq!(body["error"], "budget_exceeded");

    let (code, body) = c
        .create(json!({"config": [2, 3], "players": [{"kind": "human"}, {"kind": "log_utility", "seed": 1}], "schedule": [2, 4], "tol": 1e-3}))
        .await;
    assert_eq!(code, 201, "{body}");
    assert_eq!(body["status"], "querying");

    let (code, body) = c
        .create(json!({"config": [2, 3], "players": [{"kind": "human"}]}))
        .await;
    assert_eq!(code, 400, "{body}");
    let (code, _) = c
        .create(json!({"config": [2, 3], "players": [{"kind": "human"}, {"kind": "human"}], "schedule": [4, 2], "tol": 1e-3}))
        .await;
    assert_eq!(code, 400);
}

#[tokio::test(flavor = "multi_thread")]
async fn answer_validation_and_tokens() {
    let c = Client::new(spawn(Arc::new(Store::in_memory())).await);
    let (_, created) = c.create(human_pair_body()).await;
    let id = created["id"].as_str().unwrap();
    let token = created["token"].as_str().unwrap();
    let token_b = created["player_tokens"]["B"].as_str().unwrap();

    let q = c.query(id, "A", token).await.unwrap();
    let config = prism();
    let interior = q.division.rows().iter().flatten().all(|&x| x > 0.0);
    if interior {
        assert_eq!(q.admissible.len(), config.selection_count());
    }

    // a player token cannot act for the other player
    let (code, _) = c
        .answer(
            id,
            token_b,
            json!({"player": "A", "query_id": q.query_id, "selection": q.admissible[0]}),
        )
        .await;
    assert_eq!(code, 403);
    let r = c
        .http
        .get(format!("{}/sessions/{id}/query?player=A", c.base))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 401);

    // zero piece
    let empty = (0..2).find_map(|i| {
        q.division.rows()[i]
            .iter()
            .position(|&x| x == 0.0)
            .map(|j| {
                let mut picks = vec![0, 0];
                picks[i] = j;
                picks[1 - i] = q.division.rows()[1 - i]
                    .iter()
                    .position(|&x| x > 0.0)
                    .unwrap();
                PieceSelection::from_picks(picks)
            })
    });
    if let Some(bad) = empty {
        let (code, body) = c
            .answer(
                id,
                token,
                json!({"player": "A", "query_id": q.query_id, "selection": bad}),
            )
            .await;
        assert_eq!(code, 422);
        assert_eq!(body["error"], "rejected");
    }

    let (code, _) = c
        .answer(
            id,
            token,
            json!({"player": "A", "query_id": q.query_id + 1000, "selection": q.admissible[0]}),
        )
        .await;
    assert_eq!(code, 409);
    let body = json!({"player": "A", "query_id": q.query_id, "selection": q.admissible[0], "note": "ignored"});
    let (code, ack) = c.answer(id, token, body.clone()).await;
    assert_eq!(code, 200);
    assert_eq!(ack["duplicate"], false);
    let (code, ack) = c.answer(id, token, body).await;
    assert_eq!(code, 200);
    assert_eq!(ack["duplicate"], true);

    let (code, _) = c
        .answer(
            "nope",
            token,
            json!({"player": "A", "query_id": 1, "selection": [0, 0]}),
        )
        .await;
    assert_eq!(code, 404);
    let r = c
        .http
        .get(format!("{}/sessions/{id}/query?player=Z", c.base))
        .bearer_auth(token)
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn websocket_pushes_queries_progress_and_result() {
    let c = Client::new(spawn(Arc::new(Store::in_memory())).await);
    let (_, created) = c
        .create(json!({"config": [2, 3], "players": [{"kind": "human"}, {"kind": "log_utility", "seed": 7, "linkage_strength": 0.5}], "schedule": [2, 4], "tol": 1e-3}))
        .await;
    let id = created["id"].as_str().unwrap().to_string();
    let token = created["token"].as_str().unwrap().to_string();
    let url = c.base.replace("http://", "ws://") + &format!("/sessions/{id}/events");
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();

    let first: Value = match ws.next().await.unwrap().unwrap() {
        tokio_tungstenite::tungstenite::Message::Text(t) => serde_json::from_str(&t).unwrap(),
        other => panic!("{other:?}"),
    };
    assert_eq!(first["v"], 1);
    assert_eq!(first["type"], "progress");
    assert_eq!(first["payload"]["status"], "querying");

    let hidden: Arc<dyn PreferenceModel> = Arc::new(log_utility_model(&prism(), 6, 0.5).unwrap());
    while let Some(q) = c.query(&id, "A", &token).await {
        let pick = hidden.prefer(&prism(), &q.division).unwrap();
        let (code, _) = c
            .answer(
                &id,
                &token,
                json!({"player": "A", "query_id": q.query_id, "selection": pick}),
            )
            .await;
        assert_eq!(code, 200);
    }
    let mut kinds = std::collections::BTreeSet::new();
    while let Some(Ok(msg)) = ws.next().await {
        let tokio_tungstenite::tungstenite::Message::Text(t) = msg else {
            continue;
        };
        let e: Value = serde_json::from_str(&t).unwrap();
        assert_eq!(e["v"], 1);
        kinds.insert(e["type"].as_str().unwrap().to_string());
        if e["type"] == "result" {
            assert!(e["payload"]["result"]["report"]["division"].is_array());
            break;
        }
    }
    assert!(
        kinds.contains("query") && kinds.contains("progress") && kinds.contains("result"),
        "{kinds:?}"
    );
    ws.close(None).await.ok();
    let _ = ws
        .send(tokio_tungstenite::tungstenite::Message::Close(None))
        .await;
}
