use std::sync::Arc;
use std::time::Duration;

use autoskill::deployer::DeployConfig;
use autoskill::oracle::{Backend, Oracle, OracleError, OracleRequest, RuleBased};
use autoskill::sim::scenario::load_named;
use autoskill_cli::server::{router, AppState, OracleFactory, SCHEMA_HEADER};
use futures::StreamExt;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

/// Rule answers, delivered slowly enough to observe a running episode.
struct Slow(RuleBased, Duration);

impl Backend for Slow {
    fn name(&self) -> &'static str {
        "slow"
    }
    fn complete(&self, req: &OracleRequest, prompt: &str) -> Result<String, OracleError> {
        std::thread::sleep(self.1);
        self.0.complete(req, prompt)
    }
}

async fn start(scenario: &str, delay_ms: u64) -> String {
    let factory: OracleFactory = Arc::new(move || Ok(Oracle::new(Slow(RuleBased::default(), Duration::from_millis(delay_ms)))));
    let state = AppState::new(load_named(scenario).unwrap(), autoskill::harness::default_deploy_library(), factory, DeployConfig::default());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    format!("{addr}")
}

async fn post(addr: &str, path: &str, body: Value) -> (u16, Value) {
    let r = reqwest::Client::new().post(format!("http://{addr}{path}")).json(&body).send().await.unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

async fn get(addr: &str, path: &str) -> (u16, Value) {
    let r = reqwest::get(format!("http://{addr}{path}")).await.unwrap();
    assert_eq!(r.headers()[SCHEMA_HEADER], "1");
    (r.status().as_u16(), r.json().await.unwrap())
}

async fn events(addr: &str, id: u64) -> Vec<Value> {
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/episodes/{id}/events")).await.unwrap();
    let mut out = Vec::new();
    while let Some(msg) = ws.next().await {
        match msg.unwrap() {
            Message::Text(t) => out.push(serde_json::from_str(&t).unwrap()),
            Message::Close(_) => break,
            _ => {}
        }
    }
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn read_endpoints() {
    let addr = start("blocks_world", 0).await;
    let (status, scene) = get(&addr, "/scene").await;
    assert_eq!(status, 200);
    assert_eq!(scene["scenario"], "blocks_world");
    assert_eq!(scene["state"]["objects"].as_object().unwrap().len(), 6);
    assert!(scene["description"]["relations"].is_array());
    let (status, skills) = get(&addr, "/skills").await;
    assert_eq!(status, 200);
    assert!(skills["library"]["stack_blocks(block1, block2)"]["Code"].is_string());
    assert_eq!(get(&addr, "/episodes/42").await.0, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn episode_streams_to_finished() {
    let addr = start("blocks_world", 0).await;
    let (status, body) = post(&addr, "/episodes", json!({"instruction": "put the red block on the blue block"})).await;
    assert_eq!(status, 201);
    let id = body["id"].as_u64().unwrap();
    let evs = events(&addr, id).await;
    assert!(evs.iter().enumerate().all(|(i, e)| e["seq"] == i as u64));
    let last = evs.last().unwrap();
    assert_eq!((last["event"].as_str(), last["success"].as_bool()), (Some("finished"), Some(true)));

    let (_, ep) = get(&addr, &format!("/episodes/{id}")).await;
    assert_eq!(ep["status"], "finished");
    assert_eq!(ep["events"], evs.len());
    // A late subscriber gets the identical stream.
    assert_eq!(events(&addr, id).await, evs);
    let (_, scene) = get(&addr, "/scene").await;
    let on = scene["description"]["relations"]
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["subject"] == "red block" && r["relation"] == "on" && r["object"] == "blue block");
    assert!(on, "{}", scene["description"]);
    assert_eq!(post(&addr, &format!("/episodes/{id}/message"), json!({"text": "thanks"})).await.0, 409);
}

#[tokio::test(flavor = "multi_thread")]
async fn one_episode_at_a_time() {
    let addr = start("blocks_world", 40).await;
    let (status, body) = post(&addr, "/episodes", json!({"instruction": "put the red block on the blue block"})).await;
    assert_eq!(status, 201);
    let id = body["id"].as_u64().unwrap();
    assert_eq!(post(&addr, "/episodes", json!({"instruction": "again"})).await.0, 409);
    assert_eq!(post(&addr, &format!("/episodes/{id}/message"), json!({"text": "hurry up"})).await.0, 202);
    let (_, running) = get(&addr, &format!("/episodes/{id}")).await;
    assert_eq!(running["status"], "running");

    let evs = events(&addr, id).await;
    assert!(evs.iter().any(|e| e["event"] == "controller_turn" && e["text"] == "hurry up"));
    assert_eq!(evs.last().unwrap()["event"], "finished");
    let (status, next) = post(&addr, "/episodes", json!({"instruction": "put the green block on the yellow block"})).await;
    assert_eq!(status, 201);
    assert_eq!(next["id"], id + 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_requests() {
    let addr = start("blocks_world", 0).await;
    assert_eq!(post(&addr, "/episodes", json!({"text": "no instruction field"})).await.0, 400);
    assert_eq!(post(&addr, "/episodes", json!({"instruction": "  "})).await.0, 400);
    assert_eq!(post(&addr, "/episodes/7/message", json!({"text": "hi"})).await.0, 404);
    assert!(tokio_tungstenite::connect_async(format!("ws://{addr}/episodes/7/events")).await.is_err());
}
