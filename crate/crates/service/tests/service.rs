use std::sync::Arc;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use semfilter::io::read_tick_log;
use semfilter::semantic::{ClientError, FixtureClient, LlmClient, LlmRequest};
use semfilter::sim::builtin_fixture;
use semfilter_service::{serve, AppState, ServiceConfig};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Server {
    http: String,
    ws: String,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
    logs: tempfile::TempDir,
}

impl Server {
    async fn start(client: Arc<dyn LlmClient>) -> Self {
        let logs = tempfile::tempdir().unwrap();
        let mut config = ServiceConfig::with_scenes(client, 7, Vec::new());
        config.log_dir = Some(logs.path().to_path_buf());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(serve(listener, AppState::new(config), async move {
            let _ = rx.await;
        }));
        Self {
            http: format!("http://{addr}"),
            ws: format!("ws://{addr}"),
            stop: Some(tx),
            task,
            logs,
        }
    }

    async fn fixture() -> Self {
        Self::start(Arc::new(builtin_fixture())).await
    }

    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = reqwest::Client::new().post(format!("{}{path}", self.http)).json(&body).send().await.unwrap();
        (resp.status().as_u16(), resp.json().await.unwrap())
    }

    async fn get(&self, path: &str) -> (u16, Value) {
        let resp = reqwest::get(format!("{}{path}", self.http)).await.unwrap();
        (resp.status().as_u16(), resp.json().await.unwrap())
    }

    async fn session(&self, scene: &str, object: &str) -> String {
        let (status, body) = self.post("/session", json!({"scene_id": scene, "object": object})).await;
        assert_eq!(status, 201, "{body}");
        body["session_id"].as_str().unwrap().to_string()
    }

    async fn connect(&self, id: &str) -> (Ws, Value) {
        let (mut ws, _) = connect_async(format!("{}/ws/session/{id}", self.ws)).await.unwrap();
        let hello = recv(&mut ws).await;
        assert_eq!(hello["type"], "hello");
        (ws, hello)
    }

    async fn shutdown(mut self) -> tempfile::TempDir {
        self.stop.take().unwrap().send(()).unwrap();
        tokio::time::timeout(Duration::from_secs(10), self.task).await.unwrap().unwrap().unwrap();
        self.logs
    }
}

async fn recv(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("no message within 10 s");
        if let Message::Text(t) = msg.expect("socket closed").unwrap() {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn recv_type(ws: &mut Ws, ty: &str) -> Value {
    loop {
        let v = recv(ws).await;
        if v["type"] == ty {
            return v;
        }
    }
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

fn cmd(seq: u64, v: [f64; 3], deadman: bool) -> Value {
    json!({"type": "cmd", "seq": seq, "t_ms": seq * 50, "v": v, "w": [0.0, 0.0, 0.0], "deadman": deadman})
}

fn vec3(v: &Value) -> [f64; 3] {
    let a = v.as_array().unwrap();
    [a[0].as_f64().unwrap(), a[1].as_f64().unwrap(), a[2].as_f64().unwrap()]
}

fn norm(v: &Value) -> f64 {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap().powi(2)).sum::<f64>().sqrt()
}

/// Sends upward twists at 20 Hz for `secs`, returning the next seq.
async fn drive_up(ws: &mut Ws, mut seq: u64, secs: f64) -> u64 {
    let until = Instant::now() + Duration::from_secs_f64(secs);
    while Instant::now() < until {
        send(ws, cmd(seq, [0.0, 0.0, 0.05], true)).await;
        seq += 1;
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    seq
}

/// Skips states that queued up while the test was busy: returns the first
/// one that had to be waited for.
async fn live_state(ws: &mut Ws) -> Value {
    loop {
        let asked = Instant::now();
        let s = recv_type(ws, "state").await;
        if asked.elapsed() > Duration::from_millis(5) {
            return s;
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn http_routes_and_not_found() {
    let srv = Server::fixture().await;
    let (status, scenes) = srv.get("/scenes").await;
    assert_eq!(status, 200);
    let ids: Vec<&str> = scenes.as_array().unwrap().iter().map(|s| s["scene_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["balloons_towel", "books", "laptop_books"]);

    let (status, meshes) = srv.get("/scene/laptop_books/meshes").await;
    assert_eq!(status, 200);
    for obj in meshes["objects"].as_array().unwrap() {
        let solids = obj["solids"].as_array().unwrap();
        assert!(!solids.is_empty());
        assert_eq!(solids[0]["vertices"].as_array().unwrap().len(), 32 * 32);
        let points = obj["points"].as_array().unwrap().len();
        assert!(points > 0 && points <= semfilter_service::MAX_MESH_POINTS);
    }

    assert_eq!(srv.get("/scene/kitchen/meshes").await.0, 404);
    assert_eq!(srv.post("/session", json!({"scene_id": "kitchen"})).await.0, 404);
    assert_eq!(srv.post("/session", json!({"scene_id": "books", "chain": "ur5"})).await.0, 400);
    assert_eq!(srv.post("/session/s99/context", json!({"held_object": "knife"})).await.0, 404);
    assert!(connect_async(format!("{}/ws/session/s99", srv.ws)).await.is_err());
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn hello_then_states_at_the_tick_rate() {
    let srv = Server::fixture().await;
    let id = srv.session("books", "cup of water").await;
    let (mut ws, hello) = srv.connect(&id).await;
    assert_eq!(hello["schema"], "semfilter/wire/1");
    assert_eq!(hello["role"], "driver");
    assert_eq!(hello["n"], 7);
    assert!((hello["dt"].as_f64().unwrap() - 1.0 / 45.0).abs() < 1e-12);
    assert_eq!(hello["held_object"], "cup of water");
    assert_eq!(hello["context"]["pose"], "constrained_rotation");
    assert!(hello["envelopes"].as_array().unwrap().iter().any(|e| e["label"] == "books" && e["relationship"] == "above"));
    assert!(hello["objects"].as_array().unwrap().iter().any(|o| o["label"] == "books"));

    let mut seq = hello["seq"].as_u64().unwrap();
    let mut t_ms = hello["t_ms"].as_u64().unwrap();
    let mut ticks = Vec::new();
    let start = Instant::now();
    while ticks.len() < 45 {
        let s = recv(&mut ws).await;
        assert!(s["seq"].as_u64().unwrap() > seq);
        assert!(s["t_ms"].as_u64().unwrap() >= t_ms);
        seq = s["seq"].as_u64().unwrap();
        t_ms = s["t_ms"].as_u64().unwrap();
        if s["type"] != "state" {
            continue;
        }
        assert_eq!(s["q"].as_array().unwrap().len(), 7);
        assert!((norm(&s["r_cur"]) - 1.0).abs() < 1e-9);
        assert_eq!(s["status"], "optimal");
        assert!(!s["h"]["sem"].as_array().unwrap().is_empty());
        assert_eq!(s["h"]["sem"].as_array().unwrap().len(), s["labels"]["sem"].as_array().unwrap().len());
        ticks.push(s["tick"].as_u64().unwrap());
    }
    assert!(ticks.windows(2).all(|w| w[1] > w[0]));
    // generous bound: only gross pacing errors should trip this
    let per_tick = start.elapsed().as_secs_f64() / (ticks[44] - ticks[0]) as f64;
    assert!(per_tick > 0.5 / 45.0 && per_tick < 2.0 / 45.0, "{per_tick}");
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_connection_is_a_read_only_observer() {
    let srv = Server::fixture().await;
    let id = srv.session("books", "none").await;
    let (mut driver, hello) = srv.connect(&id).await;
    assert_eq!(hello["role"], "driver");
    let (mut observer, hello) = srv.connect(&id).await;
    assert_eq!(hello["role"], "observer");

    send(&mut observer, cmd(1, [0.0, 0.0, 0.05], true)).await;
    let err = recv_type(&mut observer, "error").await;
    assert_eq!(err["code"], "read_only");
    // still served after the rejection
    recv_type(&mut observer, "state").await;

    driver.close(None).await.unwrap();
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_next, hello) = srv.connect(&id).await;
    assert_eq!(hello["role"], "driver");
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_frames_get_errors_and_the_connection_survives() {
    let srv = Server::fixture().await;
    let id = srv.session("books", "none").await;
    let (mut ws, _) = srv.connect(&id).await;

    ws.send(Message::Text("garbage".into())).await.unwrap();
    assert_eq!(recv_type(&mut ws, "error").await["code"], "malformed");
    send(&mut ws, json!({"type": "teleport", "seq": 1, "t_ms": 0})).await;
    assert_eq!(recv_type(&mut ws, "error").await["code"], "unknown_type");
    send(&mut ws, json!({"type": "cmd", "seq": 2, "t_ms": 0, "v": [0.0, 0.0], "w": [0.0, 0.0, 0.0], "deadman": true})).await;
    assert_eq!(recv_type(&mut ws, "error").await["code"], "malformed");
    send(&mut ws, cmd(10, [0.0, 0.0, 0.05], true)).await;
    send(&mut ws, cmd(10, [0.0, 0.0, 0.05], true)).await;
    assert_eq!(recv_type(&mut ws, "error").await["code"], "stale_seq");

    // a stale or malformed frame zeroes the twist, a fresh one moves again
    let z0 = vec3(&live_state(&mut ws).await["x_ee"])[2];
    drive_up(&mut ws, 11, 1.0).await;
    let z1 = vec3(&live_state(&mut ws).await["x_ee"])[2];
    assert!(z1 > z0 + 0.01, "{z0} -> {z1}");
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn deadman_brings_the_arm_to_rest() {
    let srv = Server::fixture().await;
    let id = srv.session("books", "none").await;
    let (mut ws, _) = srv.connect(&id).await;

    // before any command the deadman is down
    let s = recv_type(&mut ws, "state").await;
    assert_eq!(s["deadman"], true);
    assert_eq!(norm(&s["u_cert"]), 0.0);

    let seq = drive_up(&mut ws, 1, 1.0).await;
    // drive_up idles 50 ms after its last command
    let silent = Instant::now() - Duration::from_millis(50);
    let s = recv_type(&mut ws, "state").await;
    assert_eq!(s["deadman"], false);
    assert!(norm(&s["u_cert"]) > 0.0);

    // silence: once the timeout passes every tick is a zero twist
    let mut rested = None;
    while silent.elapsed() < Duration::from_millis(900) {
        let s = recv_type(&mut ws, "state").await;
        if s["deadman"] == true {
            rested.get_or_insert(silent.elapsed());
            assert_eq!(norm(&s["u_cmd"]), 0.0);
            assert_eq!(norm(&s["u_cert"]), 0.0);
        } else {
            assert!(rested.is_none(), "deadman flickered");
        }
    }
    let rested = rested.expect("deadman never fired");
    assert!(rested >= Duration::from_millis(240) && rested < Duration::from_millis(600), "{rested:?}");

    // an explicit release stops immediately
    let seq = drive_up(&mut ws, seq, 0.5).await;
    send(&mut ws, cmd(seq, [0.0, 0.0, 0.05], false)).await;
    let s = live_state(&mut ws).await;
    assert_eq!(s["deadman"], true);
    assert_eq!(norm(&s["u_cert"]), 0.0);
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn context_switches_are_answered_and_broadcast() {
    let srv = Server::fixture().await;
    let id = srv.session("laptop_books", "none").await;
    let (mut ws, hello) = srv.connect(&id).await;
    assert!(hello["envelopes"].as_array().unwrap().is_empty());
    let path = format!("/session/{id}/context");

    let (status, cup) = srv.post(&path, json!({"held_object": "cup of water"})).await;
    assert_eq!(status, 200, "{cup}");
    let ctx = &cup["context"];
    assert!(ctx["spatial"].as_array().unwrap().iter().any(|c| c["object"] == "laptop" && c["relationship"] == "above"));
    assert!(ctx["behavioral"].as_array().unwrap().iter().any(|b| b["object"] == "laptop" && b["caution"] == true));
    assert_eq!(ctx["pose"], "constrained_rotation");
    assert!(cup["envelopes"].as_array().unwrap().iter().any(|e| e["label"] == "laptop" && e["cautious"] == true));
    assert!(cup.get("warning").is_none());
    let pushed = recv_type(&mut ws, "context").await;
    assert_eq!(pushed["context"], cup["context"]);
    assert_eq!(pushed["held_object"], "cup of water");

    let (status, sponge) = srv.post(&path, json!({"held_object": "dry sponge"})).await;
    assert_eq!(status, 200);
    assert!(sponge["context"]["spatial"].as_array().unwrap().is_empty());
    assert_eq!(sponge["context"]["pose"], "free_rotation");
    assert!(sponge["envelopes"].as_array().unwrap().is_empty());

    let (status, duck) = srv.post(&path, json!({"held_object": "rubber duck"})).await;
    assert_eq!(status, 200);
    assert!(duck["warning"].as_str().unwrap().contains("rubber duck"));
    assert!(duck["context"]["spatial"].as_array().unwrap().is_empty());
    assert_eq!(duck["context"]["pose"], "free_rotation");
    srv.shutdown().await;
}

/// Fixture answers, except that anything mentioning `poisoned` fails.
struct Flaky {
    inner: FixtureClient,
    poisoned: &'static str,
}

impl LlmClient for Flaky {
    fn complete(&self, request: &LlmRequest) -> Result<String, ClientError> {
        if request.prompt.contains(self.poisoned) {
            return Err(ClientError::Transport("connection reset".into()));
        }
        self.inner.complete(request)
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn failed_synthesis_keeps_the_prior_context() {
    let srv = Server::start(Arc::new(Flaky {
        inner: builtin_fixture(),
        poisoned: "cursed amulet",
    }))
    .await;
    let id = srv.session("laptop_books", "cup of water").await;
    let (status, body) = srv.post(&format!("/session/{id}/context"), json!({"held_object": "cursed amulet"})).await;
    assert_eq!(status, 502);
    assert!(body["error"].as_str().unwrap().contains("synthesis"));
    let (_ws, hello) = srv.connect(&id).await;
    assert_eq!(hello["held_object"], "cup of water");
    assert_eq!(hello["context"]["pose"], "constrained_rotation");
    srv.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn every_applied_velocity_was_certified() {
    let srv = Server::fixture().await;
    let id = srv.session("books", "cup of water").await;
    let (mut ws, hello) = srv.connect(&id).await;
    let dt = hello["dt"].as_f64().unwrap();
    drive_up(&mut ws, 1, 1.5).await;
    let seen = recv_type(&mut ws, "state").await;
    drop(ws);
    let logs = srv.shutdown().await;

    let log = read_tick_log(logs.path().join(format!("{id}.jsonl"))).unwrap();
    assert!(log.len() > 45);
    assert!(log.iter().all(|t| t.filtered));
    assert!(log.iter().any(|t| t.u_cert.iter().any(|u| *u != 0.0)));
    for pair in log.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        assert_eq!(b.tick, a.tick + 1);
        for j in 0..a.q.len() {
            assert!((b.q[j] - (a.q[j] + dt * a.u_cert[j])).abs() < 1e-12);
        }
    }
    // the telemetry is the logged record
    let tick = seen["tick"].as_u64().unwrap();
    let rec = log.iter().find(|t| t.tick == tick).unwrap();
    let sent: Vec<f64> = seen["u_cert"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(sent, rec.u_cert);
}
