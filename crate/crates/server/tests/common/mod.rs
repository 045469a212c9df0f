#![allow(dead_code)]

use std::path::Path;
use std::thread::JoinHandle;

use axum::Router;
use etb_core::access::HashingParams;
use etb_server::config::{Config, Mode};
use reqwest::blocking::{Client, RequestBuilder, Response};
use serde_json::Value;
use tokio::sync::oneshot;
use uuid::Uuid;

/// A router served on an ephemeral local port until dropped.
pub struct Server {
    pub base: String,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

pub fn spawn(router: Router) -> Server {
    let (ready_tx, ready_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            ready_tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
        });
    });
    let addr = ready_rx.recv().unwrap();
    Server { base: format!("http://{addr}"), shutdown: Some(stop_tx), thread: Some(thread) }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(stop) = self.shutdown.take() {
            let _ = stop.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

pub fn node_config(dir: &Path) -> Config {
    let mut config = Config::new(Mode::Node, dir);
    config.node_id = Some(Uuid::new_v4());
    config.hashing = Some(HashingParams::fast());
    config
}

pub fn central_config(dir: &Path, admin_token: &str) -> Config {
    let mut config = Config::new(Mode::Central, dir);
    config.admin_token = Some(admin_token.to_string());
    config
}

/// Thin JSON client over one server.
pub struct Api {
    pub base: String,
    pub client: Client,
    pub token: Option<String>,
}

impl Api {
    pub fn new(server: &Server) -> Self {
        Api { base: server.base.clone(), client: Client::new(), token: None }
    }

    pub fn as_user(&self, token: &str) -> Self {
        Api { base: self.base.clone(), client: self.client.clone(), token: Some(token.to_string()) }
    }

    pub fn request(&self, method: reqwest::Method, path: &str) -> RequestBuilder {
        let builder = self.client.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => builder.bearer_auth(t),
            None => builder,
        }
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        read(self.request(reqwest::Method::GET, path).send().unwrap())
    }

    pub fn send(&self, method: reqwest::Method, path: &str, body: &Value) -> (u16, Value) {
        read(self.request(method, path).json(body).send().unwrap())
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        self.send(reqwest::Method::POST, path, body)
    }

    pub fn login(&self, username: &str, credential: &str) -> Api {
        let (status, body) =
            self.post("/api/v1/auth/token", &serde_json::json!({ "username": username, "credential": credential }));
        assert_eq!(status, 200, "{body}");
        self.as_user(body["token"].as_str().unwrap())
    }
}

pub fn read(response: Response) -> (u16, Value) {
    let status = response.status().as_u16();
    let text = response.text().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

/// A minimal valid entry body.
pub fn entry_json(lang: &str, term: &str) -> Value {
    serde_json::json!({
        "lang_sections": [{ "lang": lang, "terms": [{ "term": term }] }]
    })
}

/// Polls until `check` holds or the deadline passes.
pub fn eventually(mut check: impl FnMut() -> bool) -> bool {
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(20);
    while std::time::Instant::now() < deadline {
        if check() {
            return true;
        }
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    false
}
