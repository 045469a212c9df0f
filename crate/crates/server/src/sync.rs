//! Node-side synchronisation: HTTP transport to the central and the
//! background loop that drives it.

use std::sync::mpsc::{self, RecvTimeoutError, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use etb_core::federation::{
    sync_until_quiescent, Ack, SyncBatch, SyncError, SyncOptions, SyncTransport, TransportError,
};
use etb_core::store::Node;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::logging::{Level, LogLine, LogSink};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResetRequest {
    pub node_id: Uuid,
}

/// Talks to a central instance over its sync routes.
pub struct HttpTransport {
    client: Client,
    endpoint: String,
    token: String,
}

impl HttpTransport {
    pub fn new(endpoint: &str, token: &str) -> Result<Self, TransportError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        Ok(HttpTransport { client, endpoint: endpoint.trim_end_matches('/').to_string(), token: token.to_string() })
    }

    fn post<T: Serialize>(&self, path: &str, body: &T) -> Result<reqwest::blocking::Response, TransportError> {
        let response = self
            .client
            .post(format!("{}{path}", self.endpoint))
            .bearer_auth(&self.token)
            .json(body)
            .send()
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        match response.status() {
            StatusCode::UNAUTHORIZED => Err(TransportError::AuthRejected),
            s if s.is_success() => Ok(response),
            s => Err(TransportError::Unavailable(format!("central answered {s}"))),
        }
    }
}

impl SyncTransport for HttpTransport {
    fn push(&self, batch: &SyncBatch) -> Result<Ack, TransportError> {
        self.post("/sync/v1/batch", batch)?
            .json()
            .map_err(|e| TransportError::Unavailable(format!("unreadable ack: {e}")))
    }

    fn reset(&self, node_id: Uuid) -> Result<(), TransportError> {
        self.post("/sync/v1/reset", &ResetRequest { node_id }).map(drop)
    }
}

enum Signal {
    Changed,
    Stop,
}

/// Background sync thread. Runs every interval and shortly after each
/// journal append; failures are logged and retried on the next round.
pub struct SyncLoop {
    tx: SyncSender<Signal>,
    handle: Option<JoinHandle<()>>,
}

impl SyncLoop {
    pub fn start(
        node: Arc<Node>,
        transport: Box<dyn SyncTransport + Send>,
        interval: Duration,
        options: SyncOptions,
        log: Arc<LogSink>,
    ) -> Self {
        let (tx, rx) = mpsc::sync_channel::<Signal>(1);
        let notify = tx.clone();
        node.set_journal_listener(move || {
            // A full channel already holds a wake-up.
            let _ = notify.try_send(Signal::Changed);
        });
        let handle = std::thread::Builder::new()
            .name("etb-sync".into())
            .spawn(move || loop {
                run_once(&node, transport.as_ref(), &options, &log);
                match rx.recv_timeout(interval) {
                    Ok(Signal::Changed) | Err(RecvTimeoutError::Timeout) => {}
                    Ok(Signal::Stop) | Err(RecvTimeoutError::Disconnected) => break,
                }
            })
            .expect("spawning the sync thread");
        SyncLoop { tx, handle: Some(handle) }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(handle) = self.handle.take() {
            let _ = self.tx.send(Signal::Stop);
            let _ = handle.join();
        }
    }
}

impl Drop for SyncLoop {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn run_once(node: &Node, transport: &dyn SyncTransport, options: &SyncOptions, log: &LogSink) {
    if node.sync_cursor() >= node.journal_head() {
        return;
    }
    match sync_until_quiescent(node, transport, options) {
        Ok(report) => log.emit(
            &LogLine::event(Level::Info, "sync", "ok")
                .with_detail(format!("{} records in {} batches, cursor {}", report.records, report.batches, report.cursor)),
        ),
        Err(e) => {
            let level = match e {
                SyncError::Transport(TransportError::AuthRejected) | SyncError::Rejected { .. } => Level::Error,
                _ => Level::Warn,
            };
            log.emit(&LogLine::event(level, "sync", "failed").with_detail(e.to_string()));
        }
    }
}
