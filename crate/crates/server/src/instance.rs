//! A running node or central: open store, log sink, optional sync loop and
//! the HTTP router over them.

use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use etb_core::central::Central;
use etb_core::federation::SyncOptions;
use etb_core::store::{Node, NodeOptions};

use crate::api::{central_router, node_router, CentralApp};
use crate::config::{Config, DataDirLock, Mode};
use crate::logging::{Level, LogLine, LogSink};
use crate::sync::{HttpTransport, SyncLoop};

pub enum Backend {
    Node(Arc<Node>),
    Central(Arc<Central>),
}

pub struct Instance {
    pub config: Config,
    pub backend: Backend,
    pub log: Arc<LogSink>,
    sync: Option<SyncLoop>,
    _lock: DataDirLock,
}

pub fn node_options(config: &Config) -> NodeOptions {
    NodeOptions {
        session_ttl_hours: config.session_ttl_hours,
        hashing: config.hashing.unwrap_or_default(),
        ..NodeOptions::default()
    }
}

impl Instance {
    /// Locks the data directory and opens the store it holds.
    pub fn open(config: Config) -> Result<Self, String> {
        let lock = DataDirLock::acquire(&config.data_dir)?;
        let backend = match config.mode {
            Mode::Node => {
                let node_id = config.node_id.ok_or("node mode requires node_id")?;
                let node = Node::open(&config.data_dir, node_id, node_options(&config)).map_err(|e| e.to_string())?;
                Backend::Node(Arc::new(node))
            }
            Mode::Central => Backend::Central(Arc::new(Central::open(&config.data_dir).map_err(|e| e.to_string())?)),
        };
        let log = LogSink::open(&config.log_path()).map_err(|e| format!("cannot open log: {e}"))?;
        Ok(Instance { config, backend, log: Arc::new(log), sync: None, _lock: lock })
    }

    pub fn node(&self) -> Result<&Arc<Node>, String> {
        match &self.backend {
            Backend::Node(node) => Ok(node),
            Backend::Central(_) => Err("this command needs a node instance".into()),
        }
    }

    pub fn central(&self) -> Result<&Arc<Central>, String> {
        match &self.backend {
            Backend::Central(central) => Ok(central),
            Backend::Node(_) => Err("this command needs a central instance".into()),
        }
    }

    pub fn transport(&self) -> Result<HttpTransport, String> {
        match (&self.config.central_endpoint, &self.config.central_token) {
            (Some(endpoint), Some(token)) => HttpTransport::new(endpoint, token).map_err(|e| e.to_string()),
            _ => Err("sync is not configured (central_endpoint and central_token)".into()),
        }
    }

    /// Starts background sync when the config names a central.
    pub fn start_sync(&mut self) -> Result<(), String> {
        if !self.config.sync_enabled() || self.sync.is_some() {
            return Ok(());
        }
        let transport = self.transport()?;
        let node = self.node()?.clone();
        let interval = Duration::from_secs(self.config.sync_interval_seconds);
        self.sync = Some(SyncLoop::start(node, Box::new(transport), interval, SyncOptions::default(), self.log.clone()));
        Ok(())
    }

    pub fn router(&self) -> Router {
        match &self.backend {
            Backend::Node(node) => node_router(node.clone(), self.log.clone()),
            Backend::Central(central) => {
                let app = CentralApp::new(central.clone(), self.config.admin_token.as_deref());
                central_router(Arc::new(app), self.log.clone())
            }
        }
    }

    /// Stops background work and writes a fresh snapshot.
    pub fn shutdown(mut self) -> Result<(), String> {
        if let Some(sync) = self.sync.take() {
            sync.stop();
        }
        let result = match &self.backend {
            Backend::Node(node) => node.compact().map_err(|e| e.to_string()),
            Backend::Central(central) => central.compact().map_err(|e| e.to_string()),
        };
        self.log.emit(&LogLine::event(Level::Info, "shutdown", if result.is_ok() { "ok" } else { "failed" }));
        result
    }
}
