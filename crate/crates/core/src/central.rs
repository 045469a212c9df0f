//! Central aggregator: registers nodes, applies their sync batches and
//! serves the consolidated view.
//!
//! Each node owns a namespace holding its published collections, entries and
//! tombstones. Batches apply atomically and strictly in sequence; records at
//! or below a node's `last_applied_seq` are skipped, which makes replays
//! harmless.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::access::new_token;
use crate::clock::{Clock, SystemClock};
use crate::error::NodeError;
use crate::federation::{Ack, AckStatus, Projection, PublishedCollection, SyncBatch, PROTOCOL_VERSION};
use crate::journal::{ChangeOp, ChangeRecord, Entity};
use crate::model::{CollectionMeta, TermEntry, Timestamp};
use crate::persist::Wal;
use crate::search::{Access, DocInfo, DocKey, Facets, SearchFilters, SearchIndex, SearchQuery, SearchResults};
use crate::tbx::{parse_entry_fragment, parse_tbx};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeState {
    pub node_id: Uuid,
    pub display_name: String,
    pub last_applied_seq: u64,
    pub last_contact_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RegisteredNode {
    state: NodeState,
    /// SHA-256 of the node token; tokens are 256 random bits.
    token_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CentralCollection {
    revision: u64,
    meta: CollectionMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CentralEntry {
    collection_id: Uuid,
    entry: TermEntry,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Namespace {
    collections: BTreeMap<Uuid, CentralCollection>,
    collection_tombstones: BTreeMap<Uuid, u64>,
    entries: BTreeMap<Uuid, CentralEntry>,
    entry_tombstones: BTreeMap<Uuid, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct CentralData {
    nodes: BTreeMap<Uuid, RegisteredNode>,
    spaces: BTreeMap<Uuid, Namespace>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CentralEvent {
    Registered { node: RegisteredNode },
    Applied { node_id: Uuid, records: Vec<ChangeRecord>, at: Timestamp },
    Reset { node_id: Uuid },
    Purged { node_id: Uuid },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CentralError {
    #[error("unknown or unauthenticated node")]
    Unauthenticated,
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl From<std::io::Error> for CentralError {
    fn from(e: std::io::Error) -> Self {
        CentralError::Storage(e.to_string())
    }
}

struct Inner {
    data: CentralData,
    index: SearchIndex,
    by_digest: HashMap<String, Uuid>,
    wal: Wal<CentralData, CentralEvent>,
}

pub struct Central {
    inner: RwLock<Inner>,
    clock: Arc<dyn Clock>,
}

fn digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

impl Inner {
    fn rebuild_derived(&mut self) {
        self.index = SearchIndex::new();
        self.by_digest = self.data.nodes.values().map(|n| (n.token_digest.clone(), n.state.node_id)).collect();
        for (node_id, space) in &self.data.spaces {
            for (entry_id, stored) in &space.entries {
                self.index
                    .index_entry(DocKey { node_id: *node_id, entry_id: *entry_id }, stored.collection_id, &stored.entry);
            }
        }
    }

    fn apply_event(&mut self, event: CentralEvent) {
        match event {
            CentralEvent::Registered { node } => {
                self.by_digest.retain(|_, id| *id != node.state.node_id);
                self.by_digest.insert(node.token_digest.clone(), node.state.node_id);
                self.data.nodes.insert(node.state.node_id, node);
            }
            CentralEvent::Applied { node_id, records, at } => {
                for record in &records {
                    self.apply_record(node_id, record);
                }
                if let Some(node) = self.data.nodes.get_mut(&node_id) {
                    if let Some(last) = records.last() {
                        node.state.last_applied_seq = last.seq;
                    }
                    node.state.last_contact_at = Some(at);
                }
            }
            CentralEvent::Reset { node_id } => {
                self.clear_space(node_id);
                if let Some(node) = self.data.nodes.get_mut(&node_id) {
                    node.state.last_applied_seq = 0;
                }
            }
            CentralEvent::Purged { node_id } => {
                self.clear_space(node_id);
                if let Some(node) = self.data.nodes.remove(&node_id) {
                    self.by_digest.remove(&node.token_digest);
                }
            }
        }
    }

    fn clear_space(&mut self, node_id: Uuid) {
        self.data.spaces.remove(&node_id);
        self.index.remove_where(|k, _| k.node_id == node_id);
    }

    /// Applies one record with last-writer-wins on revision. Records whose
    /// payload does not decode are skipped.
    fn apply_record(&mut self, node_id: Uuid, record: &ChangeRecord) {
        let space = self.data.spaces.entry(node_id).or_default();
        let cid = record.collection_id;
        match (record.entity, record.op) {
            (Entity::CollectionMeta, ChangeOp::Upsert) => {
                let current = space.collections.get(&cid).map_or(0, |c| c.revision);
                let buried = space.collection_tombstones.get(&cid).copied().unwrap_or(0);
                if record.revision <= current.max(buried) {
                    return;
                }
                let Some(meta) = record
                    .payload_tbx
                    .as_deref()
                    .and_then(|p| parse_tbx(p.as_bytes()).ok())
                    .map(|doc| doc.meta)
                    .filter(|meta| meta.id == cid)
                else {
                    return;
                };
                space.collection_tombstones.remove(&cid);
                space.collections.insert(cid, CentralCollection { revision: record.revision, meta });
            }
            (Entity::CollectionMeta, ChangeOp::Delete) => {
                let current = space.collections.get(&cid).map_or(0, |c| c.revision);
                if record.revision <= current {
                    return;
                }
                space.collections.remove(&cid);
                space.collection_tombstones.insert(cid, record.revision);
                space.entries.retain(|_, e| e.collection_id != cid);
                self.index.remove_where(|k, d| k.node_id == node_id && d.collection_id == cid);
            }
            (Entity::Entry, op) => {
                let Some(entry_id) = record.entry_id else {
                    return;
                };
                let current = space.entries.get(&entry_id).map_or(0, |e| e.entry.revision);
                let buried = space.entry_tombstones.get(&entry_id).copied().unwrap_or(0);
                if record.revision <= current.max(buried) {
                    return;
                }
                let key = DocKey { node_id, entry_id };
                if op == ChangeOp::Delete {
                    space.entries.remove(&entry_id);
                    space.entry_tombstones.insert(entry_id, record.revision);
                    self.index.remove_entry(&key);
                    return;
                }
                let Some(entry) = record
                    .payload_tbx
                    .as_deref()
                    .and_then(|p| parse_entry_fragment(p.as_bytes()).ok())
                    .map(|(entry, _)| entry)
                    .filter(|e| e.id == entry_id && e.revision == record.revision)
                else {
                    return;
                };
                space.entry_tombstones.remove(&entry_id);
                self.index.index_entry(key, cid, &entry);
                space.entries.insert(entry_id, CentralEntry { collection_id: cid, entry });
            }
        }
    }

    fn access(&self, key: &DocKey, doc: &DocInfo) -> Option<Access> {
        let collection = self.data.spaces.get(&key.node_id)?.collections.get(&doc.collection_id)?;
        Some(Access { collection_name: collection.meta.name.clone(), drafts: false })
    }

    fn log(&mut self, event: CentralEvent) -> Result<(), CentralError> {
        self.wal.append(&event)?;
        self.apply_event(event);
        if self.wal.wants_compaction() {
            self.wal.compact(&self.data)?;
        }
        Ok(())
    }
}

impl Central {
    pub fn in_memory() -> Self {
        Central::assemble(Wal::memory(), CentralData::default(), Arc::new(SystemClock))
    }

    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        Central::assemble(Wal::memory(), CentralData::default(), clock)
    }

    pub fn open(dir: &Path) -> Result<Self, CentralError> {
        let (wal, recovered) = Wal::open(dir, "central")?;
        let mut central = Central::assemble(wal, recovered.snapshot.unwrap_or_default(), Arc::new(SystemClock));
        {
            let inner = central.inner.get_mut();
            for event in recovered.events {
                inner.apply_event(event);
            }
        }
        Ok(central)
    }

    fn assemble(wal: Wal<CentralData, CentralEvent>, data: CentralData, clock: Arc<dyn Clock>) -> Self {
        let mut inner = Inner { data, index: SearchIndex::new(), by_digest: HashMap::new(), wal };
        inner.rebuild_derived();
        Central { inner: RwLock::new(inner), clock }
    }

    /// Registers a node (or re-registers it, keeping its data) and returns
    /// a fresh node token. Earlier tokens stop working.
    pub fn register(&self, node_id: Uuid, display_name: &str) -> Result<String, CentralError> {
        if node_id.is_nil() {
            return Err(CentralError::InvalidInput("node id is nil".into()));
        }
        let token = new_token();
        let mut inner = self.inner.write();
        let state = match inner.data.nodes.get(&node_id) {
            Some(existing) => NodeState { display_name: display_name.to_string(), ..existing.state.clone() },
            None => NodeState {
                node_id,
                display_name: display_name.to_string(),
                last_applied_seq: 0,
                last_contact_at: None,
            },
        };
        inner.log(CentralEvent::Registered { node: RegisteredNode { state, token_digest: digest(&token) } })?;
        Ok(token)
    }

    /// Maps a node token to the node it was issued to.
    pub fn authenticate_node(&self, token: &str) -> Option<Uuid> {
        self.inner.read().by_digest.get(&digest(token)).copied()
    }

    /// Applies a batch from `node_id` (already authenticated). Protocol
    /// problems come back as Ack statuses.
    pub fn apply_batch(&self, node_id: Uuid, batch: &SyncBatch) -> Result<Ack, CentralError> {
        if batch.node_id != node_id {
            return Err(CentralError::Unauthenticated);
        }
        let mut inner = self.inner.write();
        let last_applied = inner
            .data
            .nodes
            .get(&node_id)
            .ok_or(CentralError::Unauthenticated)?
            .state
            .last_applied_seq;
        let reply = |status, last_applied_seq, detail: Option<&str>| Ack {
            node_id,
            last_applied_seq,
            status,
            detail: detail.map(str::to_string),
        };
        if batch.protocol_version != PROTOCOL_VERSION {
            return Ok(reply(AckStatus::VersionUnsupported, last_applied, Some("only protocol version 1 is supported")));
        }
        if !batch.checksum_matches() {
            return Ok(reply(AckStatus::ChecksumMismatch, last_applied, None));
        }
        if !batch.is_consistent() {
            return Ok(reply(AckStatus::OutOfOrder, last_applied, Some("batch envelope does not match its changes")));
        }
        if batch.first_seq > last_applied + 1 {
            return Ok(reply(AckStatus::OutOfOrder, last_applied, Some("gap before first_seq; resend from last_applied_seq")));
        }
        if batch.last_seq <= last_applied {
            return Ok(reply(AckStatus::Ok, batch.last_seq, Some("already applied")));
        }
        let remainder: Vec<ChangeRecord> =
            batch.changes.iter().filter(|r| r.seq > last_applied).cloned().collect();
        inner.log(CentralEvent::Applied { node_id, records: remainder, at: self.clock.now() })?;
        Ok(reply(AckStatus::Ok, batch.last_seq, None))
    }

    /// Forgets a node's data and rewinds it to sequence 0.
    pub fn reset_node(&self, node_id: Uuid) -> Result<(), CentralError> {
        let mut inner = self.inner.write();
        if !inner.data.nodes.contains_key(&node_id) {
            return Err(CentralError::Unauthenticated);
        }
        inner.log(CentralEvent::Reset { node_id })
    }

    /// Removes a node and everything it published.
    pub fn purge_node(&self, node_id: Uuid) -> Result<bool, CentralError> {
        let mut inner = self.inner.write();
        if !inner.data.nodes.contains_key(&node_id) && !inner.data.spaces.contains_key(&node_id) {
            return Ok(false);
        }
        inner.log(CentralEvent::Purged { node_id })?;
        Ok(true)
    }

    pub fn nodes(&self) -> Vec<NodeState> {
        self.inner.read().data.nodes.values().map(|n| n.state.clone()).collect()
    }

    pub fn node(&self, node_id: Uuid) -> Option<NodeState> {
        self.inner.read().data.nodes.get(&node_id).map(|n| n.state.clone())
    }

    pub fn search(&self, query: &SearchQuery) -> Result<SearchResults, NodeError> {
        let inner = self.inner.read();
        let mut query = query.clone();
        query.filters.include_drafts = false;
        Ok(inner.index.search(&query, |k, d| inner.access(k, d))?)
    }

    pub fn facet_counts(&self, filters: &SearchFilters) -> Facets {
        let inner = self.inner.read();
        inner.index.facet_counts(filters, |k, d| inner.access(k, d))
    }

    pub fn entry(&self, node_id: Uuid, entry_id: Uuid) -> Option<(Uuid, TermEntry)> {
        let inner = self.inner.read();
        let stored = inner.data.spaces.get(&node_id)?.entries.get(&entry_id)?;
        inner.data.spaces[&node_id].collections.get(&stored.collection_id)?;
        Some((stored.collection_id, stored.entry.clone()))
    }

    /// The consolidated store in the same shape as a node's public
    /// projection.
    pub fn projection(&self) -> Projection {
        let inner = self.inner.read();
        let mut out = Projection::new();
        for (node_id, space) in &inner.data.spaces {
            for (cid, collection) in &space.collections {
                out.insert(
                    (*node_id, *cid),
                    PublishedCollection { meta: collection.meta.clone(), entries: BTreeMap::new() },
                );
            }
            for (eid, stored) in &space.entries {
                if let Some(published) = out.get_mut(&(*node_id, stored.collection_id)) {
                    published.entries.insert(*eid, stored.entry.clone());
                }
            }
        }
        out
    }

    /// Serialized consolidated state, excluding contact times, for
    /// byte-level comparisons.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let inner = self.inner.read();
        let mut data = inner.data.clone();
        for node in data.nodes.values_mut() {
            node.state.last_contact_at = None;
        }
        serde_json::to_vec(&data).expect("central state serializes")
    }

    pub fn compact(&self) -> Result<(), CentralError> {
        let mut inner = self.inner.write();
        let inner = &mut *inner;
        inner.wal.compact(&inner.data)?;
        Ok(())
    }
}

/// Delivers batches straight into an in-process central.
pub struct LocalTransport {
    pub central: Arc<Central>,
    pub token: String,
}

impl crate::federation::SyncTransport for LocalTransport {
    fn push(&self, batch: &SyncBatch) -> Result<Ack, crate::federation::TransportError> {
        use crate::federation::TransportError;
        let node = self.central.authenticate_node(&self.token).ok_or(TransportError::AuthRejected)?;
        match self.central.apply_batch(node, batch) {
            Ok(ack) => Ok(ack),
            Err(CentralError::Unauthenticated) => Err(TransportError::AuthRejected),
            Err(e) => Err(TransportError::Unavailable(e.to_string())),
        }
    }

    fn reset(&self, node_id: Uuid) -> Result<(), crate::federation::TransportError> {
        use crate::federation::TransportError;
        let node = self.central.authenticate_node(&self.token).ok_or(TransportError::AuthRejected)?;
        if node != node_id {
            return Err(TransportError::AuthRejected);
        }
        self.central.reset_node(node).map_err(|e| TransportError::Unavailable(e.to_string()))
    }
}
