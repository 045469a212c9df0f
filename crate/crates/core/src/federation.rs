//! Node side of push synchronisation: batching the journal, the wire
//! envelope, and a driver that pushes until the central has caught up.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::error::NodeError;
use crate::journal::ChangeRecord;
use crate::model::{CollectionMeta, TermEntry};
use crate::store::Node;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_BATCH_SIZE: usize = 200;

/// A published collection: its metadata and approved entries by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedCollection {
    pub meta: CollectionMeta,
    pub entries: BTreeMap<Uuid, TermEntry>,
}

/// Published data keyed by `(node_id, collection_id)`.
pub type Projection = BTreeMap<(Uuid, Uuid), PublishedCollection>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncBatch {
    pub protocol_version: u32,
    pub node_id: Uuid,
    pub first_seq: u64,
    pub last_seq: u64,
    pub checksum: String,
    pub changes: Vec<ChangeRecord>,
}

/// Canonical bytes of a change list: compact JSON, fields in declaration
/// order, absent optionals omitted.
pub fn canonical_changes(changes: &[ChangeRecord]) -> Vec<u8> {
    serde_json::to_vec(changes).expect("change records always serialize")
}

/// Lowercase hex SHA-256 of [`canonical_changes`].
pub fn checksum(changes: &[ChangeRecord]) -> String {
    hex::encode(Sha256::digest(canonical_changes(changes)))
}

impl SyncBatch {
    pub fn new(node_id: Uuid, changes: Vec<ChangeRecord>) -> Option<Self> {
        let first_seq = changes.first()?.seq;
        let last_seq = changes.last()?.seq;
        Some(SyncBatch {
            protocol_version: PROTOCOL_VERSION,
            node_id,
            first_seq,
            last_seq,
            checksum: checksum(&changes),
            changes,
        })
    }

    pub fn checksum_matches(&self) -> bool {
        checksum(&self.changes) == self.checksum
    }

    /// The envelope agrees with its contents: non-empty, contiguous seqs
    /// from `first_seq` to `last_seq`, every record well formed.
    pub fn is_consistent(&self) -> bool {
        let (Some(first), Some(last)) = (self.changes.first(), self.changes.last()) else {
            return false;
        };
        first.seq == self.first_seq
            && last.seq == self.last_seq
            && self.changes.windows(2).all(|w| w[1].seq == w[0].seq + 1)
            && self.changes.iter().all(ChangeRecord::is_well_formed)
    }
}

/// The next `max_changes` journal records after `since_seq`, or `None` when
/// there are none.
pub fn build_sync_batch(node: &Node, since_seq: u64, max_changes: usize) -> Option<SyncBatch> {
    SyncBatch::new(node.node_id(), node.journal_since(since_seq, max_changes.max(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Ok,
    OutOfOrder,
    ChecksumMismatch,
    VersionUnsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub node_id: Uuid,
    pub last_applied_seq: u64,
    pub status: AckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// The central could not be reached or answered garbage; worth retrying.
    Unavailable(String),
    /// The central refused the node credentials.
    AuthRejected,
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportError::Unavailable(m) => write!(f, "central unavailable: {m}"),
            TransportError::AuthRejected => f.write_str("central rejected the node credentials"),
        }
    }
}

impl std::error::Error for TransportError {}

/// Carries batches to a central aggregator.
pub trait SyncTransport {
    fn push(&self, batch: &SyncBatch) -> Result<Ack, TransportError>;

    /// Asks the central to forget this node's data and applied sequence.
    fn reset(&self, node_id: Uuid) -> Result<(), TransportError>;
}

impl<T: SyncTransport + ?Sized> SyncTransport for &T {
    fn push(&self, batch: &SyncBatch) -> Result<Ack, TransportError> {
        (**self).push(batch)
    }

    fn reset(&self, node_id: Uuid) -> Result<(), TransportError> {
        (**self).reset(node_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            initial_backoff: Duration::from_millis(250),
            max_backoff: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, initial_backoff: Duration::ZERO, max_backoff: Duration::ZERO }
    }

    /// Delay before attempt `n + 1`, doubling from the initial backoff.
    pub fn backoff(&self, n: u32) -> Duration {
        let factor = 1u32.checked_shl(n.saturating_sub(1)).unwrap_or(u32::MAX);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

/// Pushes one batch, retrying transport failures with exponential backoff.
/// The Ack is returned as the central sent it.
pub fn push_batch(
    transport: &dyn SyncTransport,
    batch: &SyncBatch,
    policy: &RetryPolicy,
) -> Result<Ack, TransportError> {
    let mut attempt = 1;
    loop {
        match transport.push(batch) {
            Ok(ack) => return Ok(ack),
            Err(TransportError::AuthRejected) => return Err(TransportError::AuthRejected),
            Err(e) if attempt >= policy.max_attempts.max(1) => return Err(e),
            Err(_) => {
                std::thread::sleep(policy.backoff(attempt));
                attempt += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyncError {
    Transport(TransportError),
    Rejected { status: AckStatus, detail: Option<String> },
    Node(NodeError),
    /// The central keeps answering without progress.
    Stalled { cursor: u64 },
}

impl fmt::Display for SyncError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyncError::Transport(e) => e.fmt(f),
            SyncError::Rejected { status, detail } => {
                write!(f, "central rejected batch ({status:?})")?;
                if let Some(d) = detail {
                    write!(f, ": {d}")?;
                }
                Ok(())
            }
            SyncError::Node(e) => write!(f, "node error: {e}"),
            SyncError::Stalled { cursor } => write!(f, "sync made no progress past seq {cursor}"),
        }
    }
}

impl std::error::Error for SyncError {}

impl From<TransportError> for SyncError {
    fn from(e: TransportError) -> Self {
        SyncError::Transport(e)
    }
}

impl From<NodeError> for SyncError {
    fn from(e: NodeError) -> Self {
        SyncError::Node(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncOptions {
    pub batch_size: usize,
    pub retry: RetryPolicy,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions { batch_size: DEFAULT_BATCH_SIZE, retry: RetryPolicy::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SyncReport {
    pub batches: usize,
    pub records: usize,
    pub cursor: u64,
}

/// Pushes batches from the persisted cursor until the central acknowledges
/// the journal head. An `out_of_order` Ack rewinds the cursor to what the
/// central has applied; a checksum mismatch is resent a few times.
pub fn sync_until_quiescent(
    node: &Node,
    transport: &dyn SyncTransport,
    options: &SyncOptions,
) -> Result<SyncReport, SyncError> {
    let mut report = SyncReport { cursor: node.sync_cursor(), ..SyncReport::default() };
    let mut fruitless = 0u32;
    while let Some(batch) = build_sync_batch(node, report.cursor, options.batch_size) {
        let ack = push_batch(transport, &batch, &options.retry)?;
        report.batches += 1;
        match ack.status {
            AckStatus::Ok => {
                report.records += batch.changes.len();
                report.cursor = report.cursor.max(ack.last_applied_seq.min(batch.last_seq));
                fruitless = 0;
            }
            AckStatus::OutOfOrder if ack.last_applied_seq < report.cursor => {
                report.cursor = ack.last_applied_seq;
                fruitless += 1;
            }
            AckStatus::ChecksumMismatch | AckStatus::OutOfOrder => fruitless += 1,
            AckStatus::VersionUnsupported => {
                return Err(SyncError::Rejected { status: ack.status, detail: ack.detail });
            }
        }
        node.set_sync_cursor(report.cursor)?;
        if fruitless > options.retry.max_attempts.max(1) {
            return Err(SyncError::Stalled { cursor: report.cursor });
        }
    }
    Ok(report)
}

/// Has the central forget this node, rebuilds the journal from the current
/// public projection and pushes it all.
pub fn full_resync(
    node: &Node,
    transport: &dyn SyncTransport,
    options: &SyncOptions,
) -> Result<SyncReport, SyncError> {
    transport.reset(node.node_id())?;
    node.rebuild_journal()?;
    sync_until_quiescent(node, transport, options)
}
