//! Per-node change journal over published data.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::model::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entity {
    CollectionMeta,
    Entry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeOp {
    Upsert,
    Delete,
}

/// One journaled change. Field order is the canonical wire order.
///
/// `payload_tbx` holds a `<conceptEntry>` fragment for entry upserts and a
/// header-only TBX document for collection upserts; deletes carry none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub seq: u64,
    pub entity: Entity,
    pub op: ChangeOp,
    pub collection_id: Uuid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_id: Option<Uuid>,
    pub revision: u64,
    pub at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_tbx: Option<String>,
}

impl ChangeRecord {
    /// Record-level invariants: entry records name an entry, and a payload
    /// is present exactly for upserts.
    pub fn is_well_formed(&self) -> bool {
        let entry_ok = match self.entity {
            Entity::Entry => self.entry_id.is_some(),
            Entity::CollectionMeta => self.entry_id.is_none(),
        };
        let payload_ok = (self.op == ChangeOp::Upsert) == self.payload_tbx.is_some();
        self.seq > 0 && entry_ok && payload_ok
    }
}
