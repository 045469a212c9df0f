//! The node: term collections, their entries and the editorial workflow,
//! principals and discussion threads, plus the change journal that feeds
//! federation.
//!
//! All state sits behind one reader/writer lock. A mutation builds a list of
//! [`Mutation`]s, logs them as a single WAL record, then applies them to the
//! in-memory state and the search index; the journal append travels in the
//! same record, so an edit and its change record are never separated.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::access::{self, Action, Actor, Comment, Group, HashingParams, Role, Session, User};
use crate::clock::{Clock, SystemClock};
use crate::csv::{parse_csv, serialize_csv};
use crate::error::NodeError;
use crate::federation::{Projection, PublishedCollection};
use crate::journal::{ChangeOp, ChangeRecord, Entity};
use crate::model::{CollectionMeta, LangCode, TermEntry, Timestamp, Visibility, WorkflowStatus};
use crate::persist::Wal;
use crate::search::{
    normalize_text, Access, DocInfo, DocKey, Facets, SearchFilters, SearchIndex, SearchQuery,
    SearchResults,
};
use crate::tbx::{parse_tbx, serialize_entry_fragment, serialize_tbx, TbxError};
use crate::validate::{has_errors, validate_entry, IssueCode, ValidationIssue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeFormat {
    Tbx,
    Csv,
}

impl FromStr for ExchangeFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tbx" => Ok(ExchangeFormat::Tbx),
            "csv" => Ok(ExchangeFormat::Csv),
            other => Err(format!("unknown format {other:?} (expected tbx or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collection {
    pub meta: CollectionMeta,
    pub visibility: Visibility,
    pub owner_group: Uuid,
    pub created_at: Timestamp,
    pub modified_at: Timestamp,
    /// Bumped on every visibility change; orders collection-level records.
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tombstone {
    pub entry_id: Uuid,
    pub collection_id: Uuid,
    pub deleted_at: Timestamp,
    pub revision: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportReport {
    pub created: usize,
    pub updated: usize,
    pub skipped: usize,
    pub issues: Vec<ValidationIssue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredEntry {
    collection_id: Uuid,
    entry: TermEntry,
}

/// Durable node state. Everything here is rebuilt from snapshot + WAL.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct NodeData {
    node_id: Uuid,
    groups: BTreeMap<Uuid, Group>,
    users: BTreeMap<Uuid, User>,
    collections: BTreeMap<Uuid, Collection>,
    entries: BTreeMap<Uuid, StoredEntry>,
    tombstones: BTreeMap<Uuid, Tombstone>,
    comments: BTreeMap<Uuid, Vec<Comment>>,
    journal: Vec<ChangeRecord>,
    journal_head: u64,
    sync_cursor: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Mutation {
    Init { node_id: Uuid },
    GroupPut { group: Group },
    UserPut { user: User },
    CollectionPut { collection: Collection },
    EntryPut { collection_id: Uuid, entry: TermEntry },
    EntryRemoved { entry_id: Uuid },
    TombstonePut { tombstone: Tombstone },
    TombstoneCleared { entry_id: Uuid },
    CommentAdded { comment: Comment },
    Journal { record: ChangeRecord },
    JournalReplaced { records: Vec<ChangeRecord> },
    SyncCursor { seq: u64 },
}

#[derive(Debug, Clone)]
pub struct NodeOptions {
    pub session_ttl_hours: u32,
    pub hashing: HashingParams,
    pub compact_every: usize,
}

impl Default for NodeOptions {
    fn default() -> Self {
        NodeOptions { session_ttl_hours: 12, hashing: HashingParams::default(), compact_every: 2_000 }
    }
}

/// Resource named in an authorization check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resource {
    Collection(Uuid),
    Entry(Uuid),
    Group(Uuid),
}

struct Inner {
    data: NodeData,
    index: SearchIndex,
    by_collection: BTreeMap<Uuid, BTreeSet<Uuid>>,
    usernames: HashMap<String, Uuid>,
    wal: Wal<NodeData, Vec<Mutation>>,
}

type JournalListener = Arc<dyn Fn() + Send + Sync>;

pub struct Node {
    inner: RwLock<Inner>,
    sessions: Mutex<HashMap<String, Session>>,
    clock: Arc<dyn Clock>,
    options: NodeOptions,
    dummy_hash: String,
    listener: RwLock<Option<JournalListener>>,
}

impl Inner {
    fn new(wal: Wal<NodeData, Vec<Mutation>>) -> Self {
        Inner {
            data: NodeData::default(),
            index: SearchIndex::new(),
            by_collection: BTreeMap::new(),
            usernames: HashMap::new(),
            wal,
        }
    }

    fn doc_key(&self, entry_id: Uuid) -> DocKey {
        DocKey { node_id: self.data.node_id, entry_id }
    }

    fn rebuild_derived(&mut self) {
        self.index = SearchIndex::new();
        self.by_collection.clear();
        self.usernames = self.data.users.values().map(|u| (u.username.clone(), u.id)).collect();
        let node_id = self.data.node_id;
        for (id, stored) in &self.data.entries {
            self.by_collection.entry(stored.collection_id).or_default().insert(*id);
            self.index.index_entry(DocKey { node_id, entry_id: *id }, stored.collection_id, &stored.entry);
        }
    }

    fn apply(&mut self, m: Mutation) {
        match m {
            Mutation::Init { node_id } => self.data.node_id = node_id,
            Mutation::GroupPut { group } => {
                self.data.groups.insert(group.id, group);
            }
            Mutation::UserPut { user } => {
                self.usernames.insert(user.username.clone(), user.id);
                self.data.users.insert(user.id, user);
            }
            Mutation::CollectionPut { collection } => {
                self.data.collections.insert(collection.meta.id, collection);
            }
            Mutation::EntryPut { collection_id, entry } => {
                let key = self.doc_key(entry.id);
                self.index.index_entry(key, collection_id, &entry);
                self.by_collection.entry(collection_id).or_default().insert(entry.id);
                self.data.entries.insert(entry.id, StoredEntry { collection_id, entry });
            }
            Mutation::EntryRemoved { entry_id } => {
                let key = self.doc_key(entry_id);
                self.index.remove_entry(&key);
                if let Some(stored) = self.data.entries.remove(&entry_id) {
                    if let Some(set) = self.by_collection.get_mut(&stored.collection_id) {
                        set.remove(&entry_id);
                    }
                }
            }
            Mutation::TombstonePut { tombstone } => {
                self.data.tombstones.insert(tombstone.entry_id, tombstone);
            }
            Mutation::TombstoneCleared { entry_id } => {
                self.data.tombstones.remove(&entry_id);
            }
            Mutation::CommentAdded { comment } => {
                let thread = self.data.comments.entry(comment.entry_id).or_default();
                thread.push(comment);
                thread.sort_by_key(|c| (c.created_at, c.id));
            }
            Mutation::Journal { record } => {
                self.data.journal_head = record.seq;
                self.data.journal.push(record);
            }
            Mutation::JournalReplaced { records } => {
                self.data.journal_head = records.last().map_or(0, |r| r.seq);
                self.data.journal = records;
            }
            Mutation::SyncCursor { seq } => self.data.sync_cursor = seq,
        }
    }

    fn commit(&mut self, mutations: Vec<Mutation>) -> Result<bool, NodeError> {
        if mutations.is_empty() {
            return Ok(false);
        }
        self.wal.append(&mutations)?;
        let journaled = mutations
            .iter()
            .any(|m| matches!(m, Mutation::Journal { .. } | Mutation::JournalReplaced { .. }));
        for m in mutations {
            self.apply(m);
        }
        if self.wal.wants_compaction() {
            self.wal.compact(&self.data)?;
        }
        Ok(journaled)
    }

    fn membership(&self, actor: &Actor, group: Uuid) -> Option<Role> {
        let id = actor.user_id()?;
        self.data.users.get(&id)?.role_in(group)
    }

    fn collection(&self, id: Uuid) -> Result<&Collection, NodeError> {
        self.data.collections.get(&id).ok_or(NodeError::UnknownCollection)
    }

    /// Applies the floor rule. Non-members who cannot even see the
    /// collection get `hidden`, the same error a missing resource yields.
    fn check(
        &self,
        actor: &Actor,
        collection: &Collection,
        action: Action,
        hidden: NodeError,
    ) -> Result<(), NodeError> {
        if *actor == Actor::System {
            return Ok(());
        }
        let membership = self.membership(actor, collection.owner_group);
        let authenticated = actor.user_id().is_some();
        if access::permits(membership, collection.visibility, authenticated, action) {
            return Ok(());
        }
        let can_see = membership.is_some() || access::permits(None, collection.visibility, authenticated, Action::Read);
        if !can_see {
            return Err(hidden);
        }
        if !authenticated {
            return Err(NodeError::Unauthenticated);
        }
        Err(NodeError::Unauthorized)
    }

    fn sees_drafts(&self, actor: &Actor, collection: &Collection) -> bool {
        *actor == Actor::System || self.membership(actor, collection.owner_group).is_some()
    }

    fn access_for(&self, actor: &Actor, collection_id: Uuid) -> Option<Access> {
        let collection = self.data.collections.get(&collection_id)?;
        self.check(actor, collection, Action::Search, NodeError::UnknownCollection).ok()?;
        Some(Access {
            collection_name: collection.meta.name.clone(),
            drafts: self.sees_drafts(actor, collection),
        })
    }

    fn entry_in(&self, collection_id: Uuid, entry_id: Uuid) -> Result<&TermEntry, NodeError> {
        match self.data.entries.get(&entry_id) {
            Some(stored) if stored.collection_id == collection_id => Ok(&stored.entry),
            _ => Err(NodeError::UnknownEntry),
        }
    }

    fn collection_entries(&self, collection_id: Uuid) -> impl Iterator<Item = &TermEntry> {
        self.by_collection
            .get(&collection_id)
            .into_iter()
            .flatten()
            .filter_map(|id| self.data.entries.get(id).map(|s| &s.entry))
    }
}

/// Accumulates the mutations of one commit and hands out journal sequence
/// numbers.
struct Txn {
    mutations: Vec<Mutation>,
    next_seq: u64,
    now: Timestamp,
}

impl Txn {
    fn new(inner: &Inner, now: Timestamp) -> Self {
        Txn { mutations: Vec::new(), next_seq: inner.data.journal_head + 1, now }
    }

    fn push(&mut self, m: Mutation) {
        self.mutations.push(m);
    }

    fn journal(
        &mut self,
        entity: Entity,
        op: ChangeOp,
        collection_id: Uuid,
        entry_id: Option<Uuid>,
        revision: u64,
        payload_tbx: Option<String>,
    ) {
        let record = ChangeRecord {
            seq: self.next_seq,
            entity,
            op,
            collection_id,
            entry_id,
            revision,
            at: self.now,
            payload_tbx,
        };
        self.next_seq += 1;
        self.mutations.push(Mutation::Journal { record });
    }

    fn journal_entry_upsert(&mut self, collection_id: Uuid, entry: &TermEntry) -> Result<(), NodeError> {
        let payload = serialize_entry_fragment(entry).map_err(invalid_entry)?;
        self.journal(Entity::Entry, ChangeOp::Upsert, collection_id, Some(entry.id), entry.revision, Some(payload));
        Ok(())
    }

    fn journal_meta_upsert(&mut self, collection: &Collection) -> Result<(), NodeError> {
        let doc = serialize_tbx(&collection.meta, &[]).map_err(|e| NodeError::InvalidInput(e.to_string()))?;
        let payload = String::from_utf8(doc).expect("serializer emits UTF-8");
        self.journal(
            Entity::CollectionMeta,
            ChangeOp::Upsert,
            collection.meta.id,
            None,
            collection.revision,
            Some(payload),
        );
        Ok(())
    }
}

fn invalid_entry(e: TbxError) -> NodeError {
    match e {
        TbxError::InvariantViolation { path, message } => {
            NodeError::ValidationFailed(vec![ValidationIssue::error(IssueCode::InvalidValue, path, message)])
        }
        other => NodeError::InvalidInput(other.to_string()),
    }
}

/// Outcome of preparing one entry write.
enum Prepared {
    Created(u64),
    Updated(u64),
}

impl Node {
    pub fn in_memory(node_id: Uuid, options: NodeOptions) -> Self {
        Node::with_clock(node_id, options, Arc::new(SystemClock))
    }

    pub fn with_clock(node_id: Uuid, options: NodeOptions, clock: Arc<dyn Clock>) -> Self {
        let mut inner = Inner::new(Wal::memory());
        inner.apply(Mutation::Init { node_id });
        Node::assemble(inner, options, clock)
    }

    /// Opens (or creates) the durable store in `dir`. A fresh store takes
    /// `node_id`; an existing one must already carry it.
    pub fn open(dir: &Path, node_id: Uuid, options: NodeOptions) -> Result<Self, NodeError> {
        Node::open_with_clock(dir, node_id, options, Arc::new(SystemClock))
    }

    pub fn open_with_clock(
        dir: &Path,
        node_id: Uuid,
        options: NodeOptions,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, NodeError> {
        let (wal, recovered) = Wal::open(dir, "node")?;
        let wal = wal.with_compaction_interval(options.compact_every);
        let mut inner = Inner::new(wal);
        let fresh = recovered.snapshot.is_none() && recovered.events.is_empty();
        if let Some(snapshot) = recovered.snapshot {
            inner.data = snapshot;
        }
        for commit in recovered.events {
            for m in commit {
                inner.apply(m);
            }
        }
        inner.rebuild_derived();
        if fresh {
            inner.commit(vec![Mutation::Init { node_id }])?;
        } else if inner.data.node_id != node_id {
            return Err(NodeError::InvalidInput(format!(
                "data directory belongs to node {}, configured node id is {node_id}",
                inner.data.node_id
            )));
        }
        Ok(Node::assemble(inner, options, clock))
    }

    fn assemble(inner: Inner, options: NodeOptions, clock: Arc<dyn Clock>) -> Self {
        let dummy_hash = options.hashing.hash("not-a-credential");
        Node {
            inner: RwLock::new(inner),
            sessions: Mutex::new(HashMap::new()),
            clock,
            options,
            dummy_hash,
            listener: RwLock::new(None),
        }
    }

    pub fn node_id(&self) -> Uuid {
        self.inner.read().data.node_id
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    /// Registers a callback run after every commit that appends to the
    /// journal.
    pub fn set_journal_listener(&self, listener: impl Fn() + Send + Sync + 'static) {
        *self.listener.write() = Some(Arc::new(listener));
    }

    fn commit(&self, inner: &mut Inner, mutations: Vec<Mutation>) -> Result<(), NodeError> {
        if inner.commit(mutations)? {
            if let Some(listener) = self.listener.read().clone() {
                listener();
            }
        }
        Ok(())
    }

    // -- principals --------------------------------------------------------

    pub fn create_group(&self, name: &str, actor: &Actor) -> Result<Uuid, NodeError> {
        if *actor != Actor::System {
            return Err(NodeError::Unauthorized);
        }
        let name = name.trim();
        if name.is_empty() {
            return Err(NodeError::InvalidInput("group name is empty".into()));
        }
        let mut inner = self.inner.write();
        if let Some(existing) = inner.data.groups.values().find(|g| g.name == name) {
            return Ok(existing.id);
        }
        let group = Group { id: Uuid::new_v4(), name: name.to_string() };
        let id = group.id;
        self.commit(&mut inner, vec![Mutation::GroupPut { group }])?;
        Ok(id)
    }

    pub fn group_by_name(&self, name: &str) -> Option<Group> {
        self.inner.read().data.groups.values().find(|g| g.name == name).cloned()
    }

    pub fn add_user(&self, username: &str, credential: &str, actor: &Actor) -> Result<Uuid, NodeError> {
        if *actor != Actor::System {
            return Err(NodeError::Unauthorized);
        }
        let username = username.trim();
        if username.is_empty() || credential.is_empty() {
            return Err(NodeError::InvalidInput("username and credential are required".into()));
        }
        if self.inner.read().usernames.contains_key(username) {
            return Err(NodeError::DuplicateUsername);
        }
        let credential_hash = self.options.hashing.hash(credential);
        let mut inner = self.inner.write();
        if inner.usernames.contains_key(username) {
            return Err(NodeError::DuplicateUsername);
        }
        let user = User { id: Uuid::new_v4(), username: username.to_string(), credential_hash, memberships: Vec::new() };
        let id = user.id;
        self.commit(&mut inner, vec![Mutation::UserPut { user }])?;
        Ok(id)
    }

    pub fn user_by_name(&self, username: &str) -> Option<User> {
        let inner = self.inner.read();
        let id = inner.usernames.get(username)?;
        inner.data.users.get(id).cloned()
    }

    /// Grants `role` in `group` (or removes membership with `None`). Group
    /// admins and the local operator may do this.
    pub fn set_role(&self, user_id: Uuid, group_id: Uuid, role: Option<Role>, actor: &Actor) -> Result<(), NodeError> {
        let mut inner = self.inner.write();
        if !inner.data.groups.contains_key(&group_id) {
            return Err(NodeError::UnknownGroup);
        }
        if *actor != Actor::System {
            let member = inner.membership(actor, group_id);
            if !member.is_some_and(|r| r >= Action::ManageMembers.floor()) {
                return Err(NodeError::Unauthorized);
            }
        }
        let mut user = inner.data.users.get(&user_id).cloned().ok_or(NodeError::UnknownUser)?;
        user.memberships.retain(|(g, _)| *g != group_id);
        if let Some(role) = role {
            user.memberships.push((group_id, role));
            user.memberships.sort();
        }
        self.commit(&mut inner, vec![Mutation::UserPut { user }])
    }

    // -- sessions ----------------------------------------------------------

    /// Issues a session for a valid username/credential pair. Unknown users
    /// and wrong credentials fail identically, after the same hashing work.
    pub fn authenticate(&self, username: &str, credential: &str) -> Result<Session, NodeError> {
        let stored = self.user_by_name(username.trim());
        let hash = stored.as_ref().map_or(self.dummy_hash.as_str(), |u| u.credential_hash.as_str());
        let ok = access::verify_credential(hash, credential);
        let user = match (stored, ok) {
            (Some(user), true) => user,
            _ => return Err(NodeError::InvalidCredentials),
        };
        let ttl_millis = i64::from(self.options.session_ttl_hours) * 3_600_000;
        let session = Session {
            token: access::new_token(),
            user_id: user.id,
            expires_at: self.clock.now().plus_millis(ttl_millis),
        };
        let mut sessions = self.sessions.lock();
        let now = self.clock.now();
        sessions.retain(|_, s| s.expires_at > now);
        sessions.insert(session.token.clone(), session.clone());
        Ok(session)
    }

    /// Maps a bearer token to its actor.
    pub fn resolve_token(&self, token: &str) -> Result<Actor, NodeError> {
        let session = self.sessions.lock().get(token).cloned().ok_or(NodeError::Unauthenticated)?;
        if session.expires_at <= self.clock.now() {
            self.sessions.lock().remove(token);
            return Err(NodeError::Unauthenticated);
        }
        let inner = self.inner.read();
        let user = inner.data.users.get(&session.user_id).ok_or(NodeError::Unauthenticated)?;
        Ok(Actor::User { id: user.id, username: user.username.clone() })
    }

    /// Resolves `token` and checks the role floor for `action` on
    /// `resource`, returning the acting user.
    pub fn authorize(&self, token: &str, action: Action, resource: Resource) -> Result<Uuid, NodeError> {
        let actor = self.resolve_token(token)?;
        let user_id = actor.user_id().ok_or(NodeError::Unauthenticated)?;
        let inner = self.inner.read();
        match resource {
            Resource::Collection(id) => {
                let collection = inner.collection(id)?;
                inner.check(&actor, collection, action, NodeError::UnknownCollection)?;
            }
            Resource::Entry(id) => {
                let stored = inner.data.entries.get(&id).ok_or(NodeError::UnknownEntry)?;
                let collection = inner.collection(stored.collection_id)?;
                inner.check(&actor, collection, action, NodeError::UnknownEntry)?;
                if !stored.entry.is_approved() && !inner.sees_drafts(&actor, collection) {
                    return Err(NodeError::UnknownEntry);
                }
            }
            Resource::Group(id) => {
                if !inner.data.groups.contains_key(&id) {
                    return Err(NodeError::UnknownGroup);
                }
                if !inner.membership(&actor, id).is_some_and(|r| r >= action.floor()) {
                    return Err(NodeError::Unauthorized);
                }
            }
        }
        Ok(user_id)
    }

    // -- collections -------------------------------------------------------

    pub fn create_collection(&self, mut meta: CollectionMeta, owner_group: Uuid, actor: &Actor) -> Result<Uuid, NodeError> {
        meta.normalize();
        meta.name = meta.name.trim().to_string();
        if meta.name.is_empty() {
            return Err(NodeError::InvalidInput("collection name is empty".into()));
        }
        if let Some(bad) = meta.declared_languages.iter().find(|l| !l.is_valid()) {
            return Err(NodeError::InvalidInput(format!("{:?} is not a language code", bad.as_str())));
        }
        let mut inner = self.inner.write();
        if !inner.data.groups.contains_key(&owner_group) {
            return Err(NodeError::UnknownGroup);
        }
        if *actor != Actor::System {
            if actor.user_id().is_none() {
                return Err(NodeError::Unauthenticated);
            }
            let role = inner.membership(actor, owner_group);
            if !role.is_some_and(|r| r >= Action::CreateCollection.floor()) {
                return Err(NodeError::Unauthorized);
            }
        }
        let key = normalize_text(&meta.name);
        let taken = inner
            .data
            .collections
            .values()
            .any(|c| c.owner_group == owner_group && normalize_text(&c.meta.name) == key);
        if taken {
            return Err(NodeError::DuplicateName);
        }
        if meta.id.is_nil() {
            meta.id = Uuid::new_v4();
        } else if inner.data.collections.contains_key(&meta.id) {
            return Err(NodeError::IdConflict(format!("collection {} exists", meta.id)));
        }
        let now = self.clock.now();
        let id = meta.id;
        let collection = Collection {
            meta,
            visibility: Visibility::Private,
            owner_group,
            created_at: now,
            modified_at: now,
            revision: 1,
        };
        self.commit(&mut inner, vec![Mutation::CollectionPut { collection }])?;
        Ok(id)
    }

    pub fn collection(&self, id: Uuid, actor: &Actor) -> Result<Collection, NodeError> {
        let inner = self.inner.read();
        let collection = inner.collection(id)?;
        inner.check(actor, collection, Action::Read, NodeError::UnknownCollection)?;
        Ok(collection.clone())
    }

    /// Collections the actor can read, ordered by name then id.
    pub fn list_collections(&self, actor: &Actor) -> Vec<Collection> {
        let inner = self.inner.read();
        let mut out: Vec<Collection> = inner
            .data
            .collections
            .values()
            .filter(|c| inner.check(actor, c, Action::Read, NodeError::UnknownCollection).is_ok())
            .cloned()
            .collect();
        out.sort_by(|a, b| (&a.meta.name, a.meta.id).cmp(&(&b.meta.name, b.meta.id)));
        out
    }

    pub fn set_visibility(&self, collection_id: Uuid, visibility: Visibility, actor: &Actor) -> Result<(), NodeError> {
        let mut inner = self.inner.write();
        let collection = inner.collection(collection_id)?;
        inner.check(actor, collection, Action::SetVisibility, NodeError::UnknownCollection)?;
        if collection.visibility == visibility {
            return Ok(());
        }
        let was_public = collection.visibility == Visibility::Public;
        let mut updated = collection.clone();
        let now = self.clock.now();
        updated.visibility = visibility;
        updated.revision += 1;
        updated.modified_at = now;

        let mut txn = Txn::new(&inner, now);
        if visibility == Visibility::Public {
            txn.journal_meta_upsert(&updated)?;
            for entry in inner.collection_entries(collection_id).filter(|e| e.is_approved()) {
                txn.journal_entry_upsert(collection_id, entry)?;
            }
        } else if was_public {
            txn.journal(Entity::CollectionMeta, ChangeOp::Delete, collection_id, None, updated.revision, None);
        }
        txn.push(Mutation::CollectionPut { collection: updated });
        self.commit(&mut inner, txn.mutations)
    }

    // -- entries -----------------------------------------------------------

    pub fn get_entry(&self, collection_id: Uuid, entry_id: Uuid, actor: &Actor) -> Result<TermEntry, NodeError> {
        let inner = self.inner.read();
        let collection = inner.collection(collection_id)?;
        inner.check(actor, collection, Action::Read, NodeError::UnknownCollection)?;
        let entry = inner.entry_in(collection_id, entry_id)?;
        if !entry.is_approved() && !inner.sees_drafts(actor, collection) {
            return Err(NodeError::UnknownEntry);
        }
        Ok(entry.clone())
    }

    /// Creates or edits an entry. `entry.revision` is the revision the
    /// caller edited (0 for a new entry); a mismatch is `StaleRevision`.
    /// The stored entry is always a draft.
    pub fn upsert_entry(&self, collection_id: Uuid, entry: TermEntry, actor: &Actor) -> Result<u64, NodeError> {
        let mut inner = self.inner.write();
        let collection = inner.collection(collection_id)?;
        inner.check(actor, collection, Action::EditEntry, NodeError::UnknownCollection)?;
        let mut txn = Txn::new(&inner, self.clock.now());
        let base = entry.revision;
        let outcome = prepare_upsert(&inner, &mut txn, collection_id, entry, Some(base), actor)?;
        self.commit(&mut inner, txn.mutations)?;
        Ok(match outcome {
            Prepared::Created(rev) | Prepared::Updated(rev) => rev,
        })
    }

    pub fn approve_entry(&self, collection_id: Uuid, entry_id: Uuid, actor: &Actor) -> Result<u64, NodeError> {
        let mut inner = self.inner.write();
        let collection = inner.collection(collection_id)?;
        inner.check(actor, collection, Action::Approve, NodeError::UnknownCollection)?;
        let public = collection.visibility == Visibility::Public;
        let mut entry = inner.entry_in(collection_id, entry_id)?.clone();
        if entry.is_approved() {
            return Err(NodeError::AlreadyApproved);
        }
        let now = self.clock.now();
        entry.workflow_status = WorkflowStatus::Approved;
        entry.revision += 1;
        entry.modified_at = now;
        entry.modified_by = actor.label().to_string();
        let revision = entry.revision;
        let mut txn = Txn::new(&inner, now);
        if public {
            txn.journal_entry_upsert(collection_id, &entry)?;
        }
        txn.push(Mutation::EntryPut { collection_id, entry });
        self.commit(&mut inner, txn.mutations)?;
        Ok(revision)
    }

    pub fn delete_entry(&self, collection_id: Uuid, entry_id: Uuid, actor: &Actor) -> Result<Tombstone, NodeError> {
        let mut inner = self.inner.write();
        let collection = inner.collection(collection_id)?;
        inner.check(actor, collection, Action::DeleteEntry, NodeError::UnknownCollection)?;
        let public = collection.visibility == Visibility::Public;
        let entry = inner.entry_in(collection_id, entry_id)?;
        let now = self.clock.now();
        let tombstone = Tombstone { entry_id, collection_id, deleted_at: now, revision: entry.revision + 1 };
        let mut txn = Txn::new(&inner, now);
        if public && entry.is_approved() {
            txn.journal(Entity::Entry, ChangeOp::Delete, collection_id, Some(entry_id), tombstone.revision, None);
        }
        txn.push(Mutation::EntryRemoved { entry_id });
        txn.push(Mutation::TombstonePut { tombstone: tombstone.clone() });
        self.commit(&mut inner, txn.mutations)?;
        Ok(tombstone)
    }

    pub fn tombstone(&self, entry_id: Uuid) -> Option<Tombstone> {
        self.inner.read().data.tombstones.get(&entry_id).cloned()
    }

    // -- import / export ---------------------------------------------------

    /// Upserts every parsed entry, matched by id. Entries with validation
    /// errors or ids owned by another collection are skipped and reported.
    /// A document that cannot be parsed changes nothing.
    pub fn import_collection(
        &self,
        collection_id: Uuid,
        format: ExchangeFormat,
        document: &[u8],
        actor: &Actor,
    ) -> Result<ImportReport, NodeError> {
        {
            let inner = self.inner.read();
            let collection = inner.collection(collection_id)?;
            inner.check(actor, collection, Action::Import, NodeError::UnknownCollection)?;
        }
        let (entries, parse_issues) = match format {
            ExchangeFormat::Tbx => parse_tbx(document)
                .map(|doc| (doc.entries, doc.issues))
                .map_err(|e| NodeError::ParseFailed(e.to_string()))?,
            ExchangeFormat::Csv => parse_csv(document).map_err(|e| NodeError::ParseFailed(e.to_string()))?,
        };

        let mut inner = self.inner.write();
        let collection = inner.collection(collection_id)?;
        inner.check(actor, collection, Action::Import, NodeError::UnknownCollection)?;
        let mut report = ImportReport { issues: parse_issues, ..ImportReport::default() };
        let mut txn = Txn::new(&inner, self.clock.now());
        let mut seen = BTreeSet::new();
        for mut entry in entries {
            entry.normalize();
            let path = format!("entry/{}", entry.id);
            if !seen.insert(entry.id) {
                report.skipped += 1;
                report.issues.push(ValidationIssue::error(IssueCode::IdConflict, path, "id repeated in the document"));
                continue;
            }
            if let Some(stored) = inner.data.entries.get(&entry.id) {
                if stored.collection_id != collection_id {
                    report.skipped += 1;
                    report.issues.push(ValidationIssue::error(
                        IssueCode::IdConflict,
                        path,
                        "id belongs to an entry of another collection",
                    ));
                    continue;
                }
            }
            let issues = validate_entry(&entry);
            let failed = has_errors(&issues);
            report.issues.extend(issues);
            if failed {
                report.skipped += 1;
                continue;
            }
            match prepare_upsert(&inner, &mut txn, collection_id, entry, None, actor) {
                Ok(Prepared::Created(_)) => report.created += 1,
                Ok(Prepared::Updated(_)) => report.updated += 1,
                Err(NodeError::ValidationFailed(issues)) => {
                    report.skipped += 1;
                    report.issues.extend(issues);
                }
                Err(other) => return Err(other),
            }
        }
        self.commit(&mut inner, txn.mutations)?;
        Ok(report)
    }

    /// Serializes a collection, entries ordered by id. Drafts are included
    /// only when asked for and the actor belongs to the owning group.
    pub fn export_collection(
        &self,
        collection_id: Uuid,
        format: ExchangeFormat,
        include_drafts: bool,
        actor: &Actor,
    ) -> Result<Vec<u8>, NodeError> {
        let inner = self.inner.read();
        let collection = inner.collection(collection_id)?;
        inner.check(actor, collection, Action::Export, NodeError::UnknownCollection)?;
        let drafts = include_drafts && inner.sees_drafts(actor, collection);
        let entries: Vec<TermEntry> = inner
            .collection_entries(collection_id)
            .filter(|e| e.is_approved() || drafts)
            .cloned()
            .collect();
        let out = match format {
            ExchangeFormat::Tbx => serialize_tbx(&collection.meta, &entries).map_err(|e| NodeError::InvalidInput(e.to_string())),
            ExchangeFormat::Csv => {
                let mut languages = collection.meta.declared_languages.clone();
                if languages.is_empty() {
                    let present: BTreeSet<LangCode> =
                        entries.iter().flat_map(|e| e.lang_sections.iter().map(|s| s.lang.clone())).collect();
                    languages = present.into_iter().collect();
                }
                if languages.is_empty() {
                    languages.push(LangCode::new("en"));
                }
                serialize_csv(&entries, &languages).map_err(|e| NodeError::InvalidInput(e.to_string()))
            }
        };
        out
    }

    // -- search ------------------------------------------------------------

    pub fn search(&self, query: &SearchQuery, actor: &Actor) -> Result<SearchResults, NodeError> {
        let inner = self.inner.read();
        let mut results = inner
            .index
            .search(query, |_: &DocKey, doc: &DocInfo| inner.access_for(actor, doc.collection_id))?;
        for hit in &mut results.hits {
            hit.node_id = None;
        }
        Ok(results)
    }

    pub fn facet_counts(&self, filters: &SearchFilters, actor: &Actor) -> Facets {
        let inner = self.inner.read();
        let mut facets = inner
            .index
            .facet_counts(filters, |_: &DocKey, doc: &DocInfo| inner.access_for(actor, doc.collection_id));
        for c in &mut facets.collections {
            c.node_id = None;
        }
        facets
    }

    // -- discussion --------------------------------------------------------

    fn discussion_check(inner: &Inner, entry_id: Uuid, actor: &Actor, action: Action) -> Result<(), NodeError> {
        let stored = inner.data.entries.get(&entry_id).ok_or(NodeError::UnknownEntry)?;
        let collection = inner.collection(stored.collection_id)?;
        inner.check(actor, collection, action, NodeError::UnknownEntry)?;
        if !stored.entry.is_approved() && !inner.sees_drafts(actor, collection) {
            return Err(NodeError::UnknownEntry);
        }
        Ok(())
    }

    pub fn post_comment(&self, entry_id: Uuid, body: &str, actor: &Actor) -> Result<Comment, NodeError> {
        let mut inner = self.inner.write();
        Node::discussion_check(&inner, entry_id, actor, Action::Comment)?;
        let body = crate::model::nfc(body.trim());
        if body.is_empty() {
            return Err(NodeError::EmptyBody);
        }
        let comment = Comment {
            id: Uuid::new_v4(),
            entry_id,
            author: actor.user_id().unwrap_or(Uuid::nil()),
            body,
            created_at: self.clock.now(),
        };
        self.commit(&mut inner, vec![Mutation::CommentAdded { comment: comment.clone() }])?;
        Ok(comment)
    }

    /// The entry's thread in `(created_at, id)` order.
    pub fn list_comments(&self, entry_id: Uuid, actor: &Actor) -> Result<Vec<Comment>, NodeError> {
        let inner = self.inner.read();
        Node::discussion_check(&inner, entry_id, actor, Action::Read)?;
        Ok(inner.data.comments.get(&entry_id).cloned().unwrap_or_default())
    }

    // -- federation hooks --------------------------------------------------

    /// Up to `max` journal records with `seq > since`, in order.
    pub fn journal_since(&self, since: u64, max: usize) -> Vec<ChangeRecord> {
        let inner = self.inner.read();
        let journal = &inner.data.journal;
        let start = journal.partition_point(|r| r.seq <= since);
        journal[start..].iter().take(max).cloned().collect()
    }

    pub fn journal(&self) -> Vec<ChangeRecord> {
        self.inner.read().data.journal.clone()
    }

    pub fn journal_head(&self) -> u64 {
        self.inner.read().data.journal_head
    }

    /// Highest sequence number the central has acknowledged.
    pub fn sync_cursor(&self) -> u64 {
        self.inner.read().data.sync_cursor
    }

    pub fn set_sync_cursor(&self, seq: u64) -> Result<(), NodeError> {
        let mut inner = self.inner.write();
        if inner.data.sync_cursor == seq {
            return Ok(());
        }
        self.commit(&mut inner, vec![Mutation::SyncCursor { seq }])
    }

    /// Replaces the journal with a fresh one (seq from 1) that republishes
    /// the current public projection, and rewinds the sync cursor to 0.
    pub fn rebuild_journal(&self) -> Result<usize, NodeError> {
        let mut inner = self.inner.write();
        let mut txn = Txn { mutations: Vec::new(), next_seq: 1, now: self.clock.now() };
        let public: Vec<Collection> = inner
            .data
            .collections
            .values()
            .filter(|c| c.visibility == Visibility::Public)
            .cloned()
            .collect();
        for collection in &public {
            txn.journal_meta_upsert(collection)?;
            for entry in inner.collection_entries(collection.meta.id).filter(|e| e.is_approved()) {
                txn.journal_entry_upsert(collection.meta.id, entry)?;
            }
        }
        let records: Vec<ChangeRecord> = txn
            .mutations
            .into_iter()
            .filter_map(|m| match m {
                Mutation::Journal { record } => Some(record),
                _ => None,
            })
            .collect();
        let count = records.len();
        self.commit(&mut inner, vec![Mutation::JournalReplaced { records }, Mutation::SyncCursor { seq: 0 }])?;
        Ok(count)
    }

    /// Approved entries of public collections: what the central should
    /// hold for this node.
    pub fn public_projection(&self) -> Projection {
        let inner = self.inner.read();
        let node_id = inner.data.node_id;
        let mut out = Projection::new();
        for collection in inner.data.collections.values().filter(|c| c.visibility == Visibility::Public) {
            let entries = inner
                .collection_entries(collection.meta.id)
                .filter(|e| e.is_approved())
                .map(|e| (e.id, e.clone()))
                .collect();
            out.insert((node_id, collection.meta.id), PublishedCollection { meta: collection.meta.clone(), entries });
        }
        out
    }

    /// Every stored entry with its collection, for test oracles and tools.
    pub fn all_entries(&self) -> Vec<(Uuid, TermEntry)> {
        let inner = self.inner.read();
        inner.data.entries.values().map(|s| (s.collection_id, s.entry.clone())).collect()
    }

    pub fn all_collections(&self) -> Vec<Collection> {
        self.inner.read().data.collections.values().cloned().collect()
    }

    /// Group role of a user, for tools and oracles.
    pub fn role_of(&self, user_id: Uuid, group_id: Uuid) -> Option<Role> {
        self.inner.read().data.users.get(&user_id)?.role_in(group_id)
    }

    /// Forces a snapshot and truncates the WAL.
    pub fn compact(&self) -> Result<(), NodeError> {
        let mut inner = self.inner.write();
        let inner = &mut *inner;
        inner.wal.compact(&inner.data)?;
        Ok(())
    }
}

/// Validates and stages one entry write. `base` is the caller's revision
/// for optimistic concurrency; `None` skips the check (imports).
fn prepare_upsert(
    inner: &Inner,
    txn: &mut Txn,
    collection_id: Uuid,
    mut entry: TermEntry,
    base: Option<u64>,
    actor: &Actor,
) -> Result<Prepared, NodeError> {
    entry.normalize();
    let issues = validate_entry(&entry);
    if has_errors(&issues) {
        return Err(NodeError::ValidationFailed(issues));
    }
    let public = inner.collection(collection_id)?.visibility == Visibility::Public;
    let existing = inner.data.entries.get(&entry.id);
    if let Some(stored) = existing {
        if stored.collection_id != collection_id {
            return Err(NodeError::IdConflict(format!("entry {} belongs to another collection", entry.id)));
        }
    }
    let current = existing.map_or(0, |s| s.entry.revision);
    if let Some(base) = base {
        if base != current {
            return Err(NodeError::StaleRevision { current });
        }
    }
    // A re-created id continues after its tombstone so that later
    // revisions still win against the delete everywhere it propagated.
    let tombstone = inner.data.tombstones.get(&entry.id);
    let floor = match (existing, tombstone) {
        (Some(_), _) => current,
        (None, Some(t)) => t.revision,
        (None, None) => 0,
    };
    let was_published = public && existing.is_some_and(|s| s.entry.is_approved());

    entry.revision = floor + 1;
    entry.workflow_status = WorkflowStatus::Draft;
    entry.modified_at = txn.now;
    entry.modified_by = actor.label().to_string();
    serialize_entry_fragment(&entry).map_err(invalid_entry)?;

    if was_published {
        txn.journal(Entity::Entry, ChangeOp::Delete, collection_id, Some(entry.id), entry.revision, None);
    }
    if tombstone.is_some() {
        txn.push(Mutation::TombstoneCleared { entry_id: entry.id });
    }
    let revision = entry.revision;
    txn.push(Mutation::EntryPut { collection_id, entry });
    Ok(if existing.is_some() { Prepared::Updated(revision) } else { Prepared::Created(revision) })
}
