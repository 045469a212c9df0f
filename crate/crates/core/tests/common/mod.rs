//! Seeded generators and harness pieces shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use etb_core::access::{Actor, HashingParams, Role};
use etb_core::central::{Central, LocalTransport};
use etb_core::model::{
    CollectionMeta, Currentness, GrammaticalGender, GrammaticalNumber, LangCode, LangSection, MediaKind, MediaRef,
    OpaqueCategory, PartOfSpeech, Register, TermEntry, TermRecord, TermType, Timestamp, WorkflowStatus,
};
use etb_core::store::{Node, NodeOptions};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use unicode_normalization::UnicodeNormalization;
use uuid::Uuid;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uuid(rng: &mut TestRng) -> Uuid {
    uuid::Builder::from_random_bytes(rng.gen()).into_uuid()
}

pub const LANGS: &[&str] = &["en", "lv", "de", "fr", "lt", "et", "pt-br"];

const SYLLABLES: &[&str] = &[
    "ka", "ro", "te", "mi", "sa", "lu", "ne", "po", "vi", "da", "ār", "čo", "ģe", "ķi", "ļa", "ņu", "šē", "žī",
    "ūs", "ö", "ü", "é", "Ka", "Ro", "Ā", "Š", "É", "Ü", "str", "qu", "x",
];

/// Word built from a small syllable set, including Latvian and other
/// diacritics in both cases.
pub fn word(rng: &mut TestRng) -> String {
    let n = rng.gen_range(1..=4);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

pub fn phrase(rng: &mut TestRng, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

const PUNCT: &[&str] = &[" & ", " < ", " > ", "\"", "'", "|", "\\", ", ", ";", "\n", "\t", "  ", "\r\n", " → ", " 漢字 "];

/// Free text with markup-significant characters, separators and line breaks.
pub fn prose(rng: &mut TestRng) -> String {
    let n = rng.gen_range(1..=8);
    let mut s = word(rng);
    for _ in 1..n {
        if rng.gen_bool(0.3) {
            s.push_str(PUNCT.choose(rng).unwrap());
        } else {
            s.push(' ');
        }
        s.push_str(&word(rng));
    }
    s
}

fn maybe<T>(rng: &mut TestRng, p: f64, f: impl FnOnce(&mut TestRng) -> T) -> Option<T> {
    if rng.gen_bool(p) {
        Some(f(rng))
    } else {
        None
    }
}

fn pick<T: Copy>(rng: &mut TestRng, all: &[T]) -> T {
    *all.choose(rng).unwrap()
}

fn opaque(rng: &mut TestRng) -> OpaqueCategory {
    let (element, category) = *[
        ("descrip", Some("note")),
        ("admin", Some("responsibility")),
        ("note", None),
        ("ref", Some("crossReference")),
    ]
    .choose(rng)
    .unwrap();
    OpaqueCategory { element: element.into(), category: category.map(str::to_string), value: phrase(rng, 3) }
}

fn extras(rng: &mut TestRng) -> Vec<OpaqueCategory> {
    let n = if rng.gen_bool(0.15) { rng.gen_range(1..=2) } else { 0 };
    (0..n).map(|_| opaque(rng)).collect()
}

pub fn term_record(rng: &mut TestRng) -> TermRecord {
    let mut t = TermRecord::new(phrase(rng, 3));
    t.term_type = pick(rng, TermType::ALL);
    t.part_of_speech = maybe(rng, 0.6, |r| pick(r, PartOfSpeech::ALL));
    t.grammatical_gender = maybe(rng, 0.3, |r| pick(r, GrammaticalGender::ALL));
    t.grammatical_number = maybe(rng, 0.3, |r| pick(r, GrammaticalNumber::ALL));
    t.register = maybe(rng, 0.3, |r| pick(r, Register::ALL));
    t.currentness = maybe(rng, 0.3, |r| pick(r, Currentness::ALL));
    t.usage_example = maybe(rng, 0.3, prose);
    t.source = maybe(rng, 0.3, |r| phrase(r, 4));
    t.extra = extras(rng);
    t
}

/// A valid entry exercising every field, over languages drawn from `langs`.
pub fn full_entry(rng: &mut TestRng, langs: &[&str]) -> TermEntry {
    let count = rng.gen_range(1..=langs.len().min(3));
    let chosen: Vec<&str> = langs.choose_multiple(rng, count).copied().collect();
    let sections = chosen
        .into_iter()
        .map(|lang| {
            let terms = (0..rng.gen_range(1..=3)).map(|_| term_record(rng)).collect();
            let mut s = LangSection::new(lang, terms);
            s.definition = maybe(rng, 0.5, prose);
            s.extra = extras(rng);
            s
        })
        .collect();
    let mut e = TermEntry::new(sections);
    e.id = uuid(rng);
    e.subject_fields = (0..rng.gen_range(0..=3)).map(|_| phrase(rng, 2)).collect();
    e.definition = maybe(rng, 0.6, prose);
    e.media = (0..rng.gen_range(0..=2))
        .map(|i| MediaRef {
            url: format!("https://media.example.org/{}/{i}.bin?q={}", word(rng).to_lowercase(), rng.gen::<u16>())
                .nfc()
                .collect(),
            kind: pick(rng, MediaKind::ALL),
            caption: maybe(rng, 0.5, |r| phrase(r, 4)),
        })
        .collect();
    e.workflow_status = pick(rng, WorkflowStatus::ALL);
    e.revision = rng.gen_range(0..1_000);
    e.modified_at = Timestamp::from_millis(rng.gen_range(0..4_102_444_800_000));
    e.modified_by = word(rng);
    e.extra = extras(rng);
    e.normalize();
    e
}

/// A small valid entry for store-level workloads.
pub fn simple_entry(rng: &mut TestRng, langs: &[&str]) -> TermEntry {
    let count = rng.gen_range(1..=langs.len().min(2));
    let chosen: Vec<&str> = langs.choose_multiple(rng, count).copied().collect();
    let sections = chosen
        .into_iter()
        .map(|lang| LangSection::new(lang, (0..rng.gen_range(1..=2)).map(|_| TermRecord::new(phrase(rng, 2))).collect()))
        .collect();
    let mut e = TermEntry::new(sections);
    e.id = uuid(rng);
    e.subject_fields = (0..rng.gen_range(0..=2)).map(|_| pick(rng, DOMAINS).to_string()).collect();
    e.definition = maybe(rng, 0.3, |r| phrase(r, 6));
    e.normalize();
    e
}

pub const DOMAINS: &[&str] = &["Physics", "Law", "Medicine", "Informātika", "Ökonomie"];

/// A node with one group and a user per role, all sharing credential "pw".
pub struct Site {
    pub node: Node,
    pub group: Uuid,
    pub members: BTreeMap<Role, Actor>,
    pub outsider: Actor,
}

pub fn fast_options() -> NodeOptions {
    NodeOptions { hashing: HashingParams::fast(), ..NodeOptions::default() }
}

pub fn site(node_id: Uuid) -> Site {
    let node = Node::in_memory(node_id, fast_options());
    let group = node.create_group("terminologists", &Actor::System).unwrap();
    let mut members = BTreeMap::new();
    for role in Role::ALL {
        let name = format!("{role}-user");
        let id = node.add_user(&name, "pw", &Actor::System).unwrap();
        node.set_role(id, group, Some(role), &Actor::System).unwrap();
        members.insert(role, Actor::User { id, username: name });
    }
    let id = node.add_user("visitor", "pw", &Actor::System).unwrap();
    Site { node, group, members, outsider: Actor::User { id, username: "visitor".into() } }
}

pub fn collection(site: &Site, name: &str) -> Uuid {
    site.node.create_collection(CollectionMeta::new(name), site.group, &site.members[&Role::Admin]).unwrap()
}

pub fn connect(central: &Arc<Central>, node: &Node, name: &str) -> LocalTransport {
    let token = central.register(node.node_id(), name).unwrap();
    LocalTransport { central: central.clone(), token }
}

pub fn lang(code: &str) -> LangCode {
    LangCode::new(code)
}

/// Random editorial activity on one site's collections.
pub struct Workload {
    pub collections: Vec<Uuid>,
    pub live: Vec<(Uuid, Uuid)>,
    pub deleted: Vec<(Uuid, Uuid)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Create,
    Edit,
    Approve,
    Delete,
    Recreate,
    Visibility,
}

impl Workload {
    pub fn new(site: &Site, count: usize) -> Self {
        let collections = (0..count).map(|i| collection(site, &format!("Collection {i}"))).collect();
        Workload { collections, live: Vec::new(), deleted: Vec::new() }
    }

    pub fn pick_op(&self, rng: &mut TestRng) -> Op {
        let roll = rng.gen_range(0..100);
        match roll {
            _ if self.live.is_empty() && roll < 90 => Op::Create,
            0..=29 => Op::Create,
            30..=44 => Op::Edit,
            45..=79 => Op::Approve,
            80..=87 => Op::Delete,
            88..=91 if !self.deleted.is_empty() => Op::Recreate,
            _ => Op::Visibility,
        }
    }

    /// Performs one random operation through the public node API.
    pub fn step(&mut self, site: &Site, rng: &mut TestRng) -> Op {
        use etb_core::model::Visibility;
        let contributor = &site.members[&Role::Contributor];
        let op = self.pick_op(rng);
        match op {
            Op::Create => {
                let cid = *self.collections.choose(rng).unwrap();
                let e = simple_entry(rng, &LANGS[..4]);
                let id = e.id;
                site.node.upsert_entry(cid, e, contributor).unwrap();
                self.live.push((cid, id));
            }
            Op::Edit => {
                let (cid, eid) = *self.live.choose(rng).unwrap();
                let mut e = site.node.get_entry(cid, eid, &site.members[&Role::Reader]).unwrap();
                e.definition = Some(phrase(rng, 5));
                if rng.gen_bool(0.3) {
                    e.lang_sections[0].terms.push(TermRecord::new(phrase(rng, 2)));
                }
                site.node.upsert_entry(cid, e, contributor).unwrap();
            }
            Op::Approve => {
                let (cid, eid) = *self.live.choose(rng).unwrap();
                match site.node.approve_entry(cid, eid, &site.members[&Role::Approver]) {
                    Ok(_) | Err(etb_core::error::NodeError::AlreadyApproved) => {}
                    Err(e) => panic!("approve failed: {e}"),
                }
            }
            Op::Delete => {
                let i = rng.gen_range(0..self.live.len());
                let (cid, eid) = self.live.swap_remove(i);
                site.node.delete_entry(cid, eid, contributor).unwrap();
                self.deleted.push((cid, eid));
            }
            Op::Recreate => {
                let i = rng.gen_range(0..self.deleted.len());
                let (_, eid) = self.deleted.swap_remove(i);
                let cid = *self.collections.choose(rng).unwrap();
                let mut e = simple_entry(rng, &LANGS[..4]);
                e.id = eid;
                site.node.upsert_entry(cid, e, contributor).unwrap();
                self.live.push((cid, eid));
            }
            Op::Visibility => {
                let cid = *self.collections.choose(rng).unwrap();
                let vis = pick(rng, &[Visibility::Private, Visibility::Group, Visibility::Public, Visibility::Public]);
                site.node.set_visibility(cid, vis, &site.members[&Role::Admin]).unwrap();
            }
        }
        op
    }
}

/// Union of the nodes' public projections.
pub fn expected_projection<'a>(nodes: impl IntoIterator<Item = &'a Node>) -> etb_core::federation::Projection {
    let mut out = etb_core::federation::Projection::new();
    for node in nodes {
        out.extend(node.public_projection());
    }
    out
}
