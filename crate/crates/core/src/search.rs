//! Inverted index over term strings with tiered matching and facets.
//!
//! Keys are normalized term strings (trimmed, NFC, case-folded; diacritics
//! kept). A sorted map answers exact and prefix lookups; a trigram map narrows
//! substring candidates. Visibility is decided by the caller per document, so
//! the same index serves a node's local store and the central consolidated
//! store.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use uuid::Uuid;

use crate::model::{LangCode, TermEntry};

pub const MAX_LIMIT: usize = 100;
pub const DEFAULT_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

pub fn normalize_text(s: &str) -> String {
    let composed: String = s.trim().nfc().collect();
    caseless::default_case_fold_str(&composed).nfc().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    Prefix,
    #[default]
    Substring,
}

impl std::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(MatchMode::Exact),
            "prefix" => Ok(MatchMode::Prefix),
            "substring" => Ok(MatchMode::Substring),
            other => Err(format!("unknown match mode {other:?}")),
        }
    }
}

/// Relevance tier of a match.
pub const TIER_EXACT: u8 = 3;
pub const TIER_PREFIX: u8 = 2;
pub const TIER_SUBSTRING: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchFilters {
    #[serde(default)]
    pub collection_ids: Option<BTreeSet<Uuid>>,
    #[serde(default)]
    pub languages: Option<BTreeSet<LangCode>>,
    #[serde(default)]
    pub domains: Option<BTreeSet<String>>,
    #[serde(default)]
    pub include_drafts: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub text: String,
    #[serde(default)]
    pub mode: MatchMode,
    #[serde(default)]
    pub filters: SearchFilters,
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

fn default_limit() -> usize {
    DEFAULT_LIMIT
}

impl SearchQuery {
    pub fn new(text: impl Into<String>, mode: MatchMode) -> Self {
        SearchQuery {
            text: text.into(),
            mode,
            filters: SearchFilters::default(),
            offset: 0,
            limit: DEFAULT_LIMIT,
        }
    }

    fn normalized_text(&self) -> Result<String, SearchError> {
        let text = normalize_text(&self.text);
        if text.is_empty() {
            return Err(SearchError::InvalidQuery("query text is empty".into()));
        }
        if self.limit == 0 || self.limit > MAX_LIMIT {
            return Err(SearchError::InvalidQuery(format!("limit must be within 1..={MAX_LIMIT}")));
        }
        Ok(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub entry_id: Uuid,
    pub collection_id: Uuid,
    pub matched_term: String,
    pub lang: LangCode,
    pub score: u8,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<Uuid>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResults {
    pub total: usize,
    pub hits: Vec<SearchHit>,
}

/// Documents are keyed by owning node and entry id, so one index can hold
/// entries from several nodes without collisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocKey {
    pub node_id: Uuid,
    pub entry_id: Uuid,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Posting {
    doc: DocKey,
    lang: LangCode,
    term: String,
}

/// Per-document facts the index keeps for filtering.
#[derive(Debug, Clone)]
pub struct DocInfo {
    pub collection_id: Uuid,
    pub approved: bool,
    pub domains: Vec<String>,
    pub domain_keys: BTreeSet<String>,
    pub langs: BTreeSet<LangCode>,
    keys: Vec<String>,
}

/// What the caller's visibility check reports for a readable document.
#[derive(Debug, Clone)]
pub struct Access {
    pub collection_name: String,
    /// The reader may see drafts of this collection.
    pub drafts: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionFacet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<Uuid>,
    pub collection_id: Uuid,
    pub name: String,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Facets {
    pub languages: BTreeMap<LangCode, u64>,
    pub domains: BTreeMap<String, u64>,
    pub collections: Vec<CollectionFacet>,
}

#[derive(Debug, Default)]
pub struct SearchIndex {
    terms: BTreeMap<String, BTreeSet<Posting>>,
    trigrams: HashMap<String, BTreeSet<String>>,
    docs: HashMap<DocKey, DocInfo>,
}

fn trigrams(key: &str) -> impl Iterator<Item = String> + '_ {
    let chars: Vec<char> = key.chars().collect();
    let count = chars.len().saturating_sub(2);
    (0..count).map(move |i| chars[i..i + 3].iter().collect())
}

impl SearchIndex {
    pub fn new() -> Self {
        SearchIndex::default()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, key: &DocKey) -> Option<&DocInfo> {
        self.docs.get(key)
    }

    /// Indexes every term of the entry, replacing earlier postings for the
    /// same key.
    pub fn index_entry(&mut self, key: DocKey, collection_id: Uuid, entry: &TermEntry) {
        self.remove_entry(&key);
        let mut keys = Vec::new();
        for (lang, record) in entry.terms() {
            let norm = normalize_text(&record.term);
            if norm.is_empty() {
                continue;
            }
            let postings = self.terms.entry(norm.clone()).or_default();
            if postings.is_empty() {
                for gram in trigrams(&norm) {
                    self.trigrams.entry(gram).or_default().insert(norm.clone());
                }
            }
            postings.insert(Posting { doc: key, lang: lang.clone(), term: record.term.clone() });
            keys.push(norm);
        }
        keys.sort();
        keys.dedup();
        let info = DocInfo {
            collection_id,
            approved: entry.is_approved(),
            domains: entry.subject_fields.clone(),
            domain_keys: entry.subject_fields.iter().map(|d| normalize_text(d)).collect(),
            langs: entry.lang_sections.iter().map(|s| s.lang.clone()).collect(),
            keys,
        };
        self.docs.insert(key, info);
    }

    pub fn remove_entry(&mut self, key: &DocKey) {
        let Some(info) = self.docs.remove(key) else {
            return;
        };
        for norm in info.keys {
            let Some(postings) = self.terms.get_mut(&norm) else {
                continue;
            };
            postings.retain(|p| p.doc != *key);
            if postings.is_empty() {
                self.terms.remove(&norm);
                for gram in trigrams(&norm) {
                    if let Some(set) = self.trigrams.get_mut(&gram) {
                        set.remove(&norm);
                        if set.is_empty() {
                            self.trigrams.remove(&gram);
                        }
                    }
                }
            }
        }
    }

    /// Removes every document whose key satisfies `pred`.
    pub fn remove_where(&mut self, pred: impl Fn(&DocKey, &DocInfo) -> bool) {
        let doomed: Vec<DocKey> = self.docs.iter().filter(|(k, d)| pred(k, d)).map(|(k, _)| *k).collect();
        for key in doomed {
            self.remove_entry(&key);
        }
    }

    fn matching_keys(&self, query: &str, mode: MatchMode) -> Vec<(&String, u8)> {
        let mut out = Vec::new();
        if let Some((key, _)) = self.terms.get_key_value(query) {
            out.push((key, TIER_EXACT));
        }
        if mode == MatchMode::Exact {
            return out;
        }
        for (key, _) in self.terms.range::<str, _>((std::ops::Bound::Excluded(query), std::ops::Bound::Unbounded)) {
            if !key.starts_with(query) {
                break;
            }
            out.push((key, TIER_PREFIX));
        }
        if mode == MatchMode::Prefix {
            return out;
        }
        let is_infix = |key: &str| key.contains(query) && !key.starts_with(query);
        if query.chars().count() >= 3 {
            let mut grams: Vec<&BTreeSet<String>> = Vec::new();
            for gram in trigrams(query) {
                match self.trigrams.get(&gram) {
                    Some(set) => grams.push(set),
                    None => return out,
                }
            }
            grams.sort_by_key(|s| s.len());
            let (first, rest) = grams.split_first().expect("query has at least one trigram");
            for candidate in first.iter() {
                if rest.iter().all(|s| s.contains(candidate)) && is_infix(candidate) {
                    if let Some((key, _)) = self.terms.get_key_value(candidate) {
                        out.push((key, TIER_SUBSTRING));
                    }
                }
            }
        } else {
            for key in self.terms.keys() {
                if is_infix(key) {
                    out.push((key, TIER_SUBSTRING));
                }
            }
        }
        out
    }

    /// Runs a query. `visible` returns `None` for documents the reader may
    /// not see at all.
    pub fn search<F>(&self, query: &SearchQuery, visible: F) -> Result<SearchResults, SearchError>
    where
        F: Fn(&DocKey, &DocInfo) -> Option<Access>,
    {
        let text = query.normalized_text()?;
        let filters = &query.filters;
        let domain_filter: Option<BTreeSet<String>> = filters
            .domains
            .as_ref()
            .map(|ds| ds.iter().map(|d| normalize_text(d)).collect());

        // Best posting per document: highest tier, then lang, then term.
        let mut best: HashMap<DocKey, (u8, &Posting)> = HashMap::new();
        for (key, tier) in self.matching_keys(&text, query.mode) {
            for posting in &self.terms[key] {
                if let Some(langs) = &filters.languages {
                    if !langs.contains(&posting.lang) {
                        continue;
                    }
                }
                let slot = best.entry(posting.doc).or_insert((tier, posting));
                let better = tier > slot.0
                    || (tier == slot.0 && (&posting.lang, &posting.term) < (&slot.1.lang, &slot.1.term));
                if better {
                    *slot = (tier, posting);
                }
            }
        }

        let mut ranked = Vec::new();
        for (doc, (tier, posting)) in best {
            let info = &self.docs[&doc];
            if let Some(ids) = &filters.collection_ids {
                if !ids.contains(&info.collection_id) {
                    continue;
                }
            }
            if let Some(domains) = &domain_filter {
                if info.domain_keys.is_disjoint(domains) {
                    continue;
                }
            }
            let Some(access) = visible(&doc, info) else {
                continue;
            };
            if !info.approved && !(filters.include_drafts && access.drafts) {
                continue;
            }
            ranked.push((tier, access.collection_name, doc, info.collection_id, posting));
        }
        ranked.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.entry_id.cmp(&b.2.entry_id))
                .then_with(|| a.2.node_id.cmp(&b.2.node_id))
        });
        let total = ranked.len();
        let hits = ranked
            .into_iter()
            .skip(query.offset)
            .take(query.limit)
            .map(|(score, _, doc, collection_id, posting)| SearchHit {
                entry_id: doc.entry_id,
                collection_id,
                matched_term: posting.term.clone(),
                lang: posting.lang.clone(),
                score,
                total,
                node_id: Some(doc.node_id),
            })
            .collect();
        Ok(SearchResults { total, hits })
    }

    /// Facet counts over visible approved documents passing `filters`.
    /// Languages count (entry, language) pairs; domains and collections count
    /// entries.
    pub fn facet_counts<F>(&self, filters: &SearchFilters, visible: F) -> Facets
    where
        F: Fn(&DocKey, &DocInfo) -> Option<Access>,
    {
        let domain_filter: Option<BTreeSet<String>> = filters
            .domains
            .as_ref()
            .map(|ds| ds.iter().map(|d| normalize_text(d)).collect());
        let mut facets = Facets::default();
        let mut collections: BTreeMap<(Uuid, Uuid), CollectionFacet> = BTreeMap::new();
        for (doc, info) in &self.docs {
            if !info.approved {
                continue;
            }
            if let Some(ids) = &filters.collection_ids {
                if !ids.contains(&info.collection_id) {
                    continue;
                }
            }
            if let Some(domains) = &domain_filter {
                if info.domain_keys.is_disjoint(domains) {
                    continue;
                }
            }
            let langs: Vec<&LangCode> = match &filters.languages {
                Some(wanted) => info.langs.iter().filter(|l| wanted.contains(*l)).collect(),
                None => info.langs.iter().collect(),
            };
            if langs.is_empty() {
                continue;
            }
            let Some(access) = visible(doc, info) else {
                continue;
            };
            for lang in langs {
                *facets.languages.entry(lang.clone()).or_default() += 1;
            }
            for domain in &info.domains {
                *facets.domains.entry(domain.clone()).or_default() += 1;
            }
            let slot = collections
                .entry((info.collection_id, doc.node_id))
                .or_insert_with(|| CollectionFacet {
                    node_id: Some(doc.node_id),
                    collection_id: info.collection_id,
                    name: access.collection_name.clone(),
                    count: 0,
                });
            slot.count += 1;
        }
        facets.collections = collections.into_values().collect();
        facets
    }
}
