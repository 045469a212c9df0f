//! Concept-oriented terminology records.
//!
//! A [`TermEntry`] is one concept. It carries concept-level metadata
//! (subject fields, definition, media) and one [`LangSection`] per language,
//! each holding the designations ([`TermRecord`]) for that language.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;
use uuid::Uuid;

/// Language tag: primary subtag plus optional region, canonically lowercase.
///
/// Construction never fails so that candidate entries with bad codes can be
/// carried to [`crate::validate::validate_entry`]; use [`LangCode::is_valid`]
/// or [`LangCode::parse`] when the pattern must hold.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LangCode(String);

impl LangCode {
    pub fn new(code: impl AsRef<str>) -> Self {
        LangCode(code.as_ref().trim().to_lowercase())
    }

    pub fn parse(code: &str) -> Option<Self> {
        let lang = LangCode::new(code);
        lang.is_valid().then_some(lang)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// `[a-z]{2,3}(-[a-z0-9]{2,4})?`
    pub fn is_valid(&self) -> bool {
        let (primary, region) = match self.0.split_once('-') {
            Some((p, r)) => (p, Some(r)),
            None => (self.0.as_str(), None),
        };
        let primary_ok =
            (2..=3).contains(&primary.len()) && primary.bytes().all(|b| b.is_ascii_lowercase());
        let region_ok = region.is_none_or(|r| {
            (2..=4).contains(&r.len())
                && r.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
        });
        primary_ok && region_ok
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LangCode {
    fn from(s: &str) -> Self {
        LangCode::new(s)
    }
}

impl Serialize for LangCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LangCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(LangCode::new(String::deserialize(d)?))
    }
}

/// UTC instant with millisecond precision, rendered as RFC 3339 with a `Z`
/// suffix so that string order equals time order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub const FORMAT: &'static str = "%Y-%m-%dT%H:%M:%S%.3fZ";

    pub fn now() -> Self {
        Timestamp::from_datetime(Utc::now())
    }

    pub fn from_datetime(at: DateTime<Utc>) -> Self {
        let millis = at.timestamp_millis();
        Timestamp::from_millis(millis)
    }

    pub fn from_millis(millis: i64) -> Self {
        Timestamp(
            Utc.timestamp_millis_opt(millis)
                .single()
                .unwrap_or(DateTime::<Utc>::UNIX_EPOCH),
        )
    }

    pub fn epoch() -> Self {
        Timestamp(DateTime::<Utc>::UNIX_EPOCH)
    }

    pub fn millis(&self) -> i64 {
        self.0.timestamp_millis()
    }

    pub fn datetime(&self) -> DateTime<Utc> {
        self.0
    }

    pub fn plus_millis(&self, delta: i64) -> Self {
        Timestamp::from_millis(self.millis().saturating_add(delta))
    }
}

impl Default for Timestamp {
    fn default() -> Self {
        Timestamp::epoch()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(Self::FORMAT))
    }
}

impl FromStr for Timestamp {
    type Err = chrono::ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parsed = DateTime::parse_from_rfc3339(s.trim())?;
        Ok(Timestamp::from_datetime(parsed.with_timezone(&Utc)))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Declares a closed vocabulary whose wire token (TBX/CSV) is lowerCamelCase
/// and whose JSON form is snake_case.
macro_rules! vocabulary {
    ($(#[$meta:meta])* $name:ident { $($(#[$vmeta:meta])* $variant:ident => $json:literal, $token:literal;)+ }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($(#[$vmeta])* #[serde(rename = $json)] $variant,)+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant,)+];

            /// Token used in the TBX and CSV encodings.
            pub fn token(self) -> &'static str {
                match self {
                    $($name::$variant => $token,)+
                }
            }

            pub fn from_token(token: &str) -> Option<Self> {
                match token {
                    $($token => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }
    };
}

vocabulary!(#[derive(Default)] TermType {
    #[default]
    FullForm => "full_form", "fullForm";
    Abbreviation => "abbreviation", "abbreviation";
    Acronym => "acronym", "acronym";
    ShortForm => "short_form", "shortForm";
    Variant => "variant", "variant";
    Phrase => "phrase", "phrase";
});

vocabulary!(PartOfSpeech {
    Noun => "noun", "noun";
    Verb => "verb", "verb";
    Adjective => "adjective", "adjective";
    Adverb => "adverb", "adverb";
    ProperNoun => "proper_noun", "properNoun";
    Other => "other", "other";
});

vocabulary!(GrammaticalGender {
    Masculine => "masculine", "masculine";
    Feminine => "feminine", "feminine";
    Neuter => "neuter", "neuter";
    Common => "common", "common";
});

vocabulary!(GrammaticalNumber {
    Singular => "singular", "singular";
    Plural => "plural", "plural";
    Dual => "dual", "dual";
});

vocabulary!(Register {
    Neutral => "neutral", "neutral";
    Technical => "technical", "technical";
    Colloquial => "colloquial", "colloquial";
    Legal => "legal", "legal";
});

vocabulary!(Currentness {
    Current => "current", "current";
    Outdated => "outdated", "outdated";
    Superseded => "superseded", "superseded";
});

vocabulary!(MediaKind {
    Image => "image", "xGraphic";
    Video => "video", "xVideo";
});

vocabulary!(
    /// Editorial state. Only approved entries are ever published.
    #[derive(Default)]
    WorkflowStatus {
        #[default]
        Draft => "draft", "workingElement";
        Approved => "approved", "consolidatedElement";
    }
);

/// A data category the TBX dialect does not define. Kept verbatim and
/// re-emitted where it was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpaqueCategory {
    /// XML element name, e.g. `descrip` or `note`.
    pub element: String,
    /// Value of the `type` attribute, when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRecord {
    pub term: String,
    #[serde(default)]
    pub term_type: TermType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_of_speech: Option<PartOfSpeech>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grammatical_gender: Option<GrammaticalGender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grammatical_number: Option<GrammaticalNumber>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub register: Option<Register>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub currentness: Option<Currentness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage_example: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<OpaqueCategory>,
}

impl TermRecord {
    pub fn new(term: impl Into<String>) -> Self {
        TermRecord {
            term: term.into(),
            term_type: TermType::FullForm,
            part_of_speech: None,
            grammatical_gender: None,
            grammatical_number: None,
            register: None,
            currentness: None,
            usage_example: None,
            source: None,
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LangSection {
    pub lang: LangCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
    pub terms: Vec<TermRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<OpaqueCategory>,
}

impl LangSection {
    pub fn new(lang: impl Into<LangCode>, terms: Vec<TermRecord>) -> Self {
        LangSection {
            lang: lang.into(),
            definition: None,
            terms,
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaRef {
    pub url: String,
    pub kind: MediaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermEntry {
    pub id: Uuid,
    #[serde(default)]
    pub subject_fields: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
    pub lang_sections: Vec<LangSection>,
    #[serde(default)]
    pub media: Vec<MediaRef>,
    #[serde(default)]
    pub workflow_status: WorkflowStatus,
    #[serde(default)]
    pub revision: u64,
    #[serde(default)]
    pub modified_at: Timestamp,
    #[serde(default)]
    pub modified_by: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<OpaqueCategory>,
}

impl TermEntry {
    /// A fresh draft with a random id and the given language sections.
    pub fn new(lang_sections: Vec<LangSection>) -> Self {
        TermEntry {
            id: Uuid::new_v4(),
            subject_fields: Vec::new(),
            definition: None,
            lang_sections,
            media: Vec::new(),
            workflow_status: WorkflowStatus::Draft,
            revision: 0,
            modified_at: Timestamp::epoch(),
            modified_by: String::new(),
            extra: Vec::new(),
        }
    }

    pub fn is_approved(&self) -> bool {
        self.workflow_status == WorkflowStatus::Approved
    }

    pub fn section(&self, lang: &LangCode) -> Option<&LangSection> {
        self.lang_sections.iter().find(|s| &s.lang == lang)
    }

    /// Iterates `(lang, term)` over every designation of the entry.
    pub fn terms(&self) -> impl Iterator<Item = (&LangCode, &TermRecord)> {
        self.lang_sections
            .iter()
            .flat_map(|s| s.terms.iter().map(move |t| (&s.lang, t)))
    }

    /// Applies NFC to every text field and drops repeated subject fields.
    pub fn normalize(&mut self) {
        let mut seen = std::collections::HashSet::new();
        let fields = std::mem::take(&mut self.subject_fields);
        for field in fields {
            let field = nfc(&field);
            if seen.insert(field.clone()) {
                self.subject_fields.push(field);
            }
        }
        nfc_opt(&mut self.definition);
        self.modified_by = nfc(&self.modified_by);
        for media in &mut self.media {
            media.url = nfc(&media.url);
            nfc_opt(&mut media.caption);
        }
        nfc_extra(&mut self.extra);
        for section in &mut self.lang_sections {
            nfc_opt(&mut section.definition);
            nfc_extra(&mut section.extra);
            for term in &mut section.terms {
                term.term = nfc(&term.term);
                nfc_opt(&mut term.usage_example);
                nfc_opt(&mut term.source);
                nfc_extra(&mut term.extra);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionMeta {
    pub id: Uuid,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub domains: Vec<String>,
    #[serde(default)]
    pub declared_languages: Vec<LangCode>,
}

impl CollectionMeta {
    pub fn new(name: impl Into<String>) -> Self {
        CollectionMeta {
            id: Uuid::new_v4(),
            name: name.into(),
            description: None,
            domains: Vec::new(),
            declared_languages: Vec::new(),
        }
    }

    pub fn normalize(&mut self) {
        self.name = nfc(&self.name);
        nfc_opt(&mut self.description);
        for domain in &mut self.domains {
            *domain = nfc(domain);
        }
    }
}

/// Who may see a collection: its owning group only, every signed-in user of
/// the node, or everyone (and the central aggregator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Private,
    Group,
    Public,
}

impl FromStr for Visibility {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "private" => Ok(Visibility::Private),
            "group" => Ok(Visibility::Group),
            "public" => Ok(Visibility::Public),
            other => Err(format!("unknown visibility {other:?}")),
        }
    }
}

pub(crate) fn nfc(s: &str) -> String {
    s.nfc().collect()
}

fn nfc_opt(s: &mut Option<String>) {
    if let Some(v) = s {
        *v = nfc(v);
    }
}

fn nfc_extra(extra: &mut [OpaqueCategory]) {
    for e in extra {
        e.value = nfc(&e.value);
        if let Some(c) = &mut e.category {
            *c = nfc(c);
        }
    }
}
