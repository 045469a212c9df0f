//! TBX-ETB codec.
//!
//! TBX-ETB is a fixed subset of TBX 2 used for all exchange between nodes.
//! Layout of a document:
//!
//! ```text
//! tbx[type=TBX-ETB]
//!   tbxHeader/fileDesc
//!     titleStmt[id]/title, note[type=description]
//!     sourceDesc/p[type=domain|language]*
//!   text/body
//!     conceptEntry[id]
//!       descrip[type=subjectField]*, descrip[type=definition]?
//!       xref[type=xGraphic|xVideo, target]*
//!       admin[type=elementWorkingStatus|revision|modifiedAt|modifiedBy]
//!       langSec[xml:lang]
//!         descrip[type=definition]?
//!         termSec
//!           term, termNote[type=...]*, descrip[type=context]?, admin[type=source]?
//! ```
//!
//! Elements the dialect does not define are kept as [`OpaqueCategory`]
//! values on the owning level and written back after the known categories.

use std::fmt::Write as _;

use roxmltree::{Document, Node, ParsingOptions};
use thiserror::Error;
use uuid::Uuid;

use crate::model::{
    nfc, CollectionMeta, Currentness, GrammaticalGender, GrammaticalNumber, LangCode,
    LangSection, MediaKind, MediaRef, OpaqueCategory, PartOfSpeech, Register, TermEntry,
    TermRecord, TermType, Timestamp, WorkflowStatus,
};
use crate::validate::{validate_entry, IssueCode, ValidationIssue};

pub const DIALECT: &str = "TBX-ETB";
const XML_NS: &str = "http://www.w3.org/XML/1998/namespace";
const INDENT: &str = "  ";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TbxError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("unsupported dialect: {0}")]
    UnsupportedDialect(String),
    #[error("encoding error: {0}")]
    EncodingError(String),
    #[error("invariant violation at {path}: {message}")]
    InvariantViolation { path: String, message: String },
}

/// Result of a successful parse.
#[derive(Debug, Clone, PartialEq)]
pub struct TbxDocument {
    pub meta: CollectionMeta,
    pub entries: Vec<TermEntry>,
    pub issues: Vec<ValidationIssue>,
}

pub(crate) fn decode_utf8(bytes: &[u8]) -> Result<&str, std::str::Utf8Error> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    std::str::from_utf8(bytes)
}

fn parse_xml(text: &str) -> Result<Document<'_>, TbxError> {
    let opts = ParsingOptions {
        allow_dtd: true,
        ..ParsingOptions::default()
    };
    Document::parse_with_options(text, opts).map_err(|e| TbxError::MalformedDocument(e.to_string()))
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|n| n.is_element() && n.tag_name().name() == name)
}

fn elements<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(Node::is_element)
}

fn text_of(node: Node<'_, '_>) -> String {
    let raw: String = node
        .descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect();
    nfc(&raw)
}

fn opaque(node: Node<'_, '_>) -> OpaqueCategory {
    OpaqueCategory {
        element: node.tag_name().name().to_string(),
        category: node.attribute("type").map(nfc),
        value: text_of(node),
    }
}

/// Parses a full TBX-ETB document.
pub fn parse_tbx(document: &[u8]) -> Result<TbxDocument, TbxError> {
    let text = decode_utf8(document).map_err(|e| TbxError::EncodingError(e.to_string()))?;
    let doc = parse_xml(text)?;
    let root = doc.root_element();
    if root.tag_name().name() != "tbx" {
        return Err(TbxError::UnsupportedDialect(format!(
            "root element is <{}>, expected <tbx>",
            root.tag_name().name()
        )));
    }
    if root.attribute("type") != Some(DIALECT) {
        return Err(TbxError::UnsupportedDialect(format!(
            "tbx type is {:?}, expected {DIALECT:?}",
            root.attribute("type").unwrap_or("")
        )));
    }
    let meta = parse_header(root)?;
    let body = child(root, "text")
        .and_then(|t| child(t, "body"))
        .ok_or_else(|| TbxError::UnsupportedDialect("missing text/body".into()))?;

    let mut entries = Vec::new();
    let mut issues = Vec::new();
    for node in elements(body) {
        if node.tag_name().name() == "conceptEntry" {
            entries.push(parse_concept(node, &mut issues));
        } else {
            issues.push(ValidationIssue::warning(
                IssueCode::UnknownCategory,
                "body",
                format!("ignored <{}> in body", node.tag_name().name()),
            ));
        }
    }
    Ok(TbxDocument { meta, entries, issues })
}

/// Parses a single `<conceptEntry>` element, as carried in sync payloads.
pub fn parse_entry_fragment(
    fragment: &[u8],
) -> Result<(TermEntry, Vec<ValidationIssue>), TbxError> {
    let text = decode_utf8(fragment).map_err(|e| TbxError::EncodingError(e.to_string()))?;
    let doc = parse_xml(text)?;
    let root = doc.root_element();
    if root.tag_name().name() != "conceptEntry" {
        return Err(TbxError::UnsupportedDialect(format!(
            "fragment root is <{}>, expected <conceptEntry>",
            root.tag_name().name()
        )));
    }
    let mut issues = Vec::new();
    let entry = parse_concept(root, &mut issues);
    Ok((entry, issues))
}

fn parse_header(root: Node<'_, '_>) -> Result<CollectionMeta, TbxError> {
    let missing = |what: &str| TbxError::UnsupportedDialect(format!("missing {what}"));
    let file_desc = child(root, "tbxHeader")
        .and_then(|h| child(h, "fileDesc"))
        .ok_or_else(|| missing("tbxHeader/fileDesc"))?;
    let title_stmt = child(file_desc, "titleStmt").ok_or_else(|| missing("titleStmt"))?;
    let id = title_stmt
        .attribute("id")
        .and_then(|raw| Uuid::parse_str(raw.trim()).ok())
        .ok_or_else(|| TbxError::UnsupportedDialect("titleStmt lacks a UUID id".into()))?;
    let name = child(title_stmt, "title")
        .map(text_of)
        .ok_or_else(|| missing("titleStmt/title"))?;
    let description = elements(title_stmt)
        .find(|n| n.tag_name().name() == "note" && n.attribute("type") == Some("description"))
        .map(text_of);
    let mut meta = CollectionMeta {
        id,
        name,
        description,
        domains: Vec::new(),
        declared_languages: Vec::new(),
    };
    if let Some(source) = child(file_desc, "sourceDesc") {
        for p in elements(source).filter(|n| n.tag_name().name() == "p") {
            match p.attribute("type") {
                Some("domain") => meta.domains.push(text_of(p)),
                Some("language") => meta.declared_languages.push(LangCode::new(text_of(p))),
                _ => {}
            }
        }
    }
    Ok(meta)
}

/// Sets `slot` from an enumerated data category. Returns false when the
/// value must instead be kept opaque (duplicate or unknown token).
fn set_token<T: Copy>(slot: &mut Option<T>, raw: &str, decode: fn(&str) -> Option<T>) -> bool {
    match (slot.is_none(), decode(raw.trim())) {
        (true, Some(v)) => {
            *slot = Some(v);
            true
        }
        _ => false,
    }
}

fn set_text(slot: &mut Option<String>, node: Node<'_, '_>) -> bool {
    if slot.is_some() {
        return false;
    }
    *slot = Some(text_of(node));
    true
}

fn parse_concept(node: Node<'_, '_>, issues: &mut Vec<ValidationIssue>) -> TermEntry {
    let id = match node.attribute("id") {
        Some(raw) => Uuid::parse_str(raw.trim()).unwrap_or_else(|_| {
            let fresh = Uuid::new_v4();
            issues.push(ValidationIssue::warning(
                IssueCode::InvalidId,
                format!("entry/{fresh}"),
                format!("conceptEntry id {raw:?} is not a UUID; assigned a new id"),
            ));
            fresh
        }),
        None => {
            let fresh = Uuid::new_v4();
            issues.push(ValidationIssue::warning(
                IssueCode::MissingId,
                format!("entry/{fresh}"),
                "conceptEntry has no id; assigned a new id",
            ));
            fresh
        }
    };
    let base = format!("entry/{id}");
    let mut entry = TermEntry::new(Vec::new());
    entry.id = id;

    let mut status = None;
    let mut revision = None;
    let mut modified_at = None;
    let mut modified_by = None;

    for el in elements(node) {
        let name = el.tag_name().name();
        let category = el.attribute("type");
        let known = match (name, category) {
            ("descrip", Some("subjectField")) => {
                let label = text_of(el);
                if !entry.subject_fields.contains(&label) {
                    entry.subject_fields.push(label);
                }
                true
            }
            ("descrip", Some("definition")) => set_text(&mut entry.definition, el),
            ("xref", Some(kind @ ("xGraphic" | "xVideo"))) => match el.attribute("target") {
                Some(target) => {
                    let caption = text_of(el);
                    entry.media.push(MediaRef {
                        url: nfc(target),
                        kind: MediaKind::from_token(kind).unwrap_or(MediaKind::Image),
                        caption: (!caption.is_empty()).then_some(caption),
                    });
                    true
                }
                None => false,
            },
            ("admin", Some("elementWorkingStatus")) => {
                set_token(&mut status, &text_of(el), WorkflowStatus::from_token)
            }
            ("admin", Some("revision")) => {
                set_token(&mut revision, &text_of(el), |s| s.parse::<u64>().ok())
            }
            ("admin", Some("modifiedAt")) => {
                set_token(&mut modified_at, &text_of(el), |s| s.parse::<Timestamp>().ok())
            }
            ("admin", Some("modifiedBy")) => set_text(&mut modified_by, el),
            ("langSec", _) => {
                entry.lang_sections.push(parse_lang_sec(el, &base, issues));
                true
            }
            _ => false,
        };
        if !known {
            keep_opaque(el, &base, &mut entry.extra, issues);
        }
    }
    entry.workflow_status = status.unwrap_or_default();
    entry.revision = revision.unwrap_or(0);
    entry.modified_at = modified_at.unwrap_or_default();
    entry.modified_by = modified_by.unwrap_or_default();
    entry
}

fn keep_opaque(
    el: Node<'_, '_>,
    path: &str,
    extra: &mut Vec<OpaqueCategory>,
    issues: &mut Vec<ValidationIssue>,
) {
    let cat = opaque(el);
    let label = match &cat.category {
        Some(t) => format!("<{} type={t:?}>", cat.element),
        None => format!("<{}>", cat.element),
    };
    let is_known_name = matches!(
        (cat.element.as_str(), cat.category.as_deref()),
        (
            "termNote",
            Some(
                "termType" | "partOfSpeech" | "grammaticalGender" | "grammaticalNumber"
                    | "register" | "currentness"
            )
        ) | (
            "admin",
            Some("elementWorkingStatus" | "revision" | "modifiedAt" | "modifiedBy" | "source")
        ) | ("descrip", Some("definition" | "context" | "subjectField"))
            | ("xref", _)
            | ("term", None)
    );
    let (code, message) = if is_known_name {
        (
            IssueCode::InvalidValue,
            format!("{label} value {:?} is invalid or repeated; kept verbatim", cat.value),
        )
    } else {
        (IssueCode::UnknownCategory, format!("unknown data category {label}; kept verbatim"))
    };
    issues.push(ValidationIssue::warning(code, path.to_string(), message));
    extra.push(cat);
}

fn parse_lang_sec(
    node: Node<'_, '_>,
    base: &str,
    issues: &mut Vec<ValidationIssue>,
) -> LangSection {
    let lang = LangCode::new(node.attribute((XML_NS, "lang")).unwrap_or(""));
    let path = format!("{base}/lang/{lang}");
    let mut section = LangSection::new(lang, Vec::new());
    for el in elements(node) {
        let known = match (el.tag_name().name(), el.attribute("type")) {
            ("descrip", Some("definition")) => set_text(&mut section.definition, el),
            ("termSec", _) => {
                let term_path = format!("{path}/term/{}", section.terms.len());
                section.terms.push(parse_term_sec(el, &term_path, issues));
                true
            }
            _ => false,
        };
        if !known {
            keep_opaque(el, &path, &mut section.extra, issues);
        }
    }
    section
}

fn parse_term_sec(node: Node<'_, '_>, path: &str, issues: &mut Vec<ValidationIssue>) -> TermRecord {
    let mut term: Option<String> = None;
    let mut term_type = None;
    let mut record = TermRecord::new(String::new());
    for el in elements(node) {
        let value = || text_of(el);
        let known = match (el.tag_name().name(), el.attribute("type")) {
            ("term", None) => set_text(&mut term, el),
            ("termNote", Some("termType")) => set_token(&mut term_type, &value(), TermType::from_token),
            ("termNote", Some("partOfSpeech")) => {
                set_token(&mut record.part_of_speech, &value(), PartOfSpeech::from_token)
            }
            ("termNote", Some("grammaticalGender")) => {
                set_token(&mut record.grammatical_gender, &value(), GrammaticalGender::from_token)
            }
            ("termNote", Some("grammaticalNumber")) => {
                set_token(&mut record.grammatical_number, &value(), GrammaticalNumber::from_token)
            }
            ("termNote", Some("register")) => {
                set_token(&mut record.register, &value(), Register::from_token)
            }
            ("termNote", Some("currentness")) => {
                set_token(&mut record.currentness, &value(), Currentness::from_token)
            }
            ("descrip", Some("context")) => set_text(&mut record.usage_example, el),
            ("admin", Some("source")) => set_text(&mut record.source, el),
            _ => false,
        };
        if !known {
            keep_opaque(el, path, &mut record.extra, issues);
        }
    }
    record.term = term.unwrap_or_default();
    record.term_type = term_type.unwrap_or_default();
    record
}

// ---------------------------------------------------------------------------
// Serialization

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..)
}

fn is_xml_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn escape_text(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}

fn escape_attr(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}

/// Indented XML writer with a fixed attribute order supplied by the caller.
struct XmlWriter {
    out: String,
    depth: usize,
}

impl XmlWriter {
    fn new(depth: usize) -> Self {
        XmlWriter { out: String::new(), depth }
    }

    fn indent(&mut self) {
        for _ in 0..self.depth {
            self.out.push_str(INDENT);
        }
    }

    fn open_tag(&mut self, name: &str, attrs: &[(&str, &str)]) {
        self.out.push('<');
        self.out.push_str(name);
        for (key, value) in attrs {
            let _ = write!(self.out, " {key}=\"");
            escape_attr(&mut self.out, value);
            self.out.push('"');
        }
    }

    fn start(&mut self, name: &str, attrs: &[(&str, &str)]) {
        self.indent();
        self.open_tag(name, attrs);
        self.out.push_str(">\n");
        self.depth += 1;
    }

    fn end(&mut self, name: &str) {
        self.depth -= 1;
        self.indent();
        let _ = writeln!(self.out, "</{name}>");
    }

    fn leaf(&mut self, name: &str, attrs: &[(&str, &str)], text: &str) {
        self.indent();
        self.open_tag(name, attrs);
        self.out.push('>');
        escape_text(&mut self.out, text);
        let _ = writeln!(self.out, "</{name}>");
    }

    fn typed(&mut self, name: &str, category: &str, text: &str) {
        self.leaf(name, &[("type", category)], text);
    }

    fn opaque(&mut self, extra: &[OpaqueCategory]) {
        for cat in extra {
            match &cat.category {
                Some(category) => self.typed(&cat.element, category, &cat.value),
                None => self.leaf(&cat.element, &[], &cat.value),
            }
        }
    }
}

/// Serializes a collection to a TBX-ETB document.
///
/// Output is a pure function of the input. Entries that fail validation
/// with an error, or hold text XML cannot carry, are refused.
pub fn serialize_tbx(meta: &CollectionMeta, entries: &[TermEntry]) -> Result<Vec<u8>, TbxError> {
    check_meta(meta)?;
    for entry in entries {
        check_entry(entry)?;
    }
    let mut w = XmlWriter::new(0);
    w.out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    w.start("tbx", &[("type", DIALECT), ("xml:lang", "en")]);
    w.start("tbxHeader", &[]);
    w.start("fileDesc", &[]);
    let id = meta.id.to_string();
    w.start("titleStmt", &[("id", &id)]);
    w.leaf("title", &[], &meta.name);
    if let Some(description) = &meta.description {
        w.typed("note", "description", description);
    }
    w.end("titleStmt");
    if !meta.domains.is_empty() || !meta.declared_languages.is_empty() {
        w.start("sourceDesc", &[]);
        for domain in &meta.domains {
            w.typed("p", "domain", domain);
        }
        for lang in &meta.declared_languages {
            w.typed("p", "language", lang.as_str());
        }
        w.end("sourceDesc");
    }
    w.end("fileDesc");
    w.end("tbxHeader");
    w.start("text", &[]);
    w.start("body", &[]);
    for entry in entries {
        write_concept(&mut w, entry);
    }
    w.end("body");
    w.end("text");
    w.end("tbx");
    Ok(w.out.into_bytes())
}

/// Serializes one entry as a standalone `<conceptEntry>` element.
pub fn serialize_entry_fragment(entry: &TermEntry) -> Result<String, TbxError> {
    check_entry(entry)?;
    let mut w = XmlWriter::new(0);
    write_concept(&mut w, entry);
    Ok(w.out)
}

fn write_concept(w: &mut XmlWriter, entry: &TermEntry) {
    let id = entry.id.to_string();
    w.start("conceptEntry", &[("id", &id)]);
    for field in &entry.subject_fields {
        w.typed("descrip", "subjectField", field);
    }
    if let Some(def) = &entry.definition {
        w.typed("descrip", "definition", def);
    }
    for media in &entry.media {
        let attrs = [("type", media.kind.token()), ("target", media.url.as_str())];
        w.leaf("xref", &attrs, media.caption.as_deref().unwrap_or(""));
    }
    w.typed("admin", "elementWorkingStatus", entry.workflow_status.token());
    w.typed("admin", "revision", &entry.revision.to_string());
    w.typed("admin", "modifiedAt", &entry.modified_at.to_string());
    w.typed("admin", "modifiedBy", &entry.modified_by);
    w.opaque(&entry.extra);
    for section in &entry.lang_sections {
        w.start("langSec", &[("xml:lang", section.lang.as_str())]);
        if let Some(def) = &section.definition {
            w.typed("descrip", "definition", def);
        }
        w.opaque(&section.extra);
        for term in &section.terms {
            write_term(w, term);
        }
        w.end("langSec");
    }
    w.end("conceptEntry");
}

fn write_term(w: &mut XmlWriter, term: &TermRecord) {
    w.start("termSec", &[]);
    w.leaf("term", &[], &term.term);
    w.typed("termNote", "termType", term.term_type.token());
    let notes = [
        ("partOfSpeech", term.part_of_speech.map(|v| v.token())),
        ("grammaticalGender", term.grammatical_gender.map(|v| v.token())),
        ("grammaticalNumber", term.grammatical_number.map(|v| v.token())),
        ("register", term.register.map(|v| v.token())),
        ("currentness", term.currentness.map(|v| v.token())),
    ];
    for (category, value) in notes {
        if let Some(value) = value {
            w.typed("termNote", category, value);
        }
    }
    if let Some(example) = &term.usage_example {
        w.typed("descrip", "context", example);
    }
    if let Some(source) = &term.source {
        w.typed("admin", "source", source);
    }
    w.opaque(&term.extra);
    w.end("termSec");
}

fn violation(path: impl Into<String>, message: impl Into<String>) -> TbxError {
    TbxError::InvariantViolation { path: path.into(), message: message.into() }
}

fn check_chars(path: &str, s: &str) -> Result<(), TbxError> {
    match s.chars().find(|c| !is_xml_char(*c)) {
        Some(c) => Err(violation(path, format!("character U+{:04X} cannot be written to XML", c as u32))),
        None => Ok(()),
    }
}

fn check_meta(meta: &CollectionMeta) -> Result<(), TbxError> {
    if meta.name.trim().is_empty() {
        return Err(violation("collection/name", "collection name is empty"));
    }
    check_chars("collection/name", &meta.name)?;
    if let Some(d) = &meta.description {
        check_chars("collection/description", d)?;
    }
    for d in &meta.domains {
        check_chars("collection/domains", d)?;
    }
    for l in &meta.declared_languages {
        check_chars("collection/declared_languages", l.as_str())?;
    }
    Ok(())
}

/// A known category that is still unset on its level: `(element, type,
/// value check)`. An opaque element matching it would be read back as the
/// known category, so it cannot be written.
type OpenCategory = (&'static str, &'static str, Option<fn(&str) -> bool>);

fn absorbs(cat: &OpaqueCategory, open: &[OpenCategory]) -> bool {
    open.iter().any(|(element, category, accepts)| {
        cat.element == *element
            && cat.category.as_deref() == Some(*category)
            && accepts.is_none_or(|f| f(cat.value.trim()))
    })
}

fn check_extras(
    path: &str,
    extra: &[OpaqueCategory],
    open: &[OpenCategory],
) -> Result<(), TbxError> {
    for cat in extra {
        if !is_xml_name(&cat.element) || STRUCTURAL.contains(&cat.element.as_str()) {
            return Err(violation(path, format!("{:?} cannot be used as an element name", cat.element)));
        }
        check_chars(path, &cat.value)?;
        if let Some(c) = &cat.category {
            check_chars(path, c)?;
        }
        if absorbs(cat, open) {
            return Err(violation(
                path,
                format!("opaque <{}> duplicates a defined data category", cat.element),
            ));
        }
    }
    Ok(())
}

const STRUCTURAL: &[&str] = &["conceptEntry", "langSec", "termSec"];

fn check_entry(entry: &TermEntry) -> Result<(), TbxError> {
    if let Some(issue) = validate_entry(entry).into_iter().find(ValidationIssue::is_error) {
        return Err(violation(issue.path, format!("{}: {}", issue.code, issue.message)));
    }
    let base = format!("entry/{}", entry.id);
    for field in &entry.subject_fields {
        check_chars(&base, field)?;
    }
    if let Some(d) = &entry.definition {
        check_chars(&base, d)?;
    }
    check_chars(&base, &entry.modified_by)?;
    for m in &entry.media {
        check_chars(&base, &m.url)?;
        if let Some(c) = &m.caption {
            check_chars(&base, c)?;
            if c.is_empty() {
                return Err(violation(&base, "media caption is present but empty"));
            }
        }
    }
    let mut open: Vec<OpenCategory> = vec![("descrip", "subjectField", None)];
    if entry.definition.is_none() {
        open.push(("descrip", "definition", None));
    }
    check_extras(&base, &entry.extra, &open)?;

    for section in &entry.lang_sections {
        let path = format!("{base}/lang/{}", section.lang);
        check_chars(&path, section.lang.as_str())?;
        if let Some(d) = &section.definition {
            check_chars(&path, d)?;
        }
        let mut open: Vec<OpenCategory> = Vec::new();
        if section.definition.is_none() {
            open.push(("descrip", "definition", None));
        }
        check_extras(&path, &section.extra, &open)?;
        for (i, term) in section.terms.iter().enumerate() {
            let path = format!("{path}/term/{i}");
            check_chars(&path, &term.term)?;
            for text in [&term.usage_example, &term.source].into_iter().flatten() {
                check_chars(&path, text)?;
            }
            let mut open: Vec<OpenCategory> = Vec::new();
            let notes: [(&'static str, bool, fn(&str) -> bool); 5] = [
                ("partOfSpeech", term.part_of_speech.is_none(), |s| PartOfSpeech::from_token(s).is_some()),
                ("grammaticalGender", term.grammatical_gender.is_none(), |s| {
                    GrammaticalGender::from_token(s).is_some()
                }),
                ("grammaticalNumber", term.grammatical_number.is_none(), |s| {
                    GrammaticalNumber::from_token(s).is_some()
                }),
                ("register", term.register.is_none(), |s| Register::from_token(s).is_some()),
                ("currentness", term.currentness.is_none(), |s| Currentness::from_token(s).is_some()),
            ];
            for (category, unset, accepts) in notes {
                if unset {
                    open.push(("termNote", category, Some(accepts)));
                }
            }
            if term.usage_example.is_none() {
                open.push(("descrip", "context", None));
            }
            if term.source.is_none() {
                open.push(("admin", "source", None));
            }
            check_extras(&path, &term.extra, &open)?;
        }
    }
    Ok(())
}
