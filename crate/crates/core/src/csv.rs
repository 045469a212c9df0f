//! Wide-format CSV codec: one row per entry.
//!
//! Header tokens: `id`, `subject_field`, `definition`, and per language
//! `term:<lang>`, `definition:<lang>`, `pos:<lang>`. Multi-valued cells join
//! values with `|`; a literal `|` or `\` inside a value is written `\|` or
//! `\\`.
//!
//! Fields with no CSV column (media, status, revision, morphology other
//! than part of speech) take their defaults on parse: no media, draft,
//! revision 0.

use std::collections::HashMap;

use thiserror::Error;
use uuid::Uuid;

use crate::model::{nfc, LangCode, LangSection, PartOfSpeech, TermEntry, TermRecord};
use crate::tbx::decode_utf8;
use crate::validate::{IssueCode, ValidationIssue};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CsvError {
    #[error("header error: {0}")]
    HeaderError(String),
    #[error("row at line {line} has {found} fields, header has {expected}")]
    RowArityError { line: u64, expected: usize, found: usize },
    #[error("encoding error: {0}")]
    EncodingError(String),
    #[error("at least one language is required")]
    NoLanguages,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Id,
    SubjectField,
    Definition,
    LangDefinition(usize),
    Term(usize),
    Pos(usize),
    Ignored,
}

pub(crate) fn split_multi(cell: &str) -> Vec<String> {
    if cell.is_empty() {
        return Vec::new();
    }
    let mut items = Vec::new();
    let mut current = String::new();
    let mut chars = cell.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if matches!(chars.peek(), Some('|' | '\\')) => {
                current.push(chars.next().unwrap_or('\\'));
            }
            '|' => items.push(std::mem::take(&mut current)),
            c => current.push(c),
        }
    }
    items.push(current);
    items
}

pub(crate) fn join_multi<S: AsRef<str>>(items: &[S]) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        for c in item.as_ref().chars() {
            if matches!(c, '|' | '\\') {
                out.push('\\');
            }
            out.push(c);
        }
    }
    out
}

fn parse_header(
    header: &csv::StringRecord,
    issues: &mut Vec<ValidationIssue>,
) -> Result<(Vec<Column>, Vec<LangCode>), CsvError> {
    let mut columns = Vec::with_capacity(header.len());
    let mut langs: Vec<LangCode> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let lang_index = |code: &str, langs: &mut Vec<LangCode>| {
        let lang = LangCode::new(code);
        match langs.iter().position(|l| *l == lang) {
            Some(i) => i,
            None => {
                langs.push(lang);
                langs.len() - 1
            }
        }
    };
    for raw in header.iter() {
        let token = raw.trim();
        let canonical = match token.split_once(':') {
            Some((kind, lang)) => format!("{kind}:{}", LangCode::new(lang)),
            None => token.to_string(),
        };
        if !seen.insert(canonical) {
            return Err(CsvError::HeaderError(format!("duplicate column {token:?}")));
        }
        let column = match token.split_once(':') {
            None if token == "id" => Column::Id,
            None if token == "subject_field" => Column::SubjectField,
            None if token == "definition" => Column::Definition,
            Some(("term", lang)) => Column::Term(lang_index(lang, &mut langs)),
            Some(("definition", lang)) => Column::LangDefinition(lang_index(lang, &mut langs)),
            Some(("pos", lang)) => Column::Pos(lang_index(lang, &mut langs)),
            _ => {
                issues.push(ValidationIssue::warning(
                    IssueCode::UnknownCategory,
                    "header",
                    format!("unknown column {token:?} ignored"),
                ));
                Column::Ignored
            }
        };
        columns.push(column);
    }
    if !columns.iter().any(|c| matches!(c, Column::Term(_))) {
        return Err(CsvError::HeaderError("no term:<lang> column".into()));
    }
    Ok((columns, langs))
}

/// Parses a wide-format CSV document into candidate entries.
pub fn parse_csv(document: &[u8]) -> Result<(Vec<TermEntry>, Vec<ValidationIssue>), CsvError> {
    let text = decode_utf8(document).map_err(|e| CsvError::EncodingError(e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let mut issues = Vec::new();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| CsvError::HeaderError(e.to_string()))?,
        None => return Err(CsvError::HeaderError("document has no header row".into())),
    };
    let (columns, langs) = parse_header(&header, &mut issues)?;

    let mut entries = Vec::new();
    for record in records {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::Utf8 { .. } => CsvError::EncodingError(e.to_string()),
            _ => CsvError::HeaderError(e.to_string()),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != columns.len() {
            return Err(CsvError::RowArityError { line, expected: columns.len(), found: record.len() });
        }
        entries.push(parse_row(&record, &columns, &langs, line, &mut issues));
    }
    Ok((entries, issues))
}

fn parse_row(
    record: &csv::StringRecord,
    columns: &[Column],
    langs: &[LangCode],
    line: u64,
    issues: &mut Vec<ValidationIssue>,
) -> TermEntry {
    let mut id = None;
    let mut entry = TermEntry::new(Vec::new());
    let mut terms: HashMap<usize, Vec<String>> = HashMap::new();
    let mut definitions: HashMap<usize, String> = HashMap::new();
    let mut pos: HashMap<usize, Vec<String>> = HashMap::new();

    for (column, raw) in columns.iter().zip(record.iter()) {
        let cell = nfc(raw);
        match *column {
            Column::Id => {
                let trimmed = cell.trim();
                if !trimmed.is_empty() {
                    match Uuid::parse_str(trimmed) {
                        Ok(parsed) => id = Some(parsed),
                        Err(_) => issues.push(ValidationIssue::warning(
                            IssueCode::InvalidId,
                            format!("line/{line}"),
                            format!("id {trimmed:?} is not a UUID; assigned a new id"),
                        )),
                    }
                }
            }
            Column::SubjectField => {
                for field in split_multi(&cell) {
                    if !entry.subject_fields.contains(&field) {
                        entry.subject_fields.push(field);
                    }
                }
            }
            Column::Definition => entry.definition = (!cell.is_empty()).then_some(cell),
            Column::LangDefinition(l) => {
                if !cell.is_empty() {
                    definitions.insert(l, cell);
                }
            }
            Column::Term(l) => {
                terms.insert(l, split_multi(&cell));
            }
            Column::Pos(l) => {
                pos.insert(l, split_multi(&cell));
            }
            Column::Ignored => {}
        }
    }
    if let Some(id) = id {
        entry.id = id;
    }

    for (l, lang) in langs.iter().enumerate() {
        let term_list = terms.remove(&l).unwrap_or_default();
        let definition = definitions.remove(&l);
        let pos_list = pos.remove(&l).unwrap_or_default();
        let path = format!("entry/{}/lang/{lang}", entry.id);
        if term_list.is_empty() {
            if pos_list.iter().any(|p| !p.is_empty()) {
                issues.push(ValidationIssue::warning(
                    IssueCode::InvalidValue,
                    path.clone(),
                    "part of speech given without terms; ignored",
                ));
            }
            if definition.is_none() {
                continue;
            }
        }
        if pos_list.len() > term_list.len() {
            issues.push(ValidationIssue::warning(
                IssueCode::InvalidValue,
                path.clone(),
                "more part-of-speech values than terms; extras ignored",
            ));
        }
        let mut section = LangSection::new(lang.clone(), Vec::with_capacity(term_list.len()));
        section.definition = definition;
        for (i, term) in term_list.into_iter().enumerate() {
            let mut record = TermRecord::new(term);
            if let Some(token) = pos_list.get(i).map(|p| p.trim()).filter(|p| !p.is_empty()) {
                record.part_of_speech = PartOfSpeech::from_token(token);
                if record.part_of_speech.is_none() {
                    issues.push(ValidationIssue::warning(
                        IssueCode::InvalidValue,
                        format!("{path}/term/{i}"),
                        format!("unknown part of speech {token:?}"),
                    ));
                }
            }
            section.terms.push(record);
        }
        entry.lang_sections.push(section);
    }
    entry
}

/// Writes entries as wide-format CSV for the given languages (RFC 4180,
/// CRLF line ends). Languages an entry lacks produce empty cells.
pub fn serialize_csv(entries: &[TermEntry], languages: &[LangCode]) -> Result<Vec<u8>, CsvError> {
    if languages.is_empty() {
        return Err(CsvError::NoLanguages);
    }
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let io = |e: csv::Error| CsvError::EncodingError(e.to_string());

    let mut header = vec!["id".to_string(), "subject_field".into(), "definition".into()];
    for lang in languages {
        header.push(format!("term:{lang}"));
        header.push(format!("definition:{lang}"));
        header.push(format!("pos:{lang}"));
    }
    writer.write_record(&header).map_err(io)?;

    for entry in entries {
        let mut row = vec![
            entry.id.to_string(),
            join_multi(&entry.subject_fields),
            entry.definition.clone().unwrap_or_default(),
        ];
        for lang in languages {
            match entry.section(lang) {
                Some(section) => {
                    let terms: Vec<&str> = section.terms.iter().map(|t| t.term.as_str()).collect();
                    row.push(join_multi(&terms));
                    row.push(section.definition.clone().unwrap_or_default());
                    let pos: Vec<&str> = section
                        .terms
                        .iter()
                        .map(|t| t.part_of_speech.map_or("", |p| p.token()))
                        .collect();
                    if pos.iter().all(|p| p.is_empty()) {
                        row.push(String::new());
                    } else {
                        row.push(join_multi(&pos));
                    }
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
        }
        writer.write_record(&row).map_err(io)?;
    }
    writer.into_inner().map_err(|e| CsvError::EncodingError(e.to_string()))
}
