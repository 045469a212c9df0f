//! Machine-readability rules for term entries.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{LangCode, TermEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// Issue codes. The first eight are the entry rule catalog checked by
/// [`validate_entry`]; the rest are reported by the codecs and the importer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    EmptyTerm,
    InvalidLang,
    DuplicateLangSection,
    NoLangSection,
    MarkupInTerm,
    MultilineTerm,
    BadMediaUrl,
    EmptyDefinitionPresent,
    // Codec and import diagnostics.
    UnknownCategory,
    InvalidValue,
    MissingId,
    InvalidId,
    IdConflict,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::EmptyTerm => "EMPTY_TERM",
            IssueCode::InvalidLang => "INVALID_LANG",
            IssueCode::DuplicateLangSection => "DUPLICATE_LANG_SECTION",
            IssueCode::NoLangSection => "NO_LANG_SECTION",
            IssueCode::MarkupInTerm => "MARKUP_IN_TERM",
            IssueCode::MultilineTerm => "MULTILINE_TERM",
            IssueCode::BadMediaUrl => "BAD_MEDIA_URL",
            IssueCode::EmptyDefinitionPresent => "EMPTY_DEFINITION_PRESENT",
            IssueCode::UnknownCategory => "UNKNOWN_CATEGORY",
            IssueCode::InvalidValue => "INVALID_VALUE",
            IssueCode::MissingId => "MISSING_ID",
            IssueCode::InvalidId => "INVALID_ID",
            IssueCode::IdConflict => "ID_CONFLICT",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub code: IssueCode,
    pub path: String,
    pub message: String,
}

impl ValidationIssue {
    pub fn error(code: IssueCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationIssue {
            severity: Severity::Error,
            code,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn warning(code: IssueCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationIssue {
            severity: Severity::Warning,
            code,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

pub fn has_errors(issues: &[ValidationIssue]) -> bool {
    issues.iter().any(ValidationIssue::is_error)
}

const LINE_BREAKS: &[char] = &['\n', '\r', '\u{0B}', '\u{0C}', '\u{85}', '\u{2028}', '\u{2029}'];

fn contains_markup(term: &str) -> bool {
    term.contains(['<', '>']) || term.contains("&lt;") || term.contains("&gt;")
}

fn is_web_url(raw: &str) -> bool {
    url::Url::parse(raw)
        .map(|u| matches!(u.scheme(), "http" | "https") && u.has_host())
        .unwrap_or(false)
}

/// Runs the full rule catalog. An empty result means the entry is fit to
/// publish.
pub fn validate_entry(entry: &TermEntry) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let base = format!("entry/{}", entry.id);

    if let Some(def) = &entry.definition {
        if def.trim().is_empty() {
            issues.push(ValidationIssue::warning(
                IssueCode::EmptyDefinitionPresent,
                format!("{base}/definition"),
                "concept definition is present but blank",
            ));
        }
    }

    for (i, media) in entry.media.iter().enumerate() {
        if !is_web_url(&media.url) {
            issues.push(ValidationIssue::warning(
                IssueCode::BadMediaUrl,
                format!("{base}/media/{i}"),
                format!("media url {:?} is not an absolute http(s) URL", media.url),
            ));
        }
    }

    if entry.lang_sections.is_empty() {
        issues.push(ValidationIssue::error(
            IssueCode::NoLangSection,
            base.clone(),
            "entry has no language section",
        ));
    }

    let mut seen: HashSet<LangCode> = HashSet::new();
    for section in &entry.lang_sections {
        let lang_path = format!("{base}/lang/{}", section.lang);
        if !section.lang.is_valid() {
            issues.push(ValidationIssue::error(
                IssueCode::InvalidLang,
                lang_path.clone(),
                format!("{:?} is not a language code", section.lang.as_str()),
            ));
        }
        if !seen.insert(section.lang.clone()) {
            issues.push(ValidationIssue::error(
                IssueCode::DuplicateLangSection,
                lang_path.clone(),
                format!("language {} appears more than once", section.lang),
            ));
        }
        if let Some(def) = &section.definition {
            if def.trim().is_empty() {
                issues.push(ValidationIssue::warning(
                    IssueCode::EmptyDefinitionPresent,
                    format!("{lang_path}/definition"),
                    "definition is present but blank",
                ));
            }
        }
        if section.terms.is_empty() {
            issues.push(ValidationIssue::error(
                IssueCode::EmptyTerm,
                lang_path.clone(),
                "language section has no terms",
            ));
        }
        for (i, record) in section.terms.iter().enumerate() {
            let path = format!("{lang_path}/term/{i}");
            if record.term.trim().is_empty() {
                issues.push(ValidationIssue::error(
                    IssueCode::EmptyTerm,
                    path.clone(),
                    "term is empty",
                ));
            }
            if record.term.contains(LINE_BREAKS) {
                issues.push(ValidationIssue::error(
                    IssueCode::MultilineTerm,
                    path.clone(),
                    "term contains a line break",
                ));
            }
            if contains_markup(&record.term) {
                issues.push(ValidationIssue::warning(
                    IssueCode::MarkupInTerm,
                    path,
                    "term contains markup",
                ));
            }
        }
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LangSection, MediaKind, MediaRef, TermRecord};

    fn entry(lang: &str, term: &str) -> TermEntry {
        TermEntry::new(vec![LangSection::new(lang, vec![TermRecord::new(term)])])
    }

    fn codes(issues: &[ValidationIssue]) -> Vec<(Severity, IssueCode)> {
        issues.iter().map(|i| (i.severity, i.code)).collect()
    }

    #[test]
    fn clean_entry_has_no_issues() {
        assert!(validate_entry(&entry("en", "firewall")).is_empty());
    }

    #[test]
    fn empty_term() {
        let e = entry("en", "");
        let issues = validate_entry(&e);
        assert_eq!(codes(&issues), vec![(Severity::Error, IssueCode::EmptyTerm)]);
        assert_eq!(issues[0].path, format!("entry/{}/lang/en/term/0", e.id));
    }

    #[test]
    fn invalid_lang() {
        let issues = validate_entry(&entry("english", "server"));
        assert_eq!(codes(&issues), vec![(Severity::Error, IssueCode::InvalidLang)]);
    }

    #[test]
    fn markup_is_a_warning() {
        let issues = validate_entry(&entry("en", "<b>server</b>"));
        assert_eq!(codes(&issues), vec![(Severity::Warning, IssueCode::MarkupInTerm)]);
        let issues = validate_entry(&entry("en", "a &lt; b"));
        assert_eq!(codes(&issues), vec![(Severity::Warning, IssueCode::MarkupInTerm)]);
    }

    #[test]
    fn multiline_term() {
        let issues = validate_entry(&entry("en", "fire\nwall"));
        assert_eq!(codes(&issues), vec![(Severity::Error, IssueCode::MultilineTerm)]);
        let issues = validate_entry(&entry("en", "fire\u{2028}wall"));
        assert_eq!(codes(&issues), vec![(Severity::Error, IssueCode::MultilineTerm)]);
    }

    #[test]
    fn structural_rules() {
        let mut e = entry("en", "a");
        e.lang_sections.push(LangSection::new("EN", vec![TermRecord::new("b")]));
        assert_eq!(
            codes(&validate_entry(&e)),
            vec![(Severity::Error, IssueCode::DuplicateLangSection)]
        );

        let e = TermEntry::new(vec![]);
        assert_eq!(codes(&validate_entry(&e)), vec![(Severity::Error, IssueCode::NoLangSection)]);

        let e = TermEntry::new(vec![LangSection::new("en", vec![])]);
        assert_eq!(codes(&validate_entry(&e)), vec![(Severity::Error, IssueCode::EmptyTerm)]);
    }

    #[test]
    fn media_and_blank_definitions() {
        let mut e = entry("en", "a");
        e.media.push(MediaRef { url: "ftp://x.org/a.png".into(), kind: MediaKind::Image, caption: None });
        e.media.push(MediaRef { url: "/relative.png".into(), kind: MediaKind::Image, caption: None });
        e.media.push(MediaRef { url: "https://x.org/a.mp4".into(), kind: MediaKind::Video, caption: None });
        e.definition = Some("  ".into());
        e.lang_sections[0].definition = Some(String::new());
        let issues = validate_entry(&e);
        assert_eq!(
            codes(&issues),
            vec![
                (Severity::Warning, IssueCode::EmptyDefinitionPresent),
                (Severity::Warning, IssueCode::BadMediaUrl),
                (Severity::Warning, IssueCode::BadMediaUrl),
                (Severity::Warning, IssueCode::EmptyDefinitionPresent),
            ]
        );
        assert!(!has_errors(&issues));
        assert!(issues[1].path.ends_with("/media/0"));
    }

    #[test]
    fn issue_code_json_matches_token() {
        for code in [IssueCode::EmptyTerm, IssueCode::EmptyDefinitionPresent, IssueCode::IdConflict] {
            assert_eq!(serde_json::to_string(&code).unwrap(), format!("\"{}\"", code.as_str()));
        }
    }
}
