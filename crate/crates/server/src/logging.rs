//! JSON-lines event log: one line per request or background event.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Debug,
    Info,
    Warn,
    Error,
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "debug" => Ok(Level::Debug),
            "info" => Ok(Level::Info),
            "warn" => Ok(Level::Warn),
            "error" => Ok(Level::Error),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

impl Level {
    /// Level for a finished request.
    pub fn for_status(status: u16) -> Level {
        match status {
            500.. => Level::Error,
            400.. => Level::Warn,
            _ => Level::Info,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub ts: DateTime<Utc>,
    pub level: Level,
    /// Absent for background events such as sync runs.
    pub request_id: Option<String>,
    pub actor: String,
    pub route: String,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl LogLine {
    pub fn event(level: Level, route: &str, outcome: impl Into<String>) -> Self {
        LogLine {
            ts: Utc::now(),
            level,
            request_id: None,
            actor: "system".into(),
            route: route.into(),
            outcome: outcome.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

/// Where log lines go. Write failures are swallowed.
pub struct LogSink {
    file: Option<Mutex<File>>,
}

impl LogSink {
    pub fn discard() -> Self {
        LogSink { file: None }
    }

    pub fn open(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(LogSink { file: Some(Mutex::new(file)) })
    }

    pub fn emit(&self, line: &LogLine) {
        let Some(file) = &self.file else { return };
        let Ok(mut bytes) = serde_json::to_vec(line) else { return };
        bytes.push(b'\n');
        let _ = file.lock().write_all(&bytes);
    }
}

/// Lines from a log file at or above `min_level` and not older than `since`.
/// Lines that do not parse are skipped.
pub fn read_log(path: &Path, min_level: Level, since: Option<DateTime<Utc>>) -> io::Result<Vec<LogLine>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let Ok(line) = serde_json::from_str::<LogLine>(&line?) else { continue };
        if line.level >= min_level && since.is_none_or(|s| line.ts >= s) {
            out.push(line);
        }
    }
    Ok(out)
}

pub fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}
