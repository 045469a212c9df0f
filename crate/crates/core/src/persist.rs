//! Write-ahead log with snapshot compaction.
//!
//! Layout under the data directory, for a store named `name`:
//! `name.wal.jsonl` (one JSON event per line, numbered), `name.snapshot.json`
//! (full state plus the number of the last event folded into it) and
//! `name.lock` (held exclusively while the store is open).

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

const DEFAULT_COMPACT_EVERY: usize = 2_000;

#[derive(Serialize, Deserialize)]
struct WalLine<E> {
    lsn: u64,
    event: E,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile<S> {
    lsn: u64,
    state: S,
}

struct FileBackend {
    snapshot_path: PathBuf,
    wal_path: PathBuf,
    wal: File,
    _lock: File,
    since_compaction: usize,
}

/// Append-only event log. The in-memory variant discards everything.
pub struct Wal<S, E> {
    backend: Option<FileBackend>,
    lsn: u64,
    compact_every: usize,
    _marker: PhantomData<fn(S, E)>,
}

/// State recovered from disk: the last snapshot (if any) and the events
/// logged after it, in order.
pub struct Recovered<S, E> {
    pub snapshot: Option<S>,
    pub events: Vec<E>,
}

fn json_err(e: serde_json::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

impl<S, E> Wal<S, E>
where
    S: Serialize + DeserializeOwned,
    E: Serialize + DeserializeOwned,
{
    pub fn memory() -> Self {
        Wal { backend: None, lsn: 0, compact_every: DEFAULT_COMPACT_EVERY, _marker: PhantomData }
    }

    pub fn open(dir: &Path, name: &str) -> io::Result<(Self, Recovered<S, E>)> {
        fs::create_dir_all(dir)?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(format!("{name}.lock")))?;
        lock.try_lock().map_err(|_| {
            io::Error::new(
                io::ErrorKind::WouldBlock,
                format!("{} is in use by another process", dir.display()),
            )
        })?;

        let snapshot_path = dir.join(format!("{name}.snapshot.json"));
        let wal_path = dir.join(format!("{name}.wal.jsonl"));

        let (mut lsn, snapshot) = match fs::read(&snapshot_path) {
            Ok(bytes) => {
                let file: SnapshotFile<S> = serde_json::from_slice(&bytes).map_err(json_err)?;
                (file.lsn, Some(file.state))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => (0, None),
            Err(e) => return Err(e),
        };

        let mut events = Vec::new();
        let mut since_compaction = 0;
        if wal_path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&wal_path)?).lines().collect::<Result<_, _>>()?;
            let count = lines.len();
            for (i, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: WalLine<E> = match serde_json::from_str(&line) {
                    Ok(p) => p,
                    // A torn final line is an append that never completed.
                    Err(_) if i + 1 == count => break,
                    Err(e) => return Err(json_err(e)),
                };
                since_compaction += 1;
                if parsed.lsn > lsn {
                    lsn = parsed.lsn;
                    events.push(parsed.event);
                }
            }
        }
        let wal = OpenOptions::new().create(true).append(true).open(&wal_path)?;
        let backend = FileBackend { snapshot_path, wal_path, wal, _lock: lock, since_compaction };
        let log = Wal { backend: Some(backend), lsn, compact_every: DEFAULT_COMPACT_EVERY, _marker: PhantomData };
        Ok((log, Recovered { snapshot, events }))
    }

    pub fn with_compaction_interval(mut self, events: usize) -> Self {
        self.compact_every = events.max(1);
        self
    }

    pub fn is_durable(&self) -> bool {
        self.backend.is_some()
    }

    /// Appends one event and syncs it to disk before returning.
    pub fn append(&mut self, event: &E) -> io::Result<()> {
        let Some(backend) = &mut self.backend else {
            return Ok(());
        };
        let lsn = self.lsn + 1;
        let mut line = serde_json::to_vec(&WalLine { lsn, event }).map_err(json_err)?;
        line.push(b'\n');
        backend.wal.write_all(&line)?;
        backend.wal.sync_data()?;
        backend.since_compaction += 1;
        self.lsn = lsn;
        Ok(())
    }

    pub fn wants_compaction(&self) -> bool {
        self.backend.as_ref().is_some_and(|b| b.since_compaction >= self.compact_every)
    }

    /// Writes `state` as the new snapshot and truncates the log. Events with
    /// numbers at or below the snapshot's are skipped on recovery, so a crash
    /// between the two steps is harmless.
    pub fn compact(&mut self, state: &S) -> io::Result<()> {
        let Some(backend) = &mut self.backend else {
            return Ok(());
        };
        let tmp = backend.snapshot_path.with_extension("json.tmp");
        let bytes = serde_json::to_vec(&SnapshotFile { lsn: self.lsn, state }).map_err(json_err)?;
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &backend.snapshot_path)?;
        backend.wal = OpenOptions::new().create(true).write(true).truncate(true).open(&backend.wal_path)?;
        backend.wal.sync_all()?;
        backend.wal = OpenOptions::new().append(true).open(&backend.wal_path)?;
        backend.since_compaction = 0;
        Ok(())
    }
}
