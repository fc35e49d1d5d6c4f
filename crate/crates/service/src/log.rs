//! Append-only NDJSON event log.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, Event, EventKind};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("event log corrupt at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp: u64,
    pub kind: EventKind,
    pub payload: Event,
    /// Digest of the state after applying this event.
    pub state_digest: String,
}

/// Source of record timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Timestamp equals the sequence number, so logs are reproducible.
    Logical,
    /// Milliseconds since the Unix epoch.
    Wall,
}

impl Clock {
    pub fn stamp(self, seq: u64) -> u64 {
        match self {
            Clock::Logical => seq,
            Clock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }
}

pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let io = |source| LogError::Io {
            path: path.to_owned(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self {
            path: path.to_owned(),
            file,
        })
    }

    /// Writes one record and flushes it to disk.
    pub fn append(&mut self, r: &EventRecord) -> Result<(), LogError> {
        let mut line = serde_json::to_string(r).expect("records serialize");
        line.push('\n');
        let io = |source| LogError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

/// Reads every record of an NDJSON log. A missing file reads as empty.
pub fn read_log(path: &Path) -> Result<Vec<EventRecord>, LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(vec![]),
        Err(source) => {
            return Err(LogError::Io {
                path: path.to_owned(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EventRecord = serde_json::from_str(&line).map_err(|e| LogError::CorruptLog {
            seq: i as u64,
            reason: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

/// Rebuilds the state from `records`, checking sequence numbers and every
/// recorded digest. An empty log yields `None`.
pub fn replay_events(records: &[EventRecord]) -> Result<Option<Engine>, LogError> {
    let mut engine: Option<Engine> = None;
    for (i, r) in records.iter().enumerate() {
        let corrupt = |reason: String| LogError::CorruptLog { seq: r.seq, reason };
        if r.seq != i as u64 {
            return Err(corrupt(format!("expected seq {i}")));
        }
        if r.kind != r.payload.kind() {
            return Err(corrupt(format!("kind {:?} does not match payload", r.kind)));
        }
        match engine.as_mut() {
            None => {
                let e = Engine::replay([&r.payload]).map_err(|e| corrupt(e.to_string()))?;
                engine = e;
            }
            Some(e) => {
                e.apply(&r.payload).map_err(|e| corrupt(e.to_string()))?;
            }
        }
        let digest = engine.as_ref().expect("set above").digest();
        if digest != r.state_digest {
            return Err(corrupt(format!("state digest {digest}, recorded {}", r.state_digest)));
        }
    }
    Ok(engine)
}
