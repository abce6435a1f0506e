//! Append-only JSON-lines log used by the response and embedding caches.
//!
//! Each entry is written with a single `write_all` under a mutex, so
//! concurrent appends never interleave. On open, a trailing line without a
//! newline (an interrupted write) is ignored; readers see a consistent prefix.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::PanelIoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub key: String,
    /// Seconds since the Unix epoch at write time.
    pub timestamp: u64,
    pub value: Value,
}

impl LogEntry {
    pub fn now(key: impl Into<String>, value: Value) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        LogEntry {
            key: key.into(),
            timestamp,
            value,
        }
    }
}

#[derive(Debug)]
pub struct AppendLog {
    path: PathBuf,
    writer: Mutex<File>,
}

impl AppendLog {
    /// Opens (creating if needed) the log and returns the entries already in it.
    /// Later duplicates of a key are dropped; the first write wins.
    pub fn open(path: &Path) -> Result<(Self, Vec<LogEntry>), PanelIoError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| PanelIoError::io(parent, e))?;
        }
        let existing = match std::fs::read_to_string(path) {
            Ok(text) => parse_prefix(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(PanelIoError::io(path, e)),
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| PanelIoError::io(path, e))?;
        Ok((
            AppendLog {
                path: path.to_path_buf(),
                writer: Mutex::new(file),
            },
            existing,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &LogEntry) -> Result<(), PanelIoError> {
        let mut line =
            serde_json::to_string(entry).map_err(|e| PanelIoError::Serialize(e.to_string()))?;
        line.push('\n');
        let mut file = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| PanelIoError::io(&self.path, e))
    }
}

fn parse_prefix(text: &str) -> Vec<LogEntry> {
    let complete = match text.rfind('\n') {
        Some(end) => &text[..end],
        None => return Vec::new(),
    };
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogEntry>(line) {
            Ok(entry) => {
                if seen.insert(entry.key.clone()) {
                    out.push(entry);
                }
            }
            Err(e) => {
                log::warn!("skipping unreadable cache line {}: {e}", i + 1);
            }
        }
    }
    out
}
