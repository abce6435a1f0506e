//! File formats: corpora, anchor sets, reports, tabular survey exports and
//! append-only cache logs.
//!
//! Structured files are JSON with a mandatory `format_version`, sorted keys
//! and floats rounded to 12 significant digits, so the same input always
//! serializes to the same bytes.

mod anchors;
mod applog;
mod corpus;
mod json;
mod table;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::domain::Violation;
use crate::ssr::SsrError;

pub use anchors::{
    anchor_sets_from_str, anchor_sets_to_string, default_anchor_sets, load_anchor_sets,
    save_anchor_sets,
};
pub use applog::{AppendLog, LogEntry};
pub use corpus::{corpus_from_str, corpus_to_string, load_corpus, save_corpus};
pub use json::{
    load_report, report_from_str, report_to_string, round_significant, save_report,
    to_canonical_json,
};
pub use table::{import_table, import_table_from_reader};

/// Version written into, and required from, every structured file.
pub const FORMAT_VERSION: u32 = 1;

/// Environment variable naming the root that relative data paths resolve against.
pub const DATA_ROOT_ENV: &str = "SYNPANEL_DATA";

#[derive(Debug, Error)]
pub enum PanelIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: parse error at line {line}, column {column}: {message}")]
    Parse {
        context: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{context}: unsupported format version {found:?} (supported: {supported})")]
    Version {
        context: String,
        found: Option<u64>,
        supported: u32,
    },
    #[error("survey '{survey}'{}, field '{field}': {message}", consumer.as_ref().map(|c| format!(", consumer '{c}'")).unwrap_or_default())]
    Field {
        survey: String,
        consumer: Option<String>,
        field: String,
        message: String,
    },
    #[error("corpus violates {} invariant(s): {}", .0.len(), .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("anchor set file: {0}")]
    Anchors(String),
    #[error(transparent)]
    AnchorSet(#[from] SsrError),
    #[error("table row {row}: {message}")]
    Table { row: usize, message: String },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl PanelIoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PanelIoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, e: &serde_json::Error) -> Self {
        PanelIoError::Parse {
            context: context.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Resolves a relative path against `$SYNPANEL_DATA` when that is set.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) if !root.is_empty() => Path::new(&root).join(path),
        _ => path.to_path_buf(),
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, PanelIoError> {
    std::fs::read_to_string(path).map_err(|e| PanelIoError::io(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), PanelIoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| PanelIoError::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| PanelIoError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| PanelIoError::io(path, e))
}

/// Checks the `format_version` field before the full parse.
pub(crate) fn check_version(context: &str, text: &str) -> Result<(), PanelIoError> {
    #[derive(serde::Deserialize)]
    struct Probe {
        format_version: Option<serde_json::Value>,
    }
    let probe: Probe = serde_json::from_str(text).map_err(|e| PanelIoError::parse(context, &e))?;
    let found = probe.format_version.as_ref().and_then(|v| v.as_u64());
    if found != Some(FORMAT_VERSION as u64) {
        return Err(PanelIoError::Version {
            context: context.to_string(),
            found,
            supported: FORMAT_VERSION,
        });
    }
    Ok(())
}
