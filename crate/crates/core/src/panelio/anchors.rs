use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_version, read_file, to_canonical_json, write_file, PanelIoError, FORMAT_VERSION,
};
use crate::ssr::AnchorSet;

const DEFAULT_BUNDLE: &str = include_str!("../../assets/anchors.json");

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorFile {
    format_version: u32,
    sets: Vec<AnchorEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorEntry {
    id: u32,
    statements: BTreeMap<String, String>,
}

pub fn anchor_sets_from_str(text: &str) -> Result<Vec<AnchorSet>, PanelIoError> {
    check_version("anchor sets", text)?;
    let file: AnchorFile =
        serde_json::from_str(text).map_err(|e| PanelIoError::parse("anchor sets", &e))?;
    if file.sets.is_empty() {
        return Err(PanelIoError::Anchors("file contains no sets".into()));
    }
    let mut ids = std::collections::HashSet::new();
    file.sets
        .into_iter()
        .map(|entry| {
            if !ids.insert(entry.id) {
                return Err(PanelIoError::Anchors(format!(
                    "duplicate set id {}",
                    entry.id
                )));
            }
            if let Some(bad) = entry
                .statements
                .keys()
                .find(|k| !matches!(k.as_str(), "1" | "2" | "3" | "4" | "5"))
            {
                return Err(PanelIoError::Anchors(format!(
                    "set {}: statement key '{bad}' is not a rating 1..5",
                    entry.id
                )));
            }
            let statements: Vec<String> = entry.statements.into_values().collect();
            Ok(AnchorSet::from_slice(entry.id, &statements)?)
        })
        .collect()
}

pub fn anchor_sets_to_string(sets: &[AnchorSet]) -> Result<String, PanelIoError> {
    let file = AnchorFile {
        format_version: FORMAT_VERSION,
        sets: sets
            .iter()
            .map(|s| AnchorEntry {
                id: s.id,
                statements: s
                    .statements()
                    .iter()
                    .enumerate()
                    .map(|(i, t)| ((i + 1).to_string(), t.clone()))
                    .collect(),
            })
            .collect(),
    };
    to_canonical_json(&file)
}

/// The bundled six sets.
pub fn default_anchor_sets() -> Vec<AnchorSet> {
    anchor_sets_from_str(DEFAULT_BUNDLE).expect("bundled anchor sets are valid")
}

/// Loads anchor sets from `path`, or the bundled default when `None`.
pub fn load_anchor_sets(path: Option<&Path>) -> Result<Vec<AnchorSet>, PanelIoError> {
    match path {
        None => Ok(default_anchor_sets()),
        Some(p) => anchor_sets_from_str(&read_file(p)?),
    }
}

pub fn save_anchor_sets(sets: &[AnchorSet], path: &Path) -> Result<(), PanelIoError> {
    write_file(path, &anchor_sets_to_string(sets)?)
}
