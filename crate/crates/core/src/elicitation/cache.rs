//! Response and embedding caches backed by append-only logs.
//!
//! Both caches keep everything in memory behind a `RwLock` and mirror new
//! entries to an [`AppendLog`] when opened on disk. The first value stored
//! for a key wins, so concurrent misses on the same key converge.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::provider::Stage;
use crate::panelio::{AppendLog, LogEntry, PanelIoError};
use crate::ssr::EmbeddingVector;

pub const RESPONSE_LOG: &str = "responses.jsonl";
pub const EMBEDDING_LOG: &str = "embeddings.jsonl";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    pub entries: usize,
}

struct Store<V> {
    map: RwLock<HashMap<String, V>>,
    log: Option<AppendLog>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<V: Clone + Serialize + DeserializeOwned> Store<V> {
    fn in_memory() -> Self {
        Store {
            map: RwLock::new(HashMap::new()),
            log: None,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    fn open(path: &Path) -> Result<Self, PanelIoError> {
        let (log, entries) = AppendLog::open(path)?;
        let mut map = HashMap::with_capacity(entries.len());
        for e in entries {
            match serde_json::from_value::<V>(e.value) {
                Ok(v) => {
                    map.insert(e.key, v);
                }
                Err(err) => log::warn!("{}: dropping entry '{}': {err}", path.display(), e.key),
            }
        }
        Ok(Store {
            map: RwLock::new(map),
            log: Some(log),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    fn get(&self, key: &str) -> Option<V> {
        let found = self
            .map
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(key)
            .cloned();
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    /// Stores `value` unless the key is already present; returns the stored value.
    fn insert(&self, key: String, value: V) -> Result<V, PanelIoError> {
        let mut map = self.map.write().unwrap_or_else(|p| p.into_inner());
        if let Some(existing) = map.get(&key) {
            return Ok(existing.clone());
        }
        if let Some(log) = &self.log {
            let json =
                serde_json::to_value(&value).map_err(|e| PanelIoError::Serialize(e.to_string()))?;
            log.append(&LogEntry::now(key.clone(), json))?;
        }
        map.insert(key, value.clone());
        Ok(value)
    }

    fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.map.read().unwrap_or_else(|p| p.into_inner()).len(),
        }
    }
}

/// Identifies one elicitation stage of one (consumer, sample) under a config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseKey<'a> {
    pub survey_id: &'a str,
    pub consumer_id: &'a str,
    pub method: &'a str,
    pub chat_model: &'a str,
    pub llm_temperature: f64,
    pub top_p: f64,
    pub sample_index: u32,
    pub demography_mode: String,
    pub stimulus_mode: String,
    pub stage: Stage,
}

impl<'a> ResponseKey<'a> {
    pub fn new(
        survey_id: &'a str,
        consumer_id: &'a str,
        sample_index: u32,
        stage: Stage,
        cfg: &'a RunConfig,
    ) -> Self {
        ResponseKey {
            survey_id,
            consumer_id,
            method: cfg.method.as_str(),
            chat_model: &cfg.chat_model,
            llm_temperature: cfg.llm_temperature,
            top_p: cfg.top_p,
            sample_index,
            demography_mode: cfg.demography_mode.to_string(),
            stimulus_mode: cfg.stimulus_mode.to_string(),
            stage,
        }
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("response key serializes")
    }
}

/// Raw provider outputs for one stage, one string per attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedAttempts {
    pub outputs: Vec<String>,
}

pub struct ResponseCache(Store<CachedAttempts>);

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache(Store::in_memory())
    }

    pub fn open(path: &Path) -> Result<Self, PanelIoError> {
        Store::open(path).map(ResponseCache)
    }

    pub fn get(&self, key: &ResponseKey<'_>) -> Option<CachedAttempts> {
        self.0.get(&key.encode())
    }

    pub fn insert(
        &self,
        key: &ResponseKey<'_>,
        value: CachedAttempts,
    ) -> Result<CachedAttempts, PanelIoError> {
        self.0.insert(key.encode(), value)
    }

    pub fn stats(&self) -> CacheStats {
        self.0.stats()
    }
}

/// Content hash of an (embedding model, text) pair.
pub fn embedding_key(model: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

pub struct EmbeddingCache(Store<Vec<f64>>);

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache(Store::in_memory())
    }

    pub fn open(path: &Path) -> Result<Self, PanelIoError> {
        Store::open(path).map(EmbeddingCache)
    }

    pub fn get(&self, model: &str, text: &str) -> Option<EmbeddingVector> {
        let values = self.0.get(&embedding_key(model, text))?;
        match EmbeddingVector::new(values) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("ignoring cached embedding: {e}");
                None
            }
        }
    }

    pub fn insert(
        &self,
        model: &str,
        text: &str,
        vector: EmbeddingVector,
    ) -> Result<EmbeddingVector, PanelIoError> {
        let stored = self
            .0
            .insert(embedding_key(model, text), vector.into_values())?;
        Ok(EmbeddingVector::new(stored).expect("stored embeddings were validated on insert"))
    }

    pub fn stats(&self) -> CacheStats {
        self.0.stats()
    }
}
